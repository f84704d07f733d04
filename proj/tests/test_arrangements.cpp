#include <doctest.h>

#include <filesystem>
#include <set>
#include <string>

#include <Eigen/SVD>

#include "cnnconvex/arrangements.hpp"

using namespace ccnn;

namespace {

std::string key_of(const ArrangementSet& s, size_t p) {
  std::string k(reinterpret_cast<const char*>(s.words.data() + p * s.words_per_pattern),
                s.words_per_pattern * sizeof(uint64_t));
  if (!s.argmax.empty())
    k.append(reinterpret_cast<const char*>(s.argmax_row(p)), s.n * sizeof(uint16_t));
  return k;
}

std::set<std::string> pattern_keys(const ArrangementSet& s) {
  std::set<std::string> out;
  for (size_t p = 0; p < s.count(); ++p) out.insert(key_of(s, p));
  return out;
}

/// Independent oracle: dense angular grid over the unit circle of an
/// effectively rank-2 row space.
std::set<std::string> grid_oracle_r2(const MatrixXd& M, int n_dirs = 100000) {
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinV);
  MatrixXd V = svd.matrixV().leftCols(2);
  std::set<std::string> out;
  int rows = static_cast<int>(M.rows());
  std::vector<uint64_t> bits((rows + 63) / 64);
  for (int t = 0; t < n_dirs; ++t) {
    double a = 2 * M_PI * t / n_dirs;
    VectorXd w = V * (VectorXd(2) << std::cos(a), std::sin(a)).finished();
    std::fill(bits.begin(), bits.end(), 0);
    VectorXd pre = M * w;
    for (int i = 0; i < rows; ++i)
      if (pre[i] >= 0) bits[i >> 6] |= 1ull << (i & 63);
    out.insert(std::string(reinterpret_cast<const char*>(bits.data()),
                           bits.size() * sizeof(uint64_t)));
  }
  return out;
}

}  // namespace

TEST_CASE("upper_bound exact values") {
  CHECK(upper_bound(1, 1) == 2);
  CHECK(upper_bound(3, 2) == 6);
  CHECK(upper_bound(108, 3) == 11558);
  CHECK(upper_bound(108, 3) == 2 * (1 + 107 + mpz_class(107) * 106 / 2));
  // large inputs stay exact
  mpz_class big = upper_bound(10000, 8);
  CHECK(big > 0);
  CHECK_THROWS_AS(upper_bound(0, 1), std::invalid_argument);
}

TEST_CASE("enumerate_sampled basics") {
  Rng rng(0);
  SUBCASE("single row gives exactly two patterns") {
    MatrixXd M(1, 3);
    M << 1.0, 2.0, -0.5;
    ArrangementSet s = enumerate_sampled(M, 1, 0);
    CHECK(s.count() == 2);
    ArrangementSet s2 = enumerate_sampled(M, 50, 1);
    CHECK(s2.count() == 2);
  }
  SUBCASE("rank-1 matrix gives exactly two patterns") {
    MatrixXd M = rng.gaussian_vec(12) * rng.gaussian_vec(4).transpose();
    ArrangementSet s = enumerate_sampled(M, 200, 0);
    CHECK(s.count() == 2);
  }
  SUBCASE("r=2 sampling saturates to the exact count") {
    MatrixXd M(12, 2);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 2; ++j) M(i, j) = rng.gaussian();
    ArrangementSet s = enumerate_sampled(M, 10000, 3);
    ArrangementSet e = enumerate_exact(M);
    CHECK(s.count() == e.count());
    CHECK(pattern_keys(s) == pattern_keys(e));
  }
}

TEST_CASE("witness reproducibility") {
  Rng rng(7);
  MatrixXd M(20, 3);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 3; ++j) M(i, j) = rng.gaussian();
  for (const ArrangementSet& s : {enumerate_sampled(M, 500, 5), enumerate_exact(M)}) {
    REQUIRE(s.gen_len == 3);
    for (size_t p = 0; p < s.count(); ++p) {
      Eigen::Map<const VectorXd> w(s.generator(p), 3);
      VectorXd pre = M * w;
      for (int i = 0; i < 20; ++i) CHECK(s.bit(p, i) == (pre[i] >= 0));
    }
  }
}

TEST_CASE("budget monotonicity") {
  Rng rng(9);
  MatrixXd M(15, 3);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 3; ++j) M(i, j) = rng.gaussian();
  ArrangementSet small = enumerate_sampled(M, 40, 11);
  ArrangementSet big = enumerate_sampled(M, 160, 11);
  auto ks = pattern_keys(small), kb = pattern_keys(big);
  CHECK(std::includes(kb.begin(), kb.end(), ks.begin(), ks.end()));
}

TEST_CASE("enumerate_exact r<=2 matches the grid oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    int rows = 3 + static_cast<int>(rng.below(10));
    MatrixXd M(rows, 2);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < 2; ++j) M(i, j) = rng.gaussian();
    ArrangementSet e = enumerate_exact(M);
    auto oracle = grid_oracle_r2(M, 100000);
    CHECK(pattern_keys(e) == oracle);
    CHECK(mpz_class(static_cast<unsigned long>(e.count())) <= upper_bound(rows, 2));
  }
}

TEST_CASE("enumerate_exact specifics") {
  SUBCASE("3 rows in general position, r=2 -> 6 cells") {
    MatrixXd M(3, 2);
    M << 1, 0, 0, 1, 1, 1;
    ArrangementSet e = enumerate_exact(M);
    CHECK(e.count() == 6);
    CHECK(e.exact);
  }
  SUBCASE("duplicated rows do not change the count") {
    Rng rng(2);
    MatrixXd M(5, 2);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 2; ++j) M(i, j) = rng.gaussian();
    MatrixXd Mdup(6, 2);
    Mdup.topRows(5) = M;
    Mdup.row(5) = M.row(2);
    CHECK(enumerate_exact(M).count() == enumerate_exact(Mdup).count());
  }
  SUBCASE("r=3 equals the Cover count in general position") {
    Rng rng(4);
    MatrixXd M(25, 3);
    for (int i = 0; i < 25; ++i)
      for (int j = 0; j < 3; ++j) M(i, j) = rng.gaussian();
    ArrangementSet e = enumerate_exact(M);
    CHECK(mpz_class(static_cast<unsigned long>(e.count())) == upper_bound(25, 3));
  }
  SUBCASE("rank guard") {
    Rng rng(6);
    MatrixXd M(10, 5);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 5; ++j) M(i, j) = rng.gaussian();
    CHECK_THROWS_AS(enumerate_exact(M), std::invalid_argument);
  }
}

TEST_CASE("conv arrangements") {
  DataBundle b = gen_synthetic(6, 20, 0, VectorXd::Ones(6));
  PatchSet ps = extract_patches(b, 3, 1);
  SUBCASE("K=1 reduces to plain arrangements of X_1") {
    PatchSet one = extract_patches(b, 20, 1);
    ArrangementSet conv = conv_arrangements(one, 300, 3, false);
    ArrangementSet plain = enumerate_sampled(b.X, 300, 3);
    CHECK(conv.K == 1);
    CHECK(conv.count() == plain.count());
  }
  SUBCASE("exact count respects the bound") {
    ArrangementSet conv = conv_arrangements(ps, 0, 0, true);
    CHECK(conv.exact);
    CHECK(conv.K == 18);
    CHECK(mpz_class(static_cast<unsigned long>(conv.count())) <= upper_bound(108, 3));
  }
}

TEST_CASE("cconv arrangements") {
  DataBundle b = gen_synthetic(6, 20, 0, VectorXd::Ones(6));
  SpectralFeatures sf = spectral_features(b);
  SUBCASE("full row rank data enumerates all sign vectors exactly") {
    ArrangementSet s = cconv_arrangements(sf, 5000, 0);
    CHECK(s.exact);
    CHECK(s.count() == 64);
    CHECK(mpz_class(static_cast<unsigned long>(s.count())) <= upper_bound(6, 6));
  }
  SUBCASE("conjugate-symmetric c reproduces the real pattern") {
    Rng rng(13);
    VectorXd w = rng.gaussian_vec(20);
    VectorXcd c = sf.F.adjoint() * w.cast<std::complex<double>>();
    VectorXd real_pre = b.X * w;
    VectorXcd spec_pre = sf.Xt * c;
    CHECK(spec_pre.imag().cwiseAbs().maxCoeff() < 1e-10);
    CHECK((spec_pre.real() - real_pre).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("n=1 gives two patterns") {
    DataBundle tiny = gen_synthetic(1, 5, 3, VectorXd::Ones(1));
    ArrangementSet s = cconv_arrangements(spectral_features(tiny), 100, 0);
    CHECK(s.count() == 2);
  }
}

TEST_CASE("maxpool arrangements") {
  SUBCASE("K=1: partition is trivially all-ones") {
    DataBundle b = gen_synthetic(5, 2, 1, VectorXd::Ones(5));
    PatchSet ps = extract_patches(b, 2, 1);
    ArrangementSet s = maxpool_arrangements(ps, 100, 0);
    for (size_t p = 0; p < s.count(); ++p)
      for (int i = 0; i < 5; ++i) CHECK(s.argmax_row(p)[i] == 0);
  }
  SUBCASE("identical patches tie-break to the first index") {
    DataBundle b = gen_synthetic(4, 2, 2, VectorXd::Ones(4));
    MatrixXd X(4, 4);
    X << b.X, b.X;  // two identical patches
    PatchSet ps = extract_patches(X, 2, 2);
    REQUIRE(ps.K == 2);
    ArrangementSet s = maxpool_arrangements(ps, 200, 0);
    for (size_t p = 0; p < s.count(); ++p)
      for (int i = 0; i < 4; ++i) CHECK(s.argmax_row(p)[i] == 0);
  }
  SUBCASE("argmax masks always partition the samples") {
    DataBundle b = gen_synthetic(4, 4, 3, VectorXd::Ones(4));
    PatchSet ps = extract_patches(b, 2, 2);
    ArrangementSet s = maxpool_arrangements(ps, 500, 1);
    CHECK(s.exact);  // h=2 joint boundaries are rank <= 2
    for (size_t p = 0; p < s.count(); ++p)
      for (int i = 0; i < 4; ++i) CHECK(s.argmax_row(p)[i] < ps.K);
  }
  SUBCASE("h=2 joint patterns match an angular grid oracle") {
    DataBundle b = gen_synthetic(4, 4, 7, VectorXd::Ones(4));
    PatchSet ps = extract_patches(b, 2, 2);
    ArrangementSet s = maxpool_arrangements(ps, 0, 0);
    std::set<std::string> oracle;
    for (int t = 0; t < 100000; ++t) {
      double a = 2 * M_PI * t / 100000;
      VectorXd u(2);
      u << std::cos(a), std::sin(a);
      std::string key;
      std::vector<uint64_t> bits((ps.n * ps.K + 63) / 64, 0);
      MatrixXd pre(ps.n, ps.K);
      for (int k = 0; k < ps.K; ++k) pre.col(k) = ps.patches[k] * u;
      for (int k = 0; k < ps.K; ++k)
        for (int i = 0; i < ps.n; ++i)
          if (pre(i, k) >= 0) bits[(k * ps.n + i) >> 6] |= 1ull << ((k * ps.n + i) & 63);
      key.assign(reinterpret_cast<const char*>(bits.data()), bits.size() * sizeof(uint64_t));
      for (int i = 0; i < ps.n; ++i) {
        uint16_t best = 0;
        for (int k = 1; k < ps.K; ++k)
          if (pre(i, k) > pre(i, best)) best = uint16_t(k);
        key.append(reinterpret_cast<const char*>(&best), sizeof(best));
      }
      oracle.insert(key);
    }
    CHECK(pattern_keys(s) == oracle);
  }
}

TEST_CASE("twolevel arrangements") {
  DataBundle b = gen_synthetic(4, 4, 5, VectorXd::Ones(4));
  PatchSet ps = extract_patches(b, 2, 2);
  ArrangementSet layer1;
  ArrangementSet s = twolevel_arrangements(ps, layer1, 2000, 0);
  CHECK(s.kind == ArrKind::TwoLevel);
  CHECK(s.mask_len == 4 * 2 + 2 + 4);
  // crude cardinality ceiling: P1 * 2^K * 2^n
  ArrangementSet conv = conv_arrangements(ps, 0, 0, true);
  CHECK(s.count() <= conv.count() * 4 * 16);

  SUBCASE("stored bits are reproducible from the (u, w1) witness") {
    StackedPatchMatrix sm = stack_patches(ps);
    for (size_t p = 0; p < s.count(); ++p) {
      Eigen::Map<const VectorXd> gen(s.generator(p), s.gen_len);
      VectorXd u = gen.head(2), w1 = gen.tail(2);
      VectorXd pre1 = sm.M * u;
      for (int i = 0; i < 8; ++i) CHECK(s.bit(p, i) == (pre1[i] >= 0));
      for (int k = 0; k < 2; ++k) CHECK(s.bit(p, 8 + k) == (w1[k] >= 0));
      VectorXd pre2 = VectorXd::Zero(4);
      for (int k = 0; k < 2; ++k) pre2 += (ps.patches[k] * u).cwiseMax(0.0) * w1[k];
      for (int i = 0; i < 4; ++i) CHECK(s.bit(p, 10 + i) == (pre2[i] >= 0));
    }
  }

  SUBCASE("negating w1 flips the sign bits and complements the second layer") {
    StackedPatchMatrix sm = stack_patches(ps);
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      VectorXd u = rng.gaussian_vec(2), w1 = rng.gaussian_vec(2);
      VectorXd pre2 = VectorXd::Zero(4);
      for (int k = 0; k < 2; ++k) pre2 += (ps.patches[k] * u).cwiseMax(0.0) * w1[k];
      for (int k = 0; k < 2; ++k) CHECK((w1[k] >= 0) == !(-w1[k] >= 0 && w1[k] != 0));
      for (int i = 0; i < 4; ++i) {
        bool s_pos = pre2[i] >= 0, s_neg = -pre2[i] >= 0;
        if (pre2[i] != 0) CHECK(s_pos == !s_neg);
      }
    }
  }
}

TEST_CASE("arrangement persistence round trip") {
  DataBundle b = gen_synthetic(4, 4, 5, VectorXd::Ones(4));
  PatchSet ps = extract_patches(b, 2, 2);
  std::string path =
      (std::filesystem::temp_directory_path() / "ccnn_test_arr.bin").string();
  for (ArrangementSet s : {conv_arrangements(ps, 100, 1, false), maxpool_arrangements(ps, 50, 2),
                           twolevel_arrangements(ps, ArrangementSet{}, 100, 3)}) {
    save_arrangements(s, path);
    ArrangementSet r = load_arrangements(path);
    CHECK(r.kind == s.kind);
    CHECK(r.count() == s.count());
    CHECK(r.words == s.words);
    CHECK(r.generators == s.generators);
    CHECK(r.argmax == s.argmax);
    CHECK(r.exact == s.exact);
    CHECK(r.hash() == s.hash());
  }
}
