#include "cnnconvex/arrangements.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace ccnn {

std::string to_string(ArrKind k) {
  switch (k) {
    case ArrKind::Plain: return "plain";
    case ArrKind::Conv: return "conv";
    case ArrKind::CConv: return "cconv";
    case ArrKind::MaxPool: return "maxpool";
    case ArrKind::TwoLevel: return "twolevel";
  }
  return "plain";
}

ArrKind arr_kind_from_string(const std::string& s) {
  if (s == "plain") return ArrKind::Plain;
  if (s == "conv") return ArrKind::Conv;
  if (s == "cconv") return ArrKind::CConv;
  if (s == "maxpool") return ArrKind::MaxPool;
  if (s == "twolevel") return ArrKind::TwoLevel;
  throw std::invalid_argument("unknown arrangement kind: " + s);
}

mpz_class upper_bound(long n_rows, long r) {
  if (n_rows < 1 || r < 1) throw std::invalid_argument("upper_bound: need n_rows, r >= 1");
  mpz_class total = 0;
  for (long k = 0; k <= r - 1; ++k) {
    mpz_class c;
    mpz_bin_uiui(c.get_mpz_t(), static_cast<unsigned long>(n_rows - 1),
                 static_cast<unsigned long>(k));
    total += c;
  }
  return 2 * total;
}

uint64_t ArrangementSet::hash() const {
  uint64_t h = fnv1a_str(to_string(kind));
  int hdr[4] = {n, K, mask_len, static_cast<int>(exact)};
  h = fnv1a(hdr, sizeof(hdr), h);
  h = fnv1a(words.data(), words.size() * sizeof(uint64_t), h);
  h = fnv1a(generators.data(), generators.size() * sizeof(double), h);
  h = fnv1a(argmax.data(), argmax.size() * sizeof(uint16_t), h);
  return h;
}

void ArrangementSet::finalize_sorted() {
  size_t cnt = count();
  if (cnt < 2) return;
  std::vector<size_t> order(cnt);
  std::iota(order.begin(), order.end(), 0);
  const int wpp = words_per_pattern;
  const int an = argmax.empty() ? 0 : n;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    int c = std::memcmp(words.data() + a * wpp, words.data() + b * wpp, wpp * sizeof(uint64_t));
    if (c != 0) return c < 0;
    if (an)
      return std::memcmp(argmax.data() + a * n, argmax.data() + b * n, an * sizeof(uint16_t)) < 0;
    return false;
  });
  std::vector<uint64_t> w2(words.size());
  std::vector<double> g2(generators.size());
  std::vector<uint16_t> a2(argmax.size());
  for (size_t i = 0; i < cnt; ++i) {
    size_t s = order[i];
    std::copy_n(words.data() + s * wpp, wpp, w2.data() + i * wpp);
    std::copy_n(generators.data() + s * gen_len, gen_len, g2.data() + i * gen_len);
    if (an) std::copy_n(argmax.data() + s * n, n, a2.data() + i * n);
  }
  words.swap(w2);
  generators.swap(g2);
  argmax.swap(a2);
}

namespace {

constexpr int kProbeNearest = 6;

struct SetBuilder {
  ArrangementSet set;
  std::unordered_map<std::string, size_t> seen;
  int wpp = 0;
  int argmax_n = 0;  // entries per pattern, 0 when unused

  void init(ArrKind kind, int n, int K, int mask_len, int gen_len, bool with_argmax) {
    set.kind = kind;
    set.n = n;
    set.K = K;
    set.mask_len = mask_len;
    set.gen_len = gen_len;
    wpp = (mask_len + 63) / 64;
    set.words_per_pattern = wpp;
    argmax_n = with_argmax ? n : 0;
  }

  bool add(const std::vector<uint64_t>& w, const uint16_t* am, const double* gen) {
    std::string key(reinterpret_cast<const char*>(w.data()), wpp * sizeof(uint64_t));
    if (argmax_n)
      key.append(reinterpret_cast<const char*>(am), argmax_n * sizeof(uint16_t));
    auto [it, inserted] = seen.emplace(std::move(key), set.count());
    if (!inserted) return false;
    set.words.insert(set.words.end(), w.begin(), w.begin() + wpp);
    set.generators.insert(set.generators.end(), gen, gen + set.gen_len);
    if (argmax_n) set.argmax.insert(set.argmax.end(), am, am + argmax_n);
    return true;
  }
};

void set_bit(std::vector<uint64_t>& w, int i, bool v) {
  if (v)
    w[i >> 6] |= (1ull << (i & 63));
  else
    w[i >> 6] &= ~(1ull << (i & 63));
}

/// Deterministic tiny perturbation derived from the vector's bytes; used when
/// a generator lands exactly on a hyperplane, so the boundary pattern is not
/// recorded. Does not consume the shared random stream (keeps budget
/// monotonicity intact).
void hash_perturb(VectorXd& w, double mag) {
  uint64_t h = fnv1a(w.data(), sizeof(double) * w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    h = mix64(h + static_cast<uint64_t>(i));
    double u = (h >> 11) * 0x1.0p-53;
    w[i] += mag * (2.0 * u - 1.0);
  }
}

/// Computes the sign pattern of M*w (bit set <=> >= 0). Perturbs w when any
/// pre-activation is exactly zero on a nonzero row; the adjusted w is written
/// back so the stored witness reproduces the stored bits.
void pattern_of(const MatrixXd& M, VectorXd& w, std::vector<uint64_t>& bits) {
  const int rows = static_cast<int>(M.rows());
  for (int attempt = 0; attempt < 3; ++attempt) {
    VectorXd pre = M * w;
    bool boundary = false;
    for (int i = 0; i < rows; ++i)
      if (pre[i] == 0.0 && M.row(i).squaredNorm() > 0.0) {
        boundary = true;
        break;
      }
    if (!boundary) {
      std::fill(bits.begin(), bits.end(), 0);
      for (int i = 0; i < rows; ++i) set_bit(bits, i, pre[i] >= 0.0);
      return;
    }
    hash_perturb(w, 1e-12 * (1.0 + w.norm()));
  }
  VectorXd pre = M * w;
  std::fill(bits.begin(), bits.end(), 0);
  for (int i = 0; i < rows; ++i) set_bit(bits, i, pre[i] >= 0.0);
}

/// Distinct unit normals of the nonzero rows (coincident and antipodal rows
/// merged); probe geometry for the sampled enumerators.
std::vector<VectorXd> distinct_normals(const MatrixXd& M) {
  std::vector<VectorXd> out;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    double nrm = M.row(i).norm();
    if (nrm <= 0.0) continue;
    VectorXd q = M.row(i).transpose() / nrm;
    bool dup = false;
    for (const auto& u : out)
      if (std::abs(std::abs(q.dot(u)) - 1.0) < 1e-12) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(q);
  }
  return out;
}

/// Emits probe generators around w: single reflections across the nearest
/// hyperplanes plus perturbed directions near pairwise intersections. Each
/// probe is handed to `process`, which extracts and stores its own pattern.
template <typename Process>
void local_probes(const std::vector<VectorXd>& Q, const VectorXd& w, Process&& process) {
  const int nq = static_cast<int>(Q.size());
  const int h = static_cast<int>(w.size());
  if (nq == 0 || h < 2) return;
  VectorXd wh = w / w.norm();
  std::vector<std::pair<double, int>> marg(nq);
  for (int i = 0; i < nq; ++i) marg[i] = {std::abs(Q[i].dot(wh)), i};
  int T = std::min(kProbeNearest, nq);
  std::partial_sort(marg.begin(), marg.begin() + T, marg.end());
  for (int a = 0; a < T; ++a) {
    const VectorXd& q = Q[marg[a].second];
    process(VectorXd(wh - 2.0 * q.dot(wh) * q));
  }
  for (int a = 0; a < T; ++a) {
    for (int b = a + 1; b < T; ++b) {
      const VectorXd& qa = Q[marg[a].second];
      const VectorXd& qb = Q[marg[b].second];
      // nearest point of the codim-2 intersection: project w off span{qa,qb}
      VectorXd qb_orth = qb - qa.dot(qb) * qa;
      double nb = qb_orth.norm();
      if (nb < 1e-9) continue;
      qb_orth /= nb;
      VectorXd v = wh - qa.dot(wh) * qa - qb_orth.dot(wh) * qb_orth;
      double nv = v.norm();
      if (nv < 1e-9) continue;
      v /= nv;
      double delta = 1.0;
      for (int l = 0; l < nq; ++l) {
        if (l == marg[a].second || l == marg[b].second) continue;
        delta = std::min(delta, std::abs(Q[l].dot(v)));
      }
      double eps = std::clamp(delta / 4.0, 1e-13, 1e-2);
      for (int s1 = -1; s1 <= 1; s1 += 2)
        for (int s2 = -1; s2 <= 1; s2 += 2)
          process(VectorXd(v + eps * (s1 * qa + s2 * qb)));
    }
  }
}

}  // namespace

ArrangementSet enumerate_sampled(const MatrixXd& M, int64_t budget, uint64_t seed) {
  if (budget < 1) throw std::invalid_argument("enumerate_sampled: budget must be >= 1");
  const int rows = static_cast<int>(M.rows());
  const int h = static_cast<int>(M.cols());
  SetBuilder b;
  b.init(ArrKind::Plain, rows, 1, rows, h, false);
  b.set.seed = seed;
  b.set.budget_used = budget;
  b.set.exact = false;
  std::vector<VectorXd> Q = distinct_normals(M);
  Rng rng(seed);
  std::vector<uint64_t> bits(b.wpp, 0);
  auto process = [&](VectorXd w) {
    if (w.squaredNorm() == 0.0) return;
    pattern_of(M, w, bits);
    b.add(bits, nullptr, w.data());
  };
  for (int64_t t = 0; t < budget; ++t) {
    VectorXd w = rng.gaussian_vec(h);
    process(w);
    process(-w);
    local_probes(Q, w, process);
  }
  b.set.finalize_sorted();
  return b.set;
}

namespace {

/// Exact cells for rows projected to.<= 2 dimensions, via the angular sweep.
/// R: rows x r coordinates (r in {1,2}); bits are computed on R directly and
/// witnesses are r-dimensional (caller lifts them).
void exact_low_rank(const MatrixXd& R, int r, std::vector<VectorXd>& witnesses) {
  const int rows = static_cast<int>(R.rows());
  witnesses.clear();
  if (r <= 0) {
    witnesses.push_back(VectorXd::Ones(std::max(r, 1)));
    return;
  }
  if (r == 1) {
    VectorXd z(1);
    z[0] = 1.0;
    witnesses.push_back(z);
    z[0] = -1.0;
    witnesses.push_back(z);
    return;
  }
  std::vector<double> bounds;
  for (int i = 0; i < rows; ++i) {
    if (R.row(i).squaredNorm() == 0.0) continue;
    double phi = std::atan2(R(i, 1), R(i, 0));
    for (double t : {phi + M_PI / 2, phi - M_PI / 2}) {
      double a = std::fmod(t, 2 * M_PI);
      if (a < 0) a += 2 * M_PI;
      bounds.push_back(a);
    }
  }
  if (bounds.empty()) {
    witnesses.push_back(VectorXd::Ones(2).normalized());
    return;
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end(),
                           [](double a, double c) { return std::abs(a - c) < 1e-13; }),
               bounds.end());
  const size_t nb = bounds.size();
  for (size_t i = 0; i < nb; ++i) {
    double next = (i + 1 < nb) ? bounds[i + 1] : bounds[0] + 2 * M_PI;
    double mid = 0.5 * (bounds[i] + next);
    VectorXd z(2);
    z << std::cos(mid), std::sin(mid);
    witnesses.push_back(z);
  }
}

void exact_rank3(const MatrixXd& R, std::vector<VectorXd>& witnesses) {
  witnesses.clear();
  std::vector<VectorXd> Q = distinct_normals(R);
  const int nq = static_cast<int>(Q.size());
  if (nq == 0) {
    witnesses.push_back(VectorXd::Ones(3).normalized());
    return;
  }
  if (nq == 1) {
    witnesses.push_back(Q[0]);
    witnesses.push_back(-Q[0]);
    return;
  }
  using V3 = Eigen::Vector3d;
  for (int i = 0; i < nq; ++i) {
    for (int j = i + 1; j < nq; ++j) {
      V3 qi = Q[i], qj = Q[j];
      V3 v = qi.cross(qj);
      double nv = v.norm();
      if (nv < 1e-14) continue;
      v /= nv;
      double delta = 1.0;
      for (int l = 0; l < nq; ++l) {
        if (l == i || l == j) continue;
        delta = std::min(delta, std::abs(Q[l].dot(v)));
      }
      double eps = std::clamp(delta / 4.0, 1e-13, 1e-2);
      for (int s0 = -1; s0 <= 1; s0 += 2)
        for (int s1 = -1; s1 <= 1; s1 += 2)
          for (int s2 = -1; s2 <= 1; s2 += 2)
            witnesses.push_back(s0 * v + eps * (s1 * qi + s2 * qj));
    }
  }
}

}  // namespace

ArrangementSet enumerate_exact(const MatrixXd& M) {
  const int rows = static_cast<int>(M.rows());
  const int h = static_cast<int>(M.cols());
  if (rows > 10000) throw std::invalid_argument("enumerate_exact: too many rows");
  Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-8 * smax) ++r;
  if (r > 3) throw std::invalid_argument("enumerate_exact: rank too large (r > 3)");

  SetBuilder b;
  b.init(ArrKind::Plain, rows, 1, rows, h, false);
  b.set.exact = true;

  std::vector<uint64_t> bits(b.wpp, 0);
  if (r == 0) {
    std::fill(bits.begin(), bits.end(), 0);
    for (int i = 0; i < rows; ++i) set_bit(bits, i, true);
    VectorXd w = VectorXd::Zero(h);
    if (h > 0) w[0] = 1.0;
    b.add(bits, nullptr, w.data());
    b.set.finalize_sorted();
    return b.set;
  }

  MatrixXd R = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
  MatrixXd V = svd.matrixV().leftCols(r);
  std::vector<VectorXd> zs;
  if (r <= 2)
    exact_low_rank(R, r, zs);
  else
    exact_rank3(R, zs);
  for (const VectorXd& z : zs) {
    VectorXd w = V * z;
    pattern_of(M, w, bits);
    b.add(bits, nullptr, w.data());
  }
  b.set.finalize_sorted();
  return b.set;
}

ArrangementSet conv_arrangements(const PatchSet& ps, int64_t budget, uint64_t seed, bool exact) {
  StackedPatchMatrix sm = stack_patches(ps);
  ArrangementSet s = exact ? enumerate_exact(sm.M) : enumerate_sampled(sm.M, budget, seed);
  s.kind = ArrKind::Conv;
  s.n = ps.n;
  s.K = ps.K;
  s.seed = seed;
  if (!exact) s.budget_used = budget;
  return s;
}

ArrangementSet cconv_arrangements(const SpectralFeatures& sf, int64_t budget, uint64_t seed) {
  // patterns of Re(Xt c) over conjugate-symmetric c coincide with patterns of
  // X w over real w (c = F^H w); enumerate on the real side.
  MatrixXd X = (sf.Xt * sf.F.adjoint()).real();
  const int n = sf.n;
  Eigen::JacobiSVD<MatrixXd> svd(X);
  const VectorXd& sv = svd.singularValues();
  bool full_row_rank = sv.size() == n && n <= 20 && sv[n - 1] > 1e-8 * sv[0];
  if (full_row_rank) {
    SetBuilder b;
    b.init(ArrKind::CConv, n, 1, n, sf.d, false);
    b.set.exact = true;
    b.set.seed = seed;
    Eigen::LLT<MatrixXd> gram((X * X.transpose()).eval());
    std::vector<uint64_t> bits(b.wpp, 0);
    for (uint64_t s = 0; s < (1ull << n); ++s) {
      VectorXd sgn(n);
      for (int i = 0; i < n; ++i) sgn[i] = (s >> i) & 1 ? 1.0 : -1.0;
      VectorXd w = X.transpose() * gram.solve(sgn);
      pattern_of(X, w, bits);
      b.add(bits, nullptr, w.data());
    }
    b.set.finalize_sorted();
    return b.set;
  }
  ArrangementSet s = enumerate_sampled(X, budget, seed);
  s.kind = ArrKind::CConv;
  return s;
}

namespace {

/// Extracts the joint max-pool pattern for generator u: per-patch relu bits
/// plus the raw-preactivation argmax partition (ties break to the lowest
/// patch index).
void maxpool_pattern(const PatchSet& ps, VectorXd& u, std::vector<uint64_t>& bits,
                     std::vector<uint16_t>& am) {
  const int n = ps.n, K = ps.K;
  for (int attempt = 0;; ++attempt) {
    MatrixXd pre(n, K);
    for (int k = 0; k < K; ++k) pre.col(k) = ps.patches[k] * u;
    bool boundary = false;
    for (int i = 0; i < n && !boundary; ++i)
      for (int k = 0; k < K && !boundary; ++k) {
        if (pre(i, k) == 0.0 && ps.patches[k].row(i).squaredNorm() > 0.0) boundary = true;
        for (int j = k + 1; j < K && !boundary; ++j)
          if (pre(i, k) == pre(i, j) &&
              (ps.patches[k].row(i) - ps.patches[j].row(i)).squaredNorm() > 0.0)
            boundary = true;
      }
    if (!boundary || attempt >= 2) {
      std::fill(bits.begin(), bits.end(), 0);
      for (int k = 0; k < K; ++k)
        for (int i = 0; i < n; ++i) set_bit(bits, k * n + i, pre(i, k) >= 0.0);
      for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int k = 1; k < K; ++k)
          if (pre(i, k) > pre(i, best)) best = k;
        am[i] = static_cast<uint16_t>(best);
      }
      return;
    }
    hash_perturb(u, 1e-12 * (1.0 + u.norm()));
  }
}

MatrixXd maxpool_boundary_rows(const PatchSet& ps) {
  const int n = ps.n, K = ps.K, h = ps.h;
  int extra = n * K * (K - 1) / 2;
  MatrixXd B(n * K + extra, h);
  for (int k = 0; k < K; ++k) B.middleRows(k * n, n) = ps.patches[k];
  int row = n * K;
  for (int k = 0; k < K; ++k)
    for (int j = k + 1; j < K; ++j) {
      B.middleRows(row, n) = ps.patches[k] - ps.patches[j];
      row += n;
    }
  return B;
}

}  // namespace

ArrangementSet maxpool_arrangements(const PatchSet& ps, int64_t budget, uint64_t seed) {
  if (ps.K < 1) throw std::invalid_argument("maxpool_arrangements: need K >= 1");
  const int n = ps.n, K = ps.K, h = ps.h;
  SetBuilder b;
  b.init(ArrKind::MaxPool, n, K, n * K, h, true);
  b.set.seed = seed;
  b.set.budget_used = budget;

  MatrixXd G = maxpool_boundary_rows(ps);
  Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  double smax = sv.size() ? sv[0] : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-8 * smax) ++r;

  std::vector<uint64_t> bits(b.wpp, 0);
  std::vector<uint16_t> am(n, 0);
  auto process = [&](VectorXd u) {
    if (u.squaredNorm() == 0.0) return;
    maxpool_pattern(ps, u, bits, am);
    b.add(bits, am.data(), u.data());
  };

  if (r <= 2) {
    // exact path: every joint-pattern boundary is a row of G
    b.set.exact = true;
    MatrixXd R = svd.matrixU().leftCols(std::max(r, 1)) * sv.head(std::max(r, 1)).asDiagonal();
    MatrixXd V = svd.matrixV().leftCols(std::max(r, 1));
    std::vector<VectorXd> zs;
    exact_low_rank(R, r, zs);
    for (const VectorXd& z : zs) process(VectorXd(V * z));
  } else {
    std::vector<VectorXd> Q = distinct_normals(G);
    Rng rng(seed);
    for (int64_t t = 0; t < budget; ++t) {
      VectorXd u = rng.gaussian_vec(h);
      process(u);
      process(-u);
      local_probes(Q, u, process);
    }
  }
  b.set.finalize_sorted();
  return b.set;
}

ArrangementSet twolevel_arrangements(const PatchSet& ps, const ArrangementSet& layer1,
                                     int64_t budget, uint64_t seed) {
  if (layer1.count() > 0 && layer1.kind != ArrKind::Conv)
    throw std::invalid_argument("twolevel_arrangements: layer1 must be a conv set");
  const int n = ps.n, K = ps.K, h = ps.h;
  StackedPatchMatrix sm = stack_patches(ps);
  SetBuilder b;
  b.init(ArrKind::TwoLevel, n, K, n * K + K + n, h + K, false);
  b.set.seed = seed;
  b.set.budget_used = budget;
  b.set.exact = false;

  Rng rng(seed);
  std::vector<uint64_t> l1bits((n * K + 63) / 64, 0);
  std::vector<uint64_t> bits(b.wpp, 0);
  std::vector<double> gen(h + K);
  for (int64_t t = 0; t < budget; ++t) {
    VectorXd u = rng.gaussian_vec(h);
    VectorXd w1 = rng.gaussian_vec(K);
    pattern_of(sm.M, u, l1bits);
    // second layer pre-activation: sum_k relu(X_k u) w1_k
    VectorXd pre2 = VectorXd::Zero(n);
    for (int k = 0; k < K; ++k) pre2 += (ps.patches[k] * u).cwiseMax(0.0) * w1[k];
    std::fill(bits.begin(), bits.end(), 0);
    for (int i = 0; i < n * K; ++i) set_bit(bits, i, (l1bits[i >> 6] >> (i & 63)) & 1u);
    for (int k = 0; k < K; ++k) set_bit(bits, n * K + k, w1[k] >= 0.0);
    for (int i = 0; i < n; ++i) set_bit(bits, n * K + K + i, pre2[i] >= 0.0);
    std::copy_n(u.data(), h, gen.data());
    std::copy_n(w1.data(), K, gen.data() + h);
    b.add(bits, nullptr, gen.data());
  }
  b.set.finalize_sorted();
  return b.set;
}

namespace {

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& s, size_t& off) {
  if (off + sizeof(T) > s.size()) throw std::runtime_error("arrangement file: truncated");
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_arrangements(const ArrangementSet& s, const std::string& path) {
  std::string out;
  out.append("CCNNARR1");
  put<uint32_t>(out, static_cast<uint32_t>(s.kind));
  put<uint32_t>(out, static_cast<uint32_t>(s.n));
  put<uint32_t>(out, static_cast<uint32_t>(s.K));
  put<uint32_t>(out, static_cast<uint32_t>(s.mask_len));
  put<uint32_t>(out, static_cast<uint32_t>(s.gen_len));
  put<uint8_t>(out, s.exact ? 1 : 0);
  put<uint64_t>(out, s.seed);
  put<int64_t>(out, s.budget_used);
  put<uint64_t>(out, static_cast<uint64_t>(s.count()));
  out.append(reinterpret_cast<const char*>(s.words.data()), s.words.size() * sizeof(uint64_t));
  out.append(reinterpret_cast<const char*>(s.generators.data()),
             s.generators.size() * sizeof(double));
  put<uint64_t>(out, static_cast<uint64_t>(s.argmax.size()));
  out.append(reinterpret_cast<const char*>(s.argmax.data()), s.argmax.size() * sizeof(uint16_t));
  write_file(path, out);
}

ArrangementSet load_arrangements(const std::string& path) {
  std::string in = read_file(path);
  if (in.size() < 8 || in.compare(0, 8, "CCNNARR1") != 0)
    throw std::runtime_error("arrangement file: bad magic");
  size_t off = 8;
  ArrangementSet s;
  s.kind = static_cast<ArrKind>(take<uint32_t>(in, off));
  s.n = static_cast<int>(take<uint32_t>(in, off));
  s.K = static_cast<int>(take<uint32_t>(in, off));
  s.mask_len = static_cast<int>(take<uint32_t>(in, off));
  s.gen_len = static_cast<int>(take<uint32_t>(in, off));
  s.exact = take<uint8_t>(in, off) != 0;
  s.seed = take<uint64_t>(in, off);
  s.budget_used = take<int64_t>(in, off);
  uint64_t cnt = take<uint64_t>(in, off);
  s.words_per_pattern = (s.mask_len + 63) / 64;
  size_t nw = cnt * s.words_per_pattern;
  size_t ng = cnt * s.gen_len;
  if (off + nw * sizeof(uint64_t) + ng * sizeof(double) > in.size())
    throw std::runtime_error("arrangement file: truncated");
  s.words.resize(nw);
  std::memcpy(s.words.data(), in.data() + off, nw * sizeof(uint64_t));
  off += nw * sizeof(uint64_t);
  s.generators.resize(ng);
  std::memcpy(s.generators.data(), in.data() + off, ng * sizeof(double));
  off += ng * sizeof(double);
  uint64_t na = take<uint64_t>(in, off);
  if (off + na * sizeof(uint16_t) > in.size()) throw std::runtime_error("arrangement file: truncated");
  s.argmax.resize(na);
  std::memcpy(s.argmax.data(), in.data() + off, na * sizeof(uint16_t));
  return s;
}

}  // namespace ccnn
