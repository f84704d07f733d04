#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cnnconvex/data.hpp"

using namespace ccnn;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_idx(const std::string& img_path, const std::string& lab_path, int count, int rows,
               int cols, const std::vector<uint8_t>& pixels, const std::vector<uint8_t>& labels,
               uint32_t img_magic = 0x00000803u, uint32_t lab_magic = 0x00000801u) {
  auto be32 = [](std::string& s, uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
  };
  std::string img;
  be32(img, img_magic);
  be32(img, uint32_t(count));
  be32(img, uint32_t(rows));
  be32(img, uint32_t(cols));
  img.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file(img_path, img);
  std::string lab;
  be32(lab, lab_magic);
  be32(lab, uint32_t(count));
  lab.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  write_file(lab_path, lab);
}

}  // namespace

TEST_CASE("gen_synthetic shapes and labels") {
  DataBundle b = gen_synthetic(6, 20, 0, vec({1, -1, 1, -1, -1, 1}));
  CHECK(b.n == 6);
  CHECK(b.d == 20);
  CHECK(b.X.rows() == 6);
  CHECK(b.X.cols() == 20);
  CHECK(b.y[1] == -1.0);
  CHECK(b.X.allFinite());

  DataBundle b2 = gen_synthetic(6, 15, 0, vec({1, -1, 1, 1, 1, -1}));
  CHECK(b2.d == 15);

  DataBundle tiny = gen_synthetic(1, 1, 7, vec({0}));
  CHECK(tiny.n == 1);
  CHECK(tiny.y[0] == 0.0);

  CHECK_THROWS_AS(gen_synthetic(3, 4, 0, vec({1, -1})), std::invalid_argument);
}

TEST_CASE("gen_synthetic is deterministic") {
  DataBundle a = gen_synthetic(5, 7, 42, VectorXd::Ones(5));
  DataBundle b = gen_synthetic(5, 7, 42, VectorXd::Ones(5));
  CHECK(a.X == b.X);
  DataBundle c = gen_synthetic(5, 7, 43, VectorXd::Ones(5));
  CHECK(a.X != c.X);
}

TEST_CASE("extract_patches count formula and verbatim slices") {
  DataBundle b = gen_synthetic(6, 20, 0, VectorXd::Ones(6));
  PatchSet ps = extract_patches(b, 3, 1);
  CHECK(ps.K == 18);
  for (int k = 0; k < ps.K; ++k) CHECK(ps.patches[k] == b.X.middleCols(k, 3));

  DataBundle b2 = gen_synthetic(6, 15, 0, VectorXd::Ones(6));
  PatchSet ps2 = extract_patches(b2, 10, 5);
  CHECK(ps2.K == 2);
  CHECK(ps2.patches[1] == b2.X.middleCols(5, 10));

  DataBundle b3 = gen_synthetic(4, 5, 0, VectorXd::Ones(4));
  PatchSet ps3 = extract_patches(b3, 5, 1);
  CHECK(ps3.K == 1);
  CHECK(ps3.patches[0] == b3.X);

  CHECK_THROWS_AS(extract_patches(b3, 6, 1), std::invalid_argument);
}

TEST_CASE("K formula holds over a parameter sweep") {
  for (int d = 1; d <= 12; ++d)
    for (int h = 1; h <= d; ++h)
      for (int stride = 1; stride <= 4; ++stride) {
        DataBundle b = gen_synthetic(2, d, 0, VectorXd::Ones(2));
        PatchSet ps = extract_patches(b, h, stride);
        CHECK(ps.K == (d - h) / stride + 1);
        CHECK(static_cast<int>(ps.patches.size()) == ps.K);
      }
}

TEST_CASE("stack_patches layout and rank estimate") {
  DataBundle b = gen_synthetic(6, 20, 1, VectorXd::Ones(6));
  PatchSet ps = extract_patches(b, 3, 1);
  StackedPatchMatrix sm = stack_patches(ps);
  CHECK(sm.M.rows() == 108);
  CHECK(sm.M.cols() == 3);
  for (int k = 0; k < ps.K; ++k) CHECK(sm.M.middleRows(k * 6, 6) == ps.patches[k]);
  CHECK(sm.rank_estimate <= 3);
  CHECK(sm.rank_estimate == 3);

  // single patch
  PatchSet one = extract_patches(b, 20, 1);
  StackedPatchMatrix sm1 = stack_patches(one);
  CHECK(sm1.M == b.X);

  // rank-1 data: X = a b^T with b periodic in the stride so patch slices align
  Rng rng(3);
  VectorXd a = rng.gaussian_vec(5), bb(8);
  for (int j = 0; j < 8; ++j) bb[j] = (j % 2 == 0) ? 1.3 : -0.4;
  DataBundle r1;
  r1.n = 5;
  r1.d = 8;
  r1.X = a * bb.transpose();
  r1.y = VectorXd::Ones(5);
  StackedPatchMatrix smr = stack_patches(extract_patches(r1, 4, 2));
  CHECK(smr.rank_estimate == 1);
  // single full-width patch of a rank-1 matrix
  VectorXd bb2 = rng.gaussian_vec(8);
  r1.X = a * bb2.transpose();
  StackedPatchMatrix smr1 = stack_patches(extract_patches(r1, 8, 1));
  CHECK(smr1.rank_estimate == 1);
}

TEST_CASE("spectral features: unitarity and round trip") {
  for (int d : {4, 37, 512}) {
    MatrixXcd F = dft_matrix(d);
    MatrixXcd I = F * F.adjoint();
    CHECK((I - MatrixXcd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-10);
  }
  DataBundle b = gen_synthetic(5, 64, 9, VectorXd::Ones(5));
  SpectralFeatures sf = spectral_features(b);
  CHECK((sf.Xt * sf.F.adjoint() - b.X.cast<std::complex<double>>()).cwiseAbs().maxCoeff() < 1e-10);

  // identity input: Xt = F
  DataBundle id;
  id.n = 6;
  id.d = 6;
  id.X = MatrixXd::Identity(6, 6);
  id.y = VectorXd::Ones(6);
  SpectralFeatures sfi = spectral_features(id);
  CHECK((sfi.Xt - sfi.F).cwiseAbs().maxCoeff() < 1e-12);

  // impulse row: first row of F = all ones / sqrt(d)
  DataBundle im;
  im.n = 1;
  im.d = 4;
  im.X = MatrixXd::Zero(1, 4);
  im.X(0, 0) = 1.0;
  im.y = VectorXd::Ones(1);
  SpectralFeatures sfm = spectral_features(im);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(sfm.Xt(0, k) - std::complex<double>(0.5, 0)) < 1e-12);
}

TEST_CASE("circulant matches its spectral factorization") {
  int d = 8;
  Rng rng(5);
  VectorXd u = rng.gaussian_vec(3);
  MatrixXd U = circulant(u, d);
  MatrixXcd F = dft_matrix(d);
  VectorXd up = VectorXd::Zero(d);
  up.head(3) = u;
  VectorXcd lam = std::sqrt(double(d)) * (F * up.cast<std::complex<double>>());
  MatrixXcd U2 = F * lam.asDiagonal() * F.adjoint();
  CHECK((U2 - U.cast<std::complex<double>>()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mnist idx loader") {
  // two classes, 8 images of 4x4
  std::vector<uint8_t> pixels(8 * 16);
  std::vector<uint8_t> labels = {0, 1, 0, 1, 0, 1, 3, 3};
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = uint8_t(i % 251);
  std::string img = temp_path("ccnn_test_idx_img.bin");
  std::string lab = temp_path("ccnn_test_idx_lab.bin");
  write_idx(img, lab, 8, 4, 4, pixels, labels);

  DataBundle b = load_mnist(img, lab, 0, 1, 4, 9, 0);
  CHECK(b.n == 4);
  CHECK(b.d == 9);
  for (int i = 0; i < b.n; ++i) CHECK((b.y[i] == 1.0 || b.y[i] == -1.0));
  CHECK(b.X.maxCoeff() <= 1.0);
  CHECK(b.X.minCoeff() >= 0.0);

  DataBundle b2 = load_mnist(img, lab, 0, 1, 4, 9, 0);
  CHECK(b.X == b2.X);
  CHECK(b.y == b2.y);

  // full-dimension single row keeps every pixel column
  DataBundle full = load_mnist(img, lab, 0, 1, 1, 16, 0);
  CHECK(full.d == 16);

  // insufficient samples
  CHECK_THROWS(load_mnist(img, lab, 0, 1, 7, 9, 0));

  // malformed magic
  std::string bad_img = temp_path("ccnn_test_idx_bad.bin");
  write_idx(bad_img, lab, 8, 4, 4, pixels, labels, 0xDEADBEEFu);
  CHECK_THROWS_WITH_AS(load_mnist(bad_img, lab, 0, 1, 2, 4, 0),
                       doctest::Contains("magic"), std::runtime_error);

  // truncated images
  std::string trunc = temp_path("ccnn_test_idx_trunc.bin");
  write_file(trunc, read_file(img).substr(0, 40));
  CHECK_THROWS(load_mnist(trunc, lab, 0, 1, 2, 4, 0));

  // disjoint split
  auto [tr, te] = load_mnist_split(img, lab, 0, 1, 3, 3, 9, 0);
  CHECK(tr.n == 3);
  CHECK(te.n == 3);
}

TEST_CASE("cifar10 loader") {
  const int count = 10;
  std::string raw;
  for (int i = 0; i < count; ++i) {
    raw.push_back(char(i % 2));  // labels 0/1
    for (int p = 0; p < 3072; ++p) raw.push_back(char((i * 31 + p) % 256));
  }
  std::string path = temp_path("ccnn_test_cifar.bin");
  write_file(path, raw);

  DataBundle b = load_cifar10(path, 0, 1, 6, 50, 0);
  CHECK(b.n == 6);
  CHECK(b.d == 50);
  CHECK(b.X.maxCoeff() <= 1.0);

  // grayscale is the channel mean before column subsampling
  DataBundle full = load_cifar10(path, 0, 1, 1, 1024, 0);
  CHECK(full.d == 1024);

  // one byte short -> record-size mismatch
  write_file(path + ".bad", raw.substr(0, raw.size() - 1));
  CHECK_THROWS(load_cifar10(path + ".bad", 0, 1, 2, 10, 0));

  // unknown class id
  std::string badraw = raw;
  badraw[0] = char(17);
  write_file(path + ".badclass", badraw);
  CHECK_THROWS(load_cifar10(path + ".badclass", 0, 1, 2, 10, 0));
}

TEST_CASE("bundle persistence round trip") {
  DataBundle b = gen_synthetic(4, 6, 11, vec({1, -1, 1, -1}));
  std::string text = bundle_to_json(b);
  DataBundle r = bundle_from_json(text);
  CHECK(r.X == b.X);
  CHECK(r.y == b.y);
  CHECK(r.seed == b.seed);
  CHECK(r.source == b.source);
  CHECK(r.hash() == b.hash());
}
