#include "cnnconvex/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/SVD>
#include <json.hpp>

namespace ccnn {

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::Mnist: return "mnist";
    case DataSource::Cifar10: return "cifar10";
  }
  return "synthetic";
}

DataSource data_source_from_string(const std::string& s) {
  if (s == "synthetic") return DataSource::Synthetic;
  if (s == "mnist") return DataSource::Mnist;
  if (s == "cifar10") return DataSource::Cifar10;
  throw std::invalid_argument("unknown data source: " + s);
}

uint64_t DataBundle::hash() const {
  uint64_t h = fnv1a_mat(X);
  h = fnv1a_vec(y, h);
  h = fnv1a(&seed, sizeof(seed), h);
  std::string src = to_string(source);
  return fnv1a_str(src, h);
}

void DataBundle::validate() const {
  if (X.rows() != n || X.cols() != d || y.size() != n)
    throw std::invalid_argument("DataBundle: shape mismatch");
  if (!X.allFinite() || !y.allFinite())
    throw std::invalid_argument("DataBundle: non-finite entries");
}

DataBundle gen_synthetic(int n, int d, uint64_t seed, const VectorXd& labels) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_synthetic: n, d must be >= 1");
  if (labels.size() != n) throw std::invalid_argument("gen_synthetic: labels length != n");
  Rng rng(seed);
  DataBundle b;
  b.n = n;
  b.d = d;
  b.seed = seed;
  b.source = DataSource::Synthetic;
  b.X.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) b.X(i, j) = rng.gaussian();
  b.y = labels;
  b.validate();
  return b;
}

namespace {

uint32_t read_be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

struct RawImages {
  int count = 0, pixels = 0;
  std::vector<uint8_t> data;    // count * pixels
  std::vector<uint8_t> labels;  // count
};

RawImages parse_idx(const std::string& images_path, const std::string& labels_path) {
  std::string img = read_file(images_path);
  std::string lab = read_file(labels_path);
  if (img.size() < 16) throw std::runtime_error("idx images: truncated header");
  if (lab.size() < 8) throw std::runtime_error("idx labels: truncated header");
  const uint8_t* ip = reinterpret_cast<const uint8_t*>(img.data());
  const uint8_t* lp = reinterpret_cast<const uint8_t*>(lab.data());
  if (read_be32(ip) != 0x00000803u) throw std::runtime_error("idx images: bad magic number");
  if (read_be32(lp) != 0x00000801u) throw std::runtime_error("idx labels: bad magic number");
  RawImages r;
  r.count = static_cast<int>(read_be32(ip + 4));
  int rows = static_cast<int>(read_be32(ip + 8));
  int cols = static_cast<int>(read_be32(ip + 12));
  r.pixels = rows * cols;
  int lcount = static_cast<int>(read_be32(lp + 4));
  if (lcount != r.count) throw std::runtime_error("idx: image/label count mismatch");
  if (img.size() != 16 + size_t(r.count) * r.pixels) throw std::runtime_error("idx images: truncated file");
  if (lab.size() != 8 + size_t(r.count)) throw std::runtime_error("idx labels: truncated file");
  r.data.assign(ip + 16, ip + 16 + size_t(r.count) * r.pixels);
  r.labels.assign(lp + 8, lp + 8 + r.count);
  return r;
}

RawImages parse_cifar10(const std::string& batch_path) {
  std::string raw = read_file(batch_path);
  const size_t rec = 3073;
  if (raw.empty() || raw.size() % rec != 0)
    throw std::runtime_error("cifar10: record-size mismatch");
  RawImages r;
  r.count = static_cast<int>(raw.size() / rec);
  r.pixels = 1024;  // grayscale: channel mean
  r.data.resize(size_t(r.count) * 1024);
  r.labels.resize(r.count);
  const uint8_t* p = reinterpret_cast<const uint8_t*>(raw.data());
  for (int i = 0; i < r.count; ++i) {
    const uint8_t* q = p + size_t(i) * rec;
    if (q[0] > 9) throw std::runtime_error("cifar10: unknown class id");
    r.labels[i] = q[0];
    for (int px = 0; px < 1024; ++px) {
      int v = int(q[1 + px]) + int(q[1 + 1024 + px]) + int(q[1 + 2048 + px]);
      r.data[size_t(i) * 1024 + px] = static_cast<uint8_t>(v / 3);
    }
  }
  return r;
}

std::vector<int> sample_without_replacement(int pool, int want, Rng& rng) {
  std::vector<int> idx(pool);
  for (int i = 0; i < pool; ++i) idx[i] = i;
  // partial Fisher-Yates
  for (int i = 0; i < want; ++i) {
    int j = i + static_cast<int>(rng.below(uint64_t(pool - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  return idx;
}

std::pair<DataBundle, DataBundle> subsample(const RawImages& raw, DataSource source, int class_pos,
                                            int class_neg, int n_train, int n_test, int d,
                                            uint64_t seed) {
  if (class_pos < 0 || class_pos > 9 || class_neg < 0 || class_neg > 9 || class_pos == class_neg)
    throw std::invalid_argument("classes must be distinct ids in [0,9]");
  if (d < 1 || d > raw.pixels) throw std::invalid_argument("d out of range for dataset");
  std::vector<int> pool;
  for (int i = 0; i < raw.count; ++i)
    if (raw.labels[i] == class_pos || raw.labels[i] == class_neg) pool.push_back(i);
  int want = n_train + n_test;
  if (static_cast<int>(pool.size()) < want)
    throw std::runtime_error("insufficient samples for requested classes");
  Rng rng(seed);
  std::vector<int> rows = sample_without_replacement(static_cast<int>(pool.size()), want, rng);
  std::vector<int> cols = sample_without_replacement(raw.pixels, d, rng);
  std::sort(cols.begin(), cols.end());  // keep column order for patch locality

  auto make = [&](int offset, int count) {
    DataBundle b;
    b.n = count;
    b.d = d;
    b.seed = seed;
    b.source = source;
    b.X.resize(count, d);
    b.y.resize(count);
    for (int i = 0; i < count; ++i) {
      int r = pool[rows[offset + i]];
      for (int j = 0; j < d; ++j)
        b.X(i, j) = raw.data[size_t(r) * raw.pixels + cols[j]] / 255.0;
      b.y[i] = (raw.labels[r] == class_pos) ? 1.0 : -1.0;
    }
    b.validate();
    return b;
  };
  return {make(0, n_train), n_test > 0 ? make(n_train, n_test) : DataBundle{}};
}

}  // namespace

DataBundle load_mnist(const std::string& images_path, const std::string& labels_path, int class_pos,
                      int class_neg, int n, int d, uint64_t seed) {
  RawImages raw = parse_idx(images_path, labels_path);
  return subsample(raw, DataSource::Mnist, class_pos, class_neg, n, 0, d, seed).first;
}

std::pair<DataBundle, DataBundle> load_mnist_split(const std::string& images_path,
                                                   const std::string& labels_path, int class_pos,
                                                   int class_neg, int n_train, int n_test, int d,
                                                   uint64_t seed) {
  RawImages raw = parse_idx(images_path, labels_path);
  return subsample(raw, DataSource::Mnist, class_pos, class_neg, n_train, n_test, d, seed);
}

DataBundle load_cifar10(const std::string& batch_path, int class_pos, int class_neg, int n, int d,
                        uint64_t seed) {
  RawImages raw = parse_cifar10(batch_path);
  return subsample(raw, DataSource::Cifar10, class_pos, class_neg, n, 0, d, seed).first;
}

std::pair<DataBundle, DataBundle> load_cifar10_split(const std::string& batch_path, int class_pos,
                                                     int class_neg, int n_train, int n_test, int d,
                                                     uint64_t seed) {
  RawImages raw = parse_cifar10(batch_path);
  return subsample(raw, DataSource::Cifar10, class_pos, class_neg, n_train, n_test, d, seed);
}

PatchSet extract_patches(const MatrixXd& X, int h, int stride) {
  int d = static_cast<int>(X.cols());
  if (h < 1 || h > d) throw std::invalid_argument("extract_patches: need 1 <= h <= d");
  if (stride < 1) throw std::invalid_argument("extract_patches: stride must be >= 1");
  PatchSet ps;
  ps.h = h;
  ps.stride = stride;
  ps.n = static_cast<int>(X.rows());
  ps.K = (d - h) / stride + 1;
  ps.patches.reserve(ps.K);
  for (int k = 0; k < ps.K; ++k) ps.patches.push_back(X.middleCols(k * stride, h));
  return ps;
}

PatchSet extract_patches(const DataBundle& bundle, int h, int stride) {
  return extract_patches(bundle.X, h, stride);
}

StackedPatchMatrix stack_patches(const PatchSet& ps) {
  if (ps.K < 1) throw std::invalid_argument("stack_patches: empty patch set");
  StackedPatchMatrix sm;
  sm.M.resize(static_cast<Eigen::Index>(ps.K) * ps.n, ps.h);
  for (int k = 0; k < ps.K; ++k) sm.M.middleRows(static_cast<Eigen::Index>(k) * ps.n, ps.n) = ps.patches[k];
  Eigen::JacobiSVD<MatrixXd> svd(sm.M);
  const auto& sv = svd.singularValues();
  double smax = sv.size() > 0 ? sv[0] : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-8 * smax) ++r;
  sm.rank_estimate = r;
  return sm;
}

MatrixXcd dft_matrix(int d) {
  MatrixXcd F(d, d);
  double s = 1.0 / std::sqrt(double(d));
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) {
      double a = -2.0 * M_PI * double((long long)j * k % d) / double(d);
      F(j, k) = std::complex<double>(std::cos(a) * s, std::sin(a) * s);
    }
  return F;
}

SpectralFeatures spectral_features(const MatrixXd& X) {
  SpectralFeatures sf;
  sf.n = static_cast<int>(X.rows());
  sf.d = static_cast<int>(X.cols());
  sf.F = dft_matrix(sf.d);
  sf.Xt = X * sf.F;
  return sf;
}

SpectralFeatures spectral_features(const DataBundle& bundle) { return spectral_features(bundle.X); }

MatrixXd circulant(const VectorXd& u, int d) {
  if (u.size() > d) throw std::invalid_argument("circulant: generator longer than d");
  VectorXd up = VectorXd::Zero(d);
  up.head(u.size()) = u;
  MatrixXd U(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) U(j, k) = up[((k - j) % d + d) % d];
  return U;
}

std::string bundle_to_json(const DataBundle& b) {
  nlohmann::json j;
  j["format"] = "ccnn.bundle.v1";
  j["n"] = b.n;
  j["d"] = b.d;
  j["seed"] = b.seed;
  j["source"] = to_string(b.source);
  j["hash"] = hash_hex(b.hash());
  std::vector<double> x(static_cast<size_t>(b.n) * b.d);
  for (int i = 0; i < b.n; ++i)
    for (int jj = 0; jj < b.d; ++jj) x[size_t(i) * b.d + jj] = b.X(i, jj);
  j["x_b64"] = encode_doubles(x);
  std::vector<double> y(b.y.data(), b.y.data() + b.n);
  j["y_b64"] = encode_doubles(y);
  return j.dump(2);
}

DataBundle bundle_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (j.value("format", "") != "ccnn.bundle.v1") throw std::runtime_error("bundle: bad format tag");
  DataBundle b;
  b.n = j.at("n").get<int>();
  b.d = j.at("d").get<int>();
  b.seed = j.at("seed").get<uint64_t>();
  b.source = data_source_from_string(j.at("source").get<std::string>());
  std::vector<double> x = decode_doubles(j.at("x_b64").get<std::string>());
  std::vector<double> y = decode_doubles(j.at("y_b64").get<std::string>());
  if (static_cast<int>(x.size()) != b.n * b.d || static_cast<int>(y.size()) != b.n)
    throw std::runtime_error("bundle: data length mismatch");
  b.X.resize(b.n, b.d);
  for (int i = 0; i < b.n; ++i)
    for (int jj = 0; jj < b.d; ++jj) b.X(i, jj) = x[size_t(i) * b.d + jj];
  b.y = Eigen::Map<VectorXd>(y.data(), b.n);
  b.validate();
  if (j.contains("hash") && j["hash"].get<std::string>() != hash_hex(b.hash()))
    throw std::runtime_error("bundle: hash mismatch");
  return b;
}

}  // namespace ccnn
