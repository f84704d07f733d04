#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>
#include <stdexcept>
#include <Eigen/Core>

namespace ccnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

/// Deterministic random source. All randomness in the library flows through
/// this class so results are identical across runs; gaussians use Box-Muller
/// on the raw mt19937_64 stream instead of std::normal_distribution, whose
/// algorithm is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

  double gaussian();

  /// Uniform integer in [0, n), rejection sampled.
  uint64_t below(uint64_t n);

  VectorXd gaussian_vec(int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64; used to derive deterministic perturbations from bit patterns
/// without consuming the main random stream.
uint64_t mix64(uint64_t x);

/// FNV-1a over raw bytes; instance hashes embedded in artifacts.
uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a_str(const std::string& s, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a_vec(const VectorXd& v, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a_mat(const MatrixXd& m, uint64_t h = 0xcbf29ce484222325ull);
std::string hash_hex(uint64_t h);

std::string base64_encode(const void* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& s);
std::string encode_doubles(const std::vector<double>& v);
std::vector<double> decode_doubles(const std::string& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Monotonic wall clock in milliseconds.
double now_ms();

}  // namespace ccnn
