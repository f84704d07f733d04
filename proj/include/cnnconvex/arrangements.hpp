#pragma once

#include <gmpxx.h>

#include <optional>
#include <string>
#include <vector>

#include "cnnconvex/data.hpp"
#include "cnnconvex/util.hpp"

namespace ccnn {

enum class ArrKind { Plain, Conv, CConv, MaxPool, TwoLevel };
std::string to_string(ArrKind k);
ArrKind arr_kind_from_string(const std::string& s);

/// Deduplicated ReLU sign-pattern masks with generator witnesses.
///
/// Pattern bit layout (packed little-endian into 64-bit words):
///   Plain/Conv: mask_len = nK bits, sign pattern of M*w (bit set <=> row >= 0).
///   CConv:      mask_len = n bits, sign pattern of X*w (w real; c = F^H w).
///   MaxPool:    mask_len = nK relu bits; argmax patch per sample kept aside.
///   TwoLevel:   mask_len = nK + K + n bits: first-layer relu bits, then
///               sign(w1_k) bits, then second-layer bits.
struct ArrangementSet {
  ArrKind kind = ArrKind::Plain;
  int n = 0;         // samples
  int K = 1;         // patches
  int mask_len = 0;  // bits per pattern
  int gen_len = 0;   // doubles per generator witness
  bool exact = false;
  uint64_t seed = 0;
  int64_t budget_used = 0;

  int words_per_pattern = 0;
  std::vector<uint64_t> words;       // count * words_per_pattern
  std::vector<double> generators;    // count * gen_len
  std::vector<uint16_t> argmax;      // maxpool only: count * n

  size_t count() const { return words_per_pattern ? words.size() / words_per_pattern : 0; }
  bool bit(size_t pattern, int i) const {
    const uint64_t* w = words.data() + pattern * words_per_pattern;
    return (w[i >> 6] >> (i & 63)) & 1u;
  }
  const double* generator(size_t pattern) const { return generators.data() + pattern * gen_len; }
  const uint16_t* argmax_row(size_t pattern) const { return argmax.data() + pattern * n; }

  /// Lexicographic sort of patterns (deterministic index assignment).
  void finalize_sorted();

  uint64_t hash() const;
};

/// Exact big-integer evaluation of the cell-count bound
/// 2 * sum_{k=0}^{r-1} C(n_rows - 1, k).
mpz_class upper_bound(long n_rows, long r);

/// Randomized enumeration: `budget` gaussian generators (and their negations),
/// each augmented with local boundary reflections and perturbed probes around
/// nearby hyperplane intersections so small cells adjacent to sampled ones are
/// found as well. Every stored pattern carries a generator witness that
/// reproduces it. Monotone in budget for a fixed seed.
ArrangementSet enumerate_sampled(const MatrixXd& M, int64_t budget, uint64_t seed);

/// Exact cell enumeration for effective rank <= 3 (guarded).
ArrangementSet enumerate_exact(const MatrixXd& M);

ArrangementSet conv_arrangements(const PatchSet& ps, int64_t budget, uint64_t seed, bool exact);

/// Circular-convolution arrangements: sign patterns of Re(Xt*c) over
/// conjugate-symmetric c, equivalently sign patterns of X*w over real w.
/// When X has full row rank (and n is small enough to enumerate), all 2^n
/// patterns are realizable and the set is exact.
ArrangementSet cconv_arrangements(const SpectralFeatures& sf, int64_t budget, uint64_t seed);

/// Max-pool arrangements: joint (relu bits, raw-preactivation argmax) patterns.
/// Falls back to an exact angular sweep when the joint boundary matrix has
/// rank <= 2.
ArrangementSet maxpool_arrangements(const PatchSet& ps, int64_t budget, uint64_t seed);

/// Two-level (three-layer) arrangements over sampled (u, w1) pairs.
/// layer1 may be empty; it is only used to report index coverage.
ArrangementSet twolevel_arrangements(const PatchSet& ps, const ArrangementSet& layer1,
                                     int64_t budget, uint64_t seed);

void save_arrangements(const ArrangementSet& s, const std::string& path);
ArrangementSet load_arrangements(const std::string& path);

}  // namespace ccnn
