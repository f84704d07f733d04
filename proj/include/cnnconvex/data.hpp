#pragma once

#include <complex>
#include <string>
#include <vector>

#include "cnnconvex/util.hpp"

namespace ccnn {

enum class DataSource { Synthetic, Mnist, Cifar10 };
std::string to_string(DataSource s);
DataSource data_source_from_string(const std::string& s);

/// Data matrix X (n x d) with labels y. Immutable after construction.
struct DataBundle {
  MatrixXd X;
  VectorXd y;
  int n = 0, d = 0;
  DataSource source = DataSource::Synthetic;
  uint64_t seed = 0;

  uint64_t hash() const;
  void validate() const;  // throws on NaN/Inf or shape mismatch
};

/// Contiguous column slices of X seen by a size-h filter at stride s.
struct PatchSet {
  std::vector<MatrixXd> patches;  // K matrices, each n x h
  int h = 0, stride = 1, K = 0, n = 0;
};

/// Row-stacked patch matrix M = [X_1; X_2; ...; X_K], nK x h.
struct StackedPatchMatrix {
  MatrixXd M;
  int rank_estimate = 0;
};

/// DFT-domain features Xt = X * F with F the unitary DFT matrix.
struct SpectralFeatures {
  MatrixXcd Xt;  // n x d
  MatrixXcd F;   // d x d, unitary
  int n = 0, d = 0;
};

DataBundle gen_synthetic(int n, int d, uint64_t seed, const VectorXd& labels);

DataBundle load_mnist(const std::string& images_path, const std::string& labels_path,
                      int class_pos, int class_neg, int n, int d, uint64_t seed);
DataBundle load_cifar10(const std::string& batch_path, int class_pos, int class_neg, int n, int d,
                        uint64_t seed);

/// Disjoint train/test split loaders (same column subset for both bundles).
std::pair<DataBundle, DataBundle> load_mnist_split(const std::string& images_path,
                                                   const std::string& labels_path, int class_pos,
                                                   int class_neg, int n_train, int n_test, int d,
                                                   uint64_t seed);
std::pair<DataBundle, DataBundle> load_cifar10_split(const std::string& batch_path, int class_pos,
                                                     int class_neg, int n_train, int n_test, int d,
                                                     uint64_t seed);

PatchSet extract_patches(const DataBundle& bundle, int h, int stride);
PatchSet extract_patches(const MatrixXd& X, int h, int stride);
StackedPatchMatrix stack_patches(const PatchSet& ps);
SpectralFeatures spectral_features(const DataBundle& bundle);
SpectralFeatures spectral_features(const MatrixXd& X);

/// Unitary DFT matrix, F[j,k] = exp(-2*pi*i*j*k/d)/sqrt(d).
MatrixXcd dft_matrix(int d);

/// Real d x d circulant built from generator u (zero padded), satisfying
/// U = F * diag(sqrt(d) * F * u) * F^H.
MatrixXd circulant(const VectorXd& u, int d);

std::string bundle_to_json(const DataBundle& b);
DataBundle bundle_from_json(const std::string& json_text);

}  // namespace ccnn
