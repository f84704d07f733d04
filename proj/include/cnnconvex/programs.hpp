#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "cnnconvex/arrangements.hpp"
#include "cnnconvex/data.hpp"
#include "cnnconvex/util.hpp"

namespace ccnn {

enum class Arch { AvgPool, MaxPool, Circular, ThreeLayer, LinearNuclear, LinearCircular };
std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

enum class PenaltyKind { GroupL2, ComplexL1, Frobenius, Nuclear, None };

/// A penalty group inside a block: ||theta[offset..offset+size)||_2 * weight.
struct GroupDef {
  int offset = 0;
  int size = 0;
  double weight = 1.0;
};

/// Finite convex program
///   min 1/2 || sum_b sign_b A_b theta_b - y ||^2 + penalty(theta)
///   s.t. B_b theta_b >= 0 for every block b,
/// with identical block layout across blocks of one program. Blocks come in
/// (unprimed, primed) pairs per arrangement: block 2i has sign -1, block 2i+1
/// has sign +1 (single-block architectures have one +1 block).
class Program {
 public:
  virtual ~Program() = default;

  Arch arch;
  int n = 0;
  double beta = 0;
  double penalty_base = 0;  // effective multiplier on group norms
  VectorXd y;
  PenaltyKind penalty = PenaltyKind::GroupL2;
  int L = 0;  // circular depth (0 elsewhere)

  int n_blocks = 0;
  int block_dim = 0;
  int cone_rows_per_block = 0;
  std::vector<int8_t> block_sign;
  std::vector<GroupDef> block_groups;  // same layout per block
  int nuc_rows = 0, nuc_cols = 0;      // nuclear reshape (col-major)

  // provenance for certificates and reconstruction
  std::shared_ptr<const ArrangementSet> arr;
  std::shared_ptr<const PatchSet> patches;
  std::shared_ptr<const SpectralFeatures> spectral;

  int total_dim() const { return n_blocks * block_dim; }
  int total_cone_rows() const { return n_blocks * cone_rows_per_block; }

  virtual void block_predict(int b, const double* theta_b, VectorXd& acc) const = 0;
  virtual void block_predict_adj(int b, const VectorXd& r, double* out_b) const = 0;
  virtual void block_cone(int b, const double* theta_b, double* s_b) const = 0;
  virtual void block_cone_adj(int b, const double* mu_b, double* out_b) const = 0;
  virtual void block_btb(int b, MatrixXd& out) const = 0;  // out = B_b^T B_b
  virtual bool btb_uniform() const { return false; }

  /// Dense n x block_dim prediction map of block b, sign included.
  virtual MatrixXd dense_A(int b) const = 0;
  /// J D^{-1} J^T with D block-diagonal, factorized per block in `chol`
  /// (a single factor when btb_uniform()).
  virtual MatrixXd jdinvjt(const std::vector<Eigen::LLT<MatrixXd>>& chol) const;

  /// Value of the semi-infinite dual constraint at a probe generator,
  /// normalized so the constraint reads value <= beta. NaN if unsupported.
  virtual double probe_value(const VectorXd& gen, const VectorXd& v) const = 0;
  /// Closed-form exact dual constraint value (architectures without cones).
  virtual double dual_constraint_exact(const VectorXd& v) const;
  /// Probe maximizing the cone-free linearization for one arrangement.
  virtual VectorXd linearized_max_probe(int arrangement, const VectorXd& v) const;

  VectorXd predict(const VectorXd& theta) const;
  void predict_adj(const VectorXd& r, VectorXd& grad) const;  // grad = J^T r
  VectorXd cone_values(const VectorXd& theta) const;
  void cone_adj(const VectorXd& mu, VectorXd& out) const;

  double data_fit(const VectorXd& theta) const;
  double penalty_value(const VectorXd& theta) const;
  double objective(const VectorXd& theta) const;
  double violation(const VectorXd& theta) const;  // max over rows of negative part
  double block_norm(const VectorXd& theta, int b) const;

  uint64_t hash() const;
};

using ProgramPtr = std::shared_ptr<const Program>;

ProgramPtr build_avgpool(std::shared_ptr<const PatchSet> ps,
                         std::shared_ptr<const ArrangementSet> arr, const VectorXd& y, double beta);
ProgramPtr build_maxpool(std::shared_ptr<const PatchSet> ps,
                         std::shared_ptr<const ArrangementSet> arr, const VectorXd& y, double beta);
ProgramPtr build_circular(std::shared_ptr<const SpectralFeatures> sf,
                          std::shared_ptr<const ArrangementSet> arr, const VectorXd& y, double beta,
                          int L);
ProgramPtr build_threelayer(std::shared_ptr<const PatchSet> ps,
                            std::shared_ptr<const ArrangementSet> arr2, const VectorXd& y,
                            double beta);
ProgramPtr build_linear_nuclear(std::shared_ptr<const PatchSet> ps, const VectorXd& y, double beta);
ProgramPtr build_linear_circular(std::shared_ptr<const SpectralFeatures> sf, const VectorXd& y,
                                 double beta);

/// Manifest (JSON) describing a built program; dense data is reconstructed
/// from the referenced arrangement file on load.
std::string program_manifest(const Program& p, const std::string& arrangement_file);

}  // namespace ccnn
