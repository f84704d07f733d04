#pragma once

#include <optional>
#include <string>

#include "cnnconvex/programs.hpp"

namespace ccnn {

struct SolverConfig {
  int max_iters = 200000;
  double rel_tol = 1e-8;
  double rho = -1.0;          // hinge weight for the penalized form; <=0 -> 100*beta
  double admm_sigma = 1.0;    // initial ADMM penalty, adapted by residual balancing
  double huber_mu = 1e-6;     // hinge smoothing width (penalized form)
  double lipschitz_safety = 1.1;
  int power_iters = 50;
  uint64_t seed = 0;
  bool adapt_sigma = true;
};

struct Solution {
  VectorXd theta;
  double objective = 0.0;
  double constraint_violation = 0.0;  // max over rows of negative part, unclipped
  int iterations = 0;
  VectorXd dual_v;  // y - yhat at theta
  std::string mode; // "penalized" | "admm"
  bool converged = false;
  double beta = 0.0, rho = 0.0, rel_tol = 0.0, sigma = 0.0;
  uint64_t program_hash = 0;
  // ADMM scaled duals for warm starts (empty for penalized solutions)
  VectorXd admm_us, admm_ut;
};

VectorXd prox_group_l2(const VectorXd& v, double t);
VectorXcd prox_complex_l1(const VectorXcd& z, double t);
MatrixXd prox_nuclear(const MatrixXd& Z, double t);

/// In-place prox of the program's full penalty with step t (thresholds scale
/// by penalty_base and per-group weights).
void apply_penalty_prox(const Program& p, VectorXd& theta, double t);

/// FISTA on the penalized form: hinge penalty rho * sum relu(-B theta),
/// Huber-smoothed with width mu and driven to cfg.huber_mu by continuation.
Solution solve_penalized(const Program& p, const SolverConfig& cfg);

/// Operator-splitting ADMM on the constrained form; the x-update is solved
/// exactly via a Woodbury factorization (the data term couples blocks only
/// through an n-dimensional residual). Programs without cone constraints fall
/// through to proximal gradient.
Solution solve_admm(const Program& p, const SolverConfig& cfg, const Solution* warm = nullptr);

double evaluate_objective(const Program& p, const VectorXd& theta);

struct DualCertificate {
  VectorXd v;
  double beta = 0.0;
  double max_value = 0.0;
  bool pass = false;
  VectorXd violating_generator;     // probe achieving max_value
  std::vector<double> block_slack;  // per arrangement: beta - linearized probe value
};

/// Samples the semi-infinite dual constraint at n_probe random generators,
/// all stored arrangement witnesses, and per-arrangement linearized
/// maximizers; closed forms are used where available. A pass certifies
/// numerically that enlarging the arrangement set cannot improve the
/// objective.
DualCertificate dual_certificate(const Program& p, const Solution& sol, int n_probe,
                                 uint64_t seed);

std::string solution_to_json(const Solution& s);
Solution solution_from_json(const std::string& text);

}  // namespace ccnn
