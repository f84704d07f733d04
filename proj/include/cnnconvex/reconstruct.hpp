#pragma once

#include "cnnconvex/baseline.hpp"
#include "cnnconvex/solvers.hpp"

namespace ccnn {

struct ParityReport {
  double convex_objective = 0.0;
  double nonconvex_objective = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  int m_star = 0;
};

/// Projects every active block of a solution onto its cone (Dykstra on the
/// halfspace rows) so downstream reconstructions are exactly feasible;
/// objective, violation and dual vector are recomputed at the new point.
Solution polish_solution(const Program& p, const Solution& sol, double tol = 1e-13);

/// Number of blocks with norm above prune_tol (default 1e-7 * max block norm).
int count_m_star(const Program& p, const Solution& sol, double prune_tol = -1.0);

TwoLayerNet reconstruct_twolayer(const Solution& sol, const Program& p);
CircularNet reconstruct_circular(const Solution& sol, const Program& p);

ParityReport verify_parity(const TwoLayerNet& net, const PatchSet& ps, double beta,
                           const Solution& sol, const Program& p);
ParityReport verify_parity(const CircularNet& net, const SpectralFeatures& sf, double beta,
                           const Solution& sol, const Program& p);

}  // namespace ccnn
