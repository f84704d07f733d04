#include "cnnconvex/reconstruct.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace ccnn {

namespace {

/// Dykstra's alternating projections onto the halfspaces {b_r^T x >= 0} of
/// one block; converges to the Euclidean projection onto their intersection.
VectorXd project_block_cone(const Program& p, int b, const VectorXd& th0, double tol) {
  const int dim = p.block_dim;
  const int rows = p.cone_rows_per_block;
  MatrixXd B(rows, dim);
  VectorXd e = VectorXd::Zero(dim);
  VectorXd col(rows);
  for (int j = 0; j < dim; ++j) {
    e[j] = 1.0;
    p.block_cone(b, e.data(), col.data());
    B.col(j) = col;
    e[j] = 0.0;
  }
  VectorXd rn2(rows);
  for (int r = 0; r < rows; ++r) rn2[r] = B.row(r).squaredNorm();
  VectorXd x = th0;
  MatrixXd inc = MatrixXd::Zero(rows, dim);
  double scale = 1.0 + th0.norm();
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double worst = 0.0;
    for (int r = 0; r < rows; ++r) {
      if (rn2[r] <= 0) continue;
      VectorXd z = x + inc.row(r).transpose();
      double viol = B.row(r).dot(z);
      VectorXd px = (viol >= 0) ? z : VectorXd(z - (viol / rn2[r]) * B.row(r).transpose());
      inc.row(r) = (z - px).transpose();
      x = px;
    }
    VectorXd s = B * x;
    for (int r = 0; r < rows; ++r) worst = std::max(worst, -s[r]);
    if (worst <= tol * scale) break;
  }
  // final clamp: tiny residual negativity is eliminated row by row
  for (int pass = 0; pass < 50; ++pass) {
    VectorXd s = B * x;
    int arg = -1;
    double worst = 0;
    for (int r = 0; r < rows; ++r)
      if (-s[r] > worst) {
        worst = -s[r];
        arg = r;
      }
    if (arg < 0) break;
    x -= (s[arg] / rn2[arg]) * B.row(arg).transpose();
  }
  return x;
}

}  // namespace

Solution polish_solution(const Program& p, const Solution& sol, double tol) {
  Solution out = sol;
  if (p.cone_rows_per_block == 0) return out;
  for (int b = 0; b < p.n_blocks; ++b) {
    Eigen::Map<VectorXd> th(out.theta.data() + size_t(b) * p.block_dim, p.block_dim);
    if (th.norm() == 0.0) continue;
    VectorXd s(p.cone_rows_per_block);
    p.block_cone(b, th.data(), s.data());
    if (s.minCoeff() >= 0.0) continue;
    th = project_block_cone(p, b, th, tol);
  }
  out.objective = p.objective(out.theta);
  out.constraint_violation = p.violation(out.theta);
  out.dual_v = p.y - p.predict(out.theta);
  return out;
}

int count_m_star(const Program& p, const Solution& sol, double prune_tol) {
  double max_norm = 0.0;
  for (int b = 0; b < p.n_blocks; ++b) max_norm = std::max(max_norm, p.block_norm(sol.theta, b));
  double tol = prune_tol >= 0 ? prune_tol : 1e-7 * max_norm;
  int m = 0;
  for (int b = 0; b < p.n_blocks; ++b)
    if (p.block_norm(sol.theta, b) > tol) ++m;
  return m;
}

TwoLayerNet reconstruct_twolayer(const Solution& sol, const Program& p) {
  if (p.arch != Arch::AvgPool && p.arch != Arch::MaxPool)
    throw std::invalid_argument("reconstruct_twolayer: wrong architecture");
  if (sol.constraint_violation > 1e-6)
    throw std::invalid_argument("reconstruct_twolayer: infeasible solution");
  double max_norm = 0.0;
  for (int b = 0; b < p.n_blocks; ++b) max_norm = std::max(max_norm, p.block_norm(sol.theta, b));
  double tol = 1e-7 * max_norm;
  TwoLayerNet net;
  net.h = p.block_dim;
  net.pool = p.arch == Arch::AvgPool ? Pool::Avg : Pool::Max;
  std::vector<VectorXd> filters;
  std::vector<double> weights;
  for (int b = 0; b < p.n_blocks; ++b) {
    Eigen::Map<const VectorXd> c(sol.theta.data() + size_t(b) * p.block_dim, p.block_dim);
    double nc = c.norm();
    if (nc <= tol) continue;
    filters.push_back(c / std::sqrt(nc));
    weights.push_back(double(p.block_sign[b]) * std::sqrt(nc));
  }
  net.m = static_cast<int>(filters.size());
  net.filters.resize(net.h, net.m);
  net.out_w.resize(net.m);
  for (int j = 0; j < net.m; ++j) {
    net.filters.col(j) = filters[j];
    net.out_w[j] = weights[j];
  }
  return net;
}

CircularNet reconstruct_circular(const Solution& sol, const Program& p) {
  if (p.arch != Arch::Circular)
    throw std::invalid_argument("reconstruct_circular: wrong architecture");
  if (sol.constraint_violation > 1e-6)
    throw std::invalid_argument("reconstruct_circular: infeasible solution");
  const int d = p.block_dim / 2;
  const int L = p.L;
  const int layers = L - 2;
  double dpow = std::pow(double(d), 0.5 * (L - 2));
  double max_norm = 0.0;
  for (int b = 0; b < p.n_blocks; ++b) max_norm = std::max(max_norm, p.block_norm(sol.theta, b));
  double tol = 1e-7 * max_norm;

  CircularNet net;
  net.L = L;
  net.d = d;
  for (int b = 0; b < p.n_blocks; ++b) {
    Eigen::Map<const VectorXd> th(sol.theta.data() + size_t(b) * p.block_dim, p.block_dim);
    if (th.norm() <= tol) continue;
    VectorXcd c(d);
    for (int j = 0; j < d; ++j) c[j] = std::complex<double>(th[2 * j], th[2 * j + 1]);
    double l1 = c.cwiseAbs().sum();
    if (l1 <= 0) continue;
    MatrixXcd diag(d, layers);
    VectorXd mag = c.cwiseAbs();
    for (int l = 0; l < layers; ++l)
      for (int j = 0; j < d; ++j)
        diag(j, l) = std::sqrt(double(d)) * std::pow(mag[j] / l1, 1.0 / (2.0 * layers));
    VectorXcd w1(d);
    for (int j = 0; j < d; ++j) {
      std::complex<double> phase =
          mag[j] > 0 ? c[j] / mag[j] : std::complex<double>(1.0, 0.0);
      w1[j] = std::sqrt(mag[j] / dpow) * phase;
    }
    double w2 = double(p.block_sign[b]) * std::sqrt(l1 / dpow);
    net.diags.push_back(diag);
    net.w1_spec.push_back(w1);
    net.w2.conservativeResize(net.w2.size() + 1);
    net.w2[net.w2.size() - 1] = w2;
    // feasibility of the product norm: ||prod_l D_l||_F^2 = d^{L-2}
    VectorXd prod2 = VectorXd::Ones(d);
    for (int l = 0; l < layers; ++l) prod2 = prod2.cwiseProduct(diag.col(l).cwiseAbs2());
    double fro2 = prod2.sum();
    if (std::abs(fro2 - std::pow(double(d), L - 2)) > 1e-6 * std::pow(double(d), L - 2))
      throw std::runtime_error("reconstruct_circular: product norm check failed");
  }
  net.m = static_cast<int>(net.w2.size());
  net.derive_real();
  if (net.realness_residual > 1e-6)
    throw std::runtime_error("reconstruct_circular: conjugate symmetry violated");
  return net;
}

namespace {

ParityReport make_report(double convex, double nonconvex, int m_star) {
  ParityReport r;
  r.convex_objective = convex;
  r.nonconvex_objective = nonconvex;
  r.abs_gap = std::abs(convex - nonconvex);
  r.rel_gap = r.abs_gap / std::max(1e-300, std::abs(convex));
  r.m_star = m_star;
  return r;
}

}  // namespace

ParityReport verify_parity(const TwoLayerNet& net, const PatchSet& ps, double beta,
                           const Solution& sol, const Program& p) {
  double nonconvex = objective(net, ps, p.y, beta);
  return make_report(sol.objective, nonconvex, count_m_star(p, sol));
}

ParityReport verify_parity(const CircularNet& net, const SpectralFeatures& sf, double beta,
                           const Solution& sol, const Program& p) {
  double nonconvex = objective(net, sf, p.y, beta);
  return make_report(sol.objective, nonconvex, count_m_star(p, sol));
}

}  // namespace ccnn
