#include "cnnconvex/solvers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <json.hpp>

namespace ccnn {

VectorXd prox_group_l2(const VectorXd& v, double t) {
  if (t < 0) throw std::invalid_argument("prox_group_l2: t must be >= 0");
  double nv = v.norm();
  if (nv <= t) return VectorXd::Zero(v.size());
  return v * (1.0 - t / nv);
}

VectorXcd prox_complex_l1(const VectorXcd& z, double t) {
  if (t < 0) throw std::invalid_argument("prox_complex_l1: t must be >= 0");
  VectorXcd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double m = std::abs(z[i]);
    out[i] = (m <= t) ? std::complex<double>(0, 0) : z[i] * (1.0 - t / m);
  }
  return out;
}

MatrixXd prox_nuclear(const MatrixXd& Z, double t) {
  if (t < 0) throw std::invalid_argument("prox_nuclear: t must be >= 0");
  Eigen::JacobiSVD<MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorXd s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::max(0.0, s[i] - t);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

void apply_penalty_prox(const Program& p, VectorXd& theta, double t) {
  if (p.penalty == PenaltyKind::None) return;
  for (int b = 0; b < p.n_blocks; ++b) {
    double* th = theta.data() + size_t(b) * p.block_dim;
    if (p.penalty == PenaltyKind::Nuclear) {
      Eigen::Map<MatrixXd> Z(th, p.nuc_rows, p.nuc_cols);
      Z = prox_nuclear(Z, t * p.penalty_base);
      continue;
    }
    for (const GroupDef& g : p.block_groups) {
      double thr = t * p.penalty_base * g.weight;
      double s = 0;
      for (int i = 0; i < g.size; ++i) s += th[g.offset + i] * th[g.offset + i];
      double nv = std::sqrt(s);
      double f = (nv <= thr) ? 0.0 : (1.0 - thr / nv);
      for (int i = 0; i < g.size; ++i) th[g.offset + i] *= f;
    }
  }
}

double evaluate_objective(const Program& p, const VectorXd& theta) { return p.objective(theta); }

namespace {

double huber_neg(double s, double mu) {
  // penalty of the negative part, smoothed near the kink
  double t = -s;
  if (t <= 0) return 0.0;
  if (t <= mu) return t * t / (2.0 * mu);
  return t - 0.5 * mu;
}

double huber_neg_dds(double s, double mu) {
  double t = -s;
  if (t <= 0) return 0.0;
  return -std::min(t / mu, 1.0);
}

double power_lipschitz(const Program& p, double rho_over_mu, int iters) {
  const int dim = p.total_dim();
  VectorXd v(dim);
  uint64_t h = 0x9e3779b97f4a7c15ull;
  for (int i = 0; i < dim; ++i) {
    h = mix64(h + i);
    v[i] = (h >> 11) * 0x1.0p-53 - 0.5;
  }
  v.normalize();
  const bool cones = p.total_cone_rows() > 0 && rho_over_mu > 0;
  VectorXd grad(dim), tmp(dim);
  double lam = 1.0;
  for (int it = 0; it < iters; ++it) {
    VectorXd yhat = p.predict(v);
    p.predict_adj(yhat, grad);
    if (cones) {
      VectorXd s = p.cone_values(v);
      p.cone_adj(s, tmp);
      grad += rho_over_mu * tmp;
    }
    lam = grad.norm();
    if (lam <= 0) return 1.0;
    v = grad / lam;
  }
  return lam;
}

struct FistaResult {
  VectorXd x;
  int iterations = 0;
  bool converged = false;
};

/// Monotone FISTA with adaptive restart on the smoothed objective
/// F(x) = 1/2||Jx-y||^2 + rho*sum huber(-Bx) + penalty(x).
FistaResult fista_stage(const Program& p, VectorXd x0, double rho, double mu, double tol,
                        int max_iters, const SolverConfig& cfg) {
  const int dim = p.total_dim();
  const bool cones = p.total_cone_rows() > 0 && rho > 0;
  double L = power_lipschitz(p, cones ? rho / mu : 0.0, cfg.power_iters) * cfg.lipschitz_safety;
  if (L <= 0 || !std::isfinite(L)) L = 1.0;
  double step = 1.0 / L;

  auto smooth_grad = [&](const VectorXd& z, VectorXd& grad) {
    VectorXd r = p.predict(z) - p.y;
    p.predict_adj(r, grad);
    if (cones) {
      VectorXd s = p.cone_values(z);
      for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rho * huber_neg_dds(s[i], mu);
      VectorXd tmp(dim);
      p.cone_adj(s, tmp);
      grad += tmp;
    }
  };
  auto fval = [&](const VectorXd& z) {
    double f = 0.5 * (p.predict(z) - p.y).squaredNorm() + p.penalty_value(z);
    if (cones) {
      VectorXd s = p.cone_values(z);
      for (Eigen::Index i = 0; i < s.size(); ++i) f += rho * huber_neg(s[i], mu);
    }
    return f;
  };

  VectorXd x = std::move(x0);
  VectorXd yv = x, grad(dim), xn(dim);
  double tk = 1.0;
  double fx = fval(x);
  int stall = 0;
  FistaResult res;
  for (int it = 0; it < max_iters; ++it) {
    smooth_grad(yv, grad);
    xn = yv - step * grad;
    apply_penalty_prox(p, xn, step);
    double fn = fval(xn);
    if (fn > fx) {
      // restart momentum and take a plain proximal step from x
      smooth_grad(x, grad);
      xn = x - step * grad;
      apply_penalty_prox(p, xn, step);
      fn = fval(xn);
      tk = 1.0;
    }
    double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    yv = xn + ((tk - 1.0) / tn) * (xn - x);
    tk = tn;
    double rel = std::abs(fx - fn) / std::max(1.0, std::abs(fn));
    x.swap(xn);
    fx = fn;
    res.iterations = it + 1;
    if (rel < tol) {
      if (++stall >= 5) {
        res.converged = true;
        break;
      }
    } else {
      stall = 0;
    }
  }
  res.x = std::move(x);
  return res;
}

Solution finish_solution(const Program& p, VectorXd theta, int iterations, bool converged,
                         const std::string& mode, double rho, double sigma,
                         const SolverConfig& cfg) {
  Solution s;
  s.theta = std::move(theta);
  s.objective = p.objective(s.theta);
  s.constraint_violation = p.violation(s.theta);
  s.iterations = iterations;
  s.dual_v = p.y - p.predict(s.theta);
  s.mode = mode;
  s.converged = converged;
  s.beta = p.beta;
  s.rho = rho;
  s.rel_tol = cfg.rel_tol;
  s.sigma = sigma;
  s.program_hash = p.hash();
  return s;
}

}  // namespace

Solution solve_penalized(const Program& p, const SolverConfig& cfg) {
  double rho = cfg.rho > 0 ? cfg.rho : 100.0 * p.beta;
  const bool cones = p.total_cone_rows() > 0;
  VectorXd x = VectorXd::Zero(p.total_dim());
  int total_iters = 0;
  bool converged = false;
  if (!cones) {
    FistaResult r = fista_stage(p, std::move(x), 0.0, 1.0, cfg.rel_tol, cfg.max_iters, cfg);
    return finish_solution(p, std::move(r.x), r.iterations, r.converged, "penalized", 0.0, 0.0,
                           cfg);
  }
  // continuation on the smoothing width down to cfg.huber_mu
  std::vector<double> stages;
  double mu = std::max(cfg.huber_mu, 1e-3);
  while (mu > cfg.huber_mu * 1.0001) {
    stages.push_back(mu);
    mu /= 10.0;
  }
  stages.push_back(cfg.huber_mu);
  int per_stage = std::max(200, cfg.max_iters / static_cast<int>(stages.size()));
  for (size_t si = 0; si < stages.size(); ++si) {
    bool last = si + 1 == stages.size();
    double tol = last ? cfg.rel_tol : std::min(1e-6, cfg.rel_tol * 100.0);
    FistaResult r = fista_stage(p, std::move(x), rho, stages[si], tol, per_stage, cfg);
    x = std::move(r.x);
    total_iters += r.iterations;
    converged = r.converged;
  }
  return finish_solution(p, std::move(x), total_iters, converged, "penalized", rho, 0.0, cfg);
}

namespace {

struct AdmmFactors {
  double sigma = 1.0;
  std::vector<Eigen::LLT<MatrixXd>> chol;  // per block (size 1 when uniform)
  Eigen::LLT<MatrixXd> small_chol;         // I_n + J D^{-1} J^T

  void build(const Program& p, double sig) {
    sigma = sig;
    const bool uni = p.btb_uniform();
    const int nf = uni ? 1 : p.n_blocks;
    chol.assign(nf, Eigen::LLT<MatrixXd>());
    MatrixXd btb;
    for (int b = 0; b < nf; ++b) {
      p.block_btb(b, btb);
      btb = sig * (btb + MatrixXd::Identity(p.block_dim, p.block_dim));
      chol[b].compute(btb);
      if (chol[b].info() != Eigen::Success)
        throw std::runtime_error("solve_admm: block factorization failed");
    }
    MatrixXd S = MatrixXd::Identity(p.n, p.n) + p.jdinvjt(chol);
    small_chol.compute(S);
    if (small_chol.info() != Eigen::Success)
      throw std::runtime_error("solve_admm: coupling factorization failed");
  }

  void dinv(const Program& p, const VectorXd& in, VectorXd& out) const {
    out.resize(in.size());
    const bool uni = chol.size() == 1;
    for (int b = 0; b < p.n_blocks; ++b) {
      Eigen::Map<const VectorXd> i(in.data() + size_t(b) * p.block_dim, p.block_dim);
      Eigen::Map<VectorXd> o(out.data() + size_t(b) * p.block_dim, p.block_dim);
      o = chol[uni ? 0 : b].solve(i);
    }
  }

  /// Solves (J^T J + sigma(B^T B + I)) theta = rhs via Woodbury.
  void x_update(const Program& p, const VectorXd& rhs, VectorXd& theta) const {
    VectorXd z;
    dinv(p, rhs, z);
    VectorXd w = p.predict(z);
    VectorXd alpha = small_chol.solve(w);
    VectorXd g;
    p.predict_adj(alpha, g);
    VectorXd corr;
    dinv(p, g, corr);
    theta = z - corr;
  }
};

}  // namespace

Solution solve_admm(const Program& p, const SolverConfig& cfg, const Solution* warm) {
  const int rows = p.total_cone_rows();
  if (rows == 0) {
    Solution s = solve_penalized(p, cfg);
    s.mode = "admm";
    return s;
  }
  const int dim = p.total_dim();
  const double alpha = 1.6;  // over-relaxation

  double sigma = cfg.admm_sigma;
  VectorXd theta = VectorXd::Zero(dim), t = VectorXd::Zero(dim);
  VectorXd s = VectorXd::Zero(rows), us = VectorXd::Zero(rows), ut = VectorXd::Zero(dim);
  if (warm && warm->theta.size() == dim) {
    theta = warm->theta;
    t = theta;
    s = p.cone_values(theta).cwiseMax(0.0);
    if (warm->admm_us.size() == rows) us = warm->admm_us;
    if (warm->admm_ut.size() == dim) ut = warm->admm_ut;
    if (warm->sigma > 0) sigma = warm->sigma;
  }

  AdmmFactors fac;
  fac.build(p, sigma);
  VectorXd jty(dim);
  p.predict_adj(p.y, jty);

  VectorXd rhs(dim), bt(rows), tmp(dim), s_old(rows), t_old(dim), dvec(dim), coneadj(dim);
  int it = 0;
  bool converged = false;
  for (it = 1; it <= cfg.max_iters; ++it) {
    p.cone_adj(s - us, coneadj);
    rhs = jty + sigma * coneadj + sigma * (t - ut);
    fac.x_update(p, rhs, theta);
    bt = p.cone_values(theta);

    s_old = s;
    t_old = t;
    VectorXd bhat = alpha * bt + (1.0 - alpha) * s_old;
    s = (bhat + us).cwiseMax(0.0);
    us += bhat - s;
    VectorXd that = alpha * theta + (1.0 - alpha) * t_old;
    t = that + ut;
    apply_penalty_prox(p, t, 1.0 / sigma);
    ut += that - t;

    double pri = std::sqrt((bt - s).squaredNorm() + (theta - t).squaredNorm());
    p.cone_adj(s - s_old, dvec);
    double dua = sigma * std::sqrt((dvec + (t - t_old)).squaredNorm());

    double scale_pri =
        std::max(std::sqrt(bt.squaredNorm() + theta.squaredNorm()),
                 std::sqrt(s.squaredNorm() + t.squaredNorm()));
    p.cone_adj(us, dvec);
    double scale_dua = sigma * (dvec + ut).norm();
    double eps_pri = std::sqrt(double(rows + dim)) * 1e-12 + cfg.rel_tol * scale_pri;
    double eps_dua = std::sqrt(double(dim)) * 1e-12 + cfg.rel_tol * scale_dua;
    if (pri <= eps_pri && dua <= eps_dua) {
      converged = true;
      break;
    }
    if (cfg.adapt_sigma && it % 25 == 0 && it <= 4000) {
      if (pri > 10.0 * dua && sigma < 1e8) {
        sigma *= 2.0;
        us /= 2.0;
        ut /= 2.0;
        fac.build(p, sigma);
      } else if (dua > 10.0 * pri && sigma > 1e-8) {
        sigma /= 2.0;
        us *= 2.0;
        ut *= 2.0;
        fac.build(p, sigma);
      }
    }
  }
  Solution sol = finish_solution(p, t, std::min(it, cfg.max_iters), converged, "admm",
                                 cfg.rho > 0 ? cfg.rho : 0.0, sigma, cfg);
  sol.admm_us = us;
  sol.admm_ut = ut;
  return sol;
}

DualCertificate dual_certificate(const Program& p, const Solution& sol, int n_probe,
                                 uint64_t seed) {
  DualCertificate cert;
  cert.beta = p.beta;
  cert.v = p.y - p.predict(sol.theta);
  const VectorXd& v = cert.v;
  double best = 0.0;
  VectorXd best_gen;
  auto consider = [&](const VectorXd& gen) {
    if (gen.size() == 0) return;
    double val = p.probe_value(gen, v);
    if (val > best) {
      best = val;
      best_gen = gen;
    }
  };

  double exact = p.dual_constraint_exact(v);
  if (std::isfinite(exact)) {
    best = exact;
  } else {
    const size_t P = p.arr ? p.arr->count() : 0;
    cert.block_slack.resize(P);
    for (size_t i = 0; i < P; ++i) {
      VectorXd probe = p.linearized_max_probe(static_cast<int>(i), v);
      double val = probe.size() ? p.probe_value(probe, v) : 0.0;
      cert.block_slack[i] = p.beta - val;
      consider(probe);
      Eigen::Map<const VectorXd> wit(p.arr->generator(i), p.arr->gen_len);
      consider(wit);
    }
    int gen_dim = p.arr && p.arr->gen_len > 0 ? p.arr->gen_len : p.block_dim;
    Rng rng(seed);
    for (int k = 0; k < n_probe; ++k) consider(rng.gaussian_vec(gen_dim));
  }
  cert.max_value = best;
  cert.pass = best <= p.beta * (1.0 + 1e-4);
  cert.violating_generator = best_gen;
  return cert;
}

std::string solution_to_json(const Solution& s) {
  nlohmann::json j;
  j["format"] = "ccnn.solution.v1";
  j["objective"] = s.objective;
  j["constraint_violation"] = s.constraint_violation;
  j["iterations"] = s.iterations;
  j["mode"] = s.mode;
  j["converged"] = s.converged;
  j["beta"] = s.beta;
  j["rho"] = s.rho;
  j["rel_tol"] = s.rel_tol;
  j["sigma"] = s.sigma;
  j["program_hash"] = hash_hex(s.program_hash);
  auto enc = [](const VectorXd& v) {
    return encode_doubles(std::vector<double>(v.data(), v.data() + v.size()));
  };
  j["theta_b64"] = enc(s.theta);
  j["dual_v_b64"] = enc(s.dual_v);
  j["admm_us_b64"] = enc(s.admm_us);
  j["admm_ut_b64"] = enc(s.admm_ut);
  return j.dump(2);
}

Solution solution_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "ccnn.solution.v1") throw std::runtime_error("solution: bad format");
  Solution s;
  s.objective = j.at("objective").get<double>();
  s.constraint_violation = j.at("constraint_violation").get<double>();
  s.iterations = j.at("iterations").get<int>();
  s.mode = j.at("mode").get<std::string>();
  s.converged = j.at("converged").get<bool>();
  s.beta = j.at("beta").get<double>();
  s.rho = j.at("rho").get<double>();
  s.rel_tol = j.at("rel_tol").get<double>();
  s.sigma = j.at("sigma").get<double>();
  s.program_hash = std::stoull(j.at("program_hash").get<std::string>(), nullptr, 16);
  auto dec = [&](const char* key) {
    std::vector<double> v = decode_doubles(j.at(key).get<std::string>());
    return Eigen::Map<VectorXd>(v.data(), v.size()).eval();
  };
  s.theta = dec("theta_b64");
  s.dual_v = dec("dual_v_b64");
  s.admm_us = dec("admm_us_b64");
  s.admm_ut = dec("admm_ut_b64");
  return s;
}

}  // namespace ccnn
