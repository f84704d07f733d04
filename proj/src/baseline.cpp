#include "cnnconvex/baseline.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace ccnn {

namespace {

// time-domain circulant products for U with rows U[j,k] = u[(k-j) mod d]
VectorXd circ_mult(const VectorXd& u, const VectorXd& w) {
  const int d = static_cast<int>(u.size());
  VectorXd out(d);
  for (int j = 0; j < d; ++j) {
    double s = 0;
    for (int k = 0; k < d; ++k) s += u[(k - j + d) % d] * w[k];
    out[j] = s;
  }
  return out;
}

VectorXd circ_mult_t(const VectorXd& u, const VectorXd& g) {
  const int d = static_cast<int>(u.size());
  VectorXd out(d);
  for (int k = 0; k < d; ++k) {
    double s = 0;
    for (int j = 0; j < d; ++j) s += u[(k - j + d) % d] * g[j];
    out[k] = s;
  }
  return out;
}

// gu[p] = sum_j gq[j] * w[(j+p) mod d], the circulant fold of dJ/dU
VectorXd circ_fold(const VectorXd& gq, const VectorXd& w) {
  const int d = static_cast<int>(gq.size());
  VectorXd out(d);
  for (int p = 0; p < d; ++p) {
    double s = 0;
    for (int j = 0; j < d; ++j) s += gq[j] * w[(j + p) % d];
    out[p] = s;
  }
  return out;
}

}  // namespace

CircularNet CircularNet::from_real(const std::vector<MatrixXd>& u_gens,
                                   const std::vector<VectorXd>& w1_time, const VectorXd& w2, int d,
                                   int L) {
  CircularNet net;
  net.L = L;
  net.d = d;
  net.m = static_cast<int>(w2.size());
  net.w2 = w2;
  net.u_gens = u_gens;
  net.w1_time = w1_time;
  net.has_real = true;
  MatrixXcd F = dft_matrix(d);
  double sd = std::sqrt(double(d));
  net.diags.resize(net.m);
  net.w1_spec.resize(net.m);
  for (int j = 0; j < net.m; ++j) {
    net.diags[j].resize(d, L - 2);
    for (int l = 0; l < L - 2; ++l)
      net.diags[j].col(l) = sd * (F * u_gens[j].col(l).cast<std::complex<double>>());
    net.w1_spec[j] = F.adjoint() * w1_time[j].cast<std::complex<double>>();
  }
  net.realness_residual = 0.0;
  return net;
}

void CircularNet::derive_real() {
  MatrixXcd F = dft_matrix(d);
  double sd = std::sqrt(double(d));
  u_gens.assign(m, MatrixXd(d, L - 2));
  w1_time.assign(m, VectorXd(d));
  double resid = 0.0;
  for (int j = 0; j < m; ++j) {
    for (int l = 0; l < L - 2; ++l) {
      VectorXcd u = (F.adjoint() * diags[j].col(l)) / sd;
      resid = std::max(resid, u.imag().cwiseAbs().maxCoeff());
      u_gens[j].col(l) = u.real();
    }
    VectorXcd w1 = F * w1_spec[j];
    resid = std::max(resid, w1.imag().cwiseAbs().maxCoeff());
    w1_time[j] = w1.real();
  }
  realness_residual = resid;
  has_real = true;
}

VectorXd forward(const TwoLayerNet& net, const PatchSet& ps) {
  VectorXd out = VectorXd::Zero(ps.n);
  for (int j = 0; j < net.m; ++j) {
    if (net.pool == Pool::Avg) {
      for (int k = 0; k < ps.K; ++k)
        out += (ps.patches[k] * net.filters.col(j)).cwiseMax(0.0) * net.out_w[j];
    } else {
      VectorXd mp = VectorXd::Zero(ps.n);
      for (int k = 0; k < ps.K; ++k)
        mp = mp.cwiseMax((ps.patches[k] * net.filters.col(j)).cwiseMax(0.0));
      out += mp * net.out_w[j];
    }
  }
  return out;
}

VectorXd forward(const CircularNet& net, const SpectralFeatures& sf) {
  VectorXd out = VectorXd::Zero(sf.n);
  for (int j = 0; j < net.m; ++j) {
    VectorXcd q = net.w1_spec[j];
    for (int l = 0; l < net.L - 2; ++l) q = net.diags[j].col(l).cwiseProduct(q);
    out += (sf.Xt * q).real().cwiseMax(0.0) * net.w2[j];
  }
  return out;
}

VectorXd forward_dense(const CircularNet& net, const MatrixXd& X) {
  if (!net.has_real) throw std::invalid_argument("forward_dense: real parameterization missing");
  VectorXd out = VectorXd::Zero(X.rows());
  for (int j = 0; j < net.m; ++j) {
    VectorXd t = net.w1_time[j];
    for (int l = 0; l < net.L - 2; ++l) t = circ_mult(net.u_gens[j].col(l), t);
    out += (X * t).cwiseMax(0.0) * net.w2[j];
  }
  return out;
}

VectorXd forward(const ThreeLayerNet& net, const PatchSet& ps) {
  VectorXd out = VectorXd::Zero(ps.n);
  for (int j = 0; j < net.m; ++j) {
    VectorXd pre2 = VectorXd::Zero(ps.n);
    for (int k = 0; k < ps.K; ++k)
      pre2 += (ps.patches[k] * net.u.col(j)).cwiseMax(0.0) * net.w1(k, j);
    out += pre2.cwiseMax(0.0) * net.w2[j];
  }
  return out;
}

VectorXd forward(const LinearNet& net, const PatchSet& ps) {
  VectorXd out = VectorXd::Zero(ps.n);
  for (int j = 0; j < net.m; ++j)
    for (int k = 0; k < ps.K; ++k) out += (ps.patches[k] * net.u.col(j)) * net.w(k, j);
  return out;
}

double objective(const TwoLayerNet& net, const PatchSet& ps, const VectorXd& y, double beta) {
  double reg = 0;
  for (int j = 0; j < net.m; ++j)
    reg += net.filters.col(j).squaredNorm() + net.out_w[j] * net.out_w[j];
  return 0.5 * (forward(net, ps) - y).squaredNorm() + 0.5 * beta * reg;
}

double objective(const CircularNet& net, const SpectralFeatures& sf, const VectorXd& y,
                 double beta) {
  double reg = 0;
  for (int j = 0; j < net.m; ++j)
    reg += net.w1_spec[j].squaredNorm() + net.w2[j] * net.w2[j];
  return 0.5 * (forward(net, sf) - y).squaredNorm() + 0.5 * beta * reg;
}

double objective(const ThreeLayerNet& net, const PatchSet& ps, const VectorXd& y, double beta) {
  double reg = 0;
  for (int j = 0; j < net.m; ++j)
    reg += net.w1.col(j).squaredNorm() + net.w2[j] * net.w2[j];
  return 0.5 * (forward(net, ps) - y).squaredNorm() + 0.5 * beta * reg;
}

double objective(const LinearNet& net, const PatchSet& ps, const VectorXd& y, double beta) {
  double reg = 0;
  for (int j = 0; j < net.m; ++j) reg += net.u.col(j).squaredNorm() + net.w.col(j).squaredNorm();
  return 0.5 * (forward(net, ps) - y).squaredNorm() + 0.5 * beta * reg;
}

double sign_accuracy(const VectorXd& pred, const VectorXd& y) {
  int ok = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if ((pred[i] >= 0 ? 1.0 : -1.0) == y[i]) ++ok;
  return y.size() ? double(ok) / double(y.size()) : 0.0;
}

namespace {

struct EpochPlan {
  std::vector<int> order;
  int batch;
  explicit EpochPlan(int n, int b) : order(n), batch(std::min(b, n)) {}
};

double lr_at(const SGDConfig& cfg, int epoch) {
  if (cfg.decay_factor >= 1.0 || cfg.decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

}  // namespace

SgdRun<TwoLayerNet> train_sgd_twolayer(const PatchSet& ps, const VectorXd& y, int m, Pool pool,
                                       const SGDConfig& cfg, const PatchSet* test_ps,
                                       const VectorXd* test_y) {
  const int n = ps.n, K = ps.K, h = ps.h;
  Rng rng(cfg.seed);
  TwoLayerNet net;
  net.m = m;
  net.h = h;
  net.pool = pool;
  net.filters.resize(h, m);
  net.out_w.resize(m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < h; ++i) net.filters(i, j) = cfg.init_scale * rng.gaussian() / std::sqrt(h);
    net.out_w[j] = cfg.init_scale * rng.gaussian() / std::sqrt(double(m));
  }
  SgdRun<TwoLayerNet> run;
  double t0 = now_ms();
  double j0 = objective(net, ps, y, cfg.beta);
  EpochPlan plan(n, cfg.batch);
  for (int i = 0; i < n; ++i) plan.order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(cfg, epoch);
    rng.shuffle(plan.order);
    for (int start = 0; start < n; start += plan.batch) {
      int bsz = std::min(plan.batch, n - start);
      double scale = double(n) / double(bsz);
      // forward on batch
      VectorXd res(bsz);
      MatrixXd pre(bsz, K);  // reused per filter
      std::vector<MatrixXd> pres(m, MatrixXd(bsz, K));
      for (int i = 0; i < bsz; ++i) res[i] = -y[plan.order[start + i]];
      for (int j = 0; j < m; ++j) {
        for (int k = 0; k < K; ++k)
          for (int i = 0; i < bsz; ++i)
            pres[j](i, k) = ps.patches[k].row(plan.order[start + i]).dot(net.filters.col(j));
        for (int i = 0; i < bsz; ++i) {
          double o = 0;
          if (pool == Pool::Avg) {
            for (int k = 0; k < K; ++k) o += std::max(0.0, pres[j](i, k));
          } else {
            for (int k = 0; k < K; ++k) o = std::max(o, std::max(0.0, pres[j](i, k)));
          }
          res[i] += o * net.out_w[j];
        }
      }
      for (int j = 0; j < m; ++j) {
        VectorXd gu = VectorXd::Zero(h);
        double gw = 0;
        for (int i = 0; i < bsz; ++i) {
          int row = plan.order[start + i];
          double g = scale * res[i];
          if (pool == Pool::Avg) {
            double acc = 0;
            for (int k = 0; k < K; ++k) {
              double pv = pres[j](i, k);
              if (pv > 0) {
                acc += pv;
                gu += g * net.out_w[j] * ps.patches[k].row(row).transpose();
              }
            }
            gw += g * acc;
          } else {
            int best = 0;
            for (int k = 1; k < K; ++k)
              if (pres[j](i, k) > pres[j](i, best)) best = k;
            double pv = pres[j](i, best);
            if (pv > 0) {
              gu += g * net.out_w[j] * ps.patches[best].row(row).transpose();
              gw += g * pv;
            }
          }
        }
        gu += cfg.beta * net.filters.col(j);
        gw += cfg.beta * net.out_w[j];
        net.filters.col(j) -= lr * gu;
        net.out_w[j] -= lr * gw;
      }
    }
    if (epoch % cfg.log_every == 0 || epoch == cfg.epochs - 1) {
      TrajectoryPoint pt;
      pt.epoch = epoch;
      pt.wall_ms = now_ms() - t0;
      pt.objective = objective(net, ps, y, cfg.beta);
      if (test_ps && test_y) pt.test_accuracy = sign_accuracy(forward(net, *test_ps), *test_y);
      run.trajectory.push_back(pt);
      if (pt.objective > 1e3 * j0 || !std::isfinite(pt.objective)) {
        run.diverged = true;
        break;
      }
    }
  }
  run.net = net;
  return run;
}

SgdRun<CircularNet> train_sgd_circular(const MatrixXd& X, const VectorXd& y, int m, int L,
                                       const SGDConfig& cfg, const MatrixXd* test_X,
                                       const VectorXd* test_y) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int layers = L - 2;
  Rng rng(cfg.seed);
  std::vector<MatrixXd> us(m, MatrixXd(d, layers));
  std::vector<VectorXd> w1(m, VectorXd(d));
  VectorXd w2(m);
  for (int j = 0; j < m; ++j) {
    for (int l = 0; l < layers; ++l)
      for (int i = 0; i < d; ++i) us[j](i, l) = cfg.init_scale * rng.gaussian() / std::sqrt(d);
    for (int i = 0; i < d; ++i) w1[j][i] = cfg.init_scale * rng.gaussian() / std::sqrt(d);
    w2[j] = cfg.init_scale * rng.gaussian() / std::sqrt(double(m));
  }
  MatrixXcd F;
  double dpow = std::pow(double(d), 0.5 * (L - 2));
  auto project = [&](int j) {
    if (L == 3) {
      double nu = us[j].col(0).norm();
      if (nu > 1.0) us[j].col(0) /= nu;
      return;
    }
    if (F.size() == 0) F = dft_matrix(d);
    VectorXd prod2 = VectorXd::Ones(d);
    for (int l = 0; l < layers; ++l) {
      VectorXcd lam = std::sqrt(double(d)) * (F * us[j].col(l).cast<std::complex<double>>());
      prod2 = prod2.cwiseProduct(lam.cwiseAbs2());
    }
    double s = std::sqrt(prod2.sum()) / dpow;
    if (s > 1.0) {
      double f = std::pow(s, -1.0 / layers);
      us[j] *= f;
    }
  };
  for (int j = 0; j < m; ++j) project(j);

  auto full_objective = [&]() {
    CircularNet net = CircularNet::from_real(us, w1, w2, d, L);
    double reg = 0;
    for (int j = 0; j < m; ++j) reg += w1[j].squaredNorm() + w2[j] * w2[j];
    return 0.5 * (forward_dense(net, X) - y).squaredNorm() + 0.5 * cfg.beta * reg;
  };

  SgdRun<CircularNet> run;
  double t0 = now_ms();
  double j0 = full_objective();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  int batch = std::min(cfg.batch, n);
  std::vector<std::vector<VectorXd>> ts(m);  // per filter: t_0..t_{layers}
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(cfg, epoch);
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      int bsz = std::min(batch, n - start);
      double scale = double(n) / double(bsz);
      // shared filter chain (independent of batch)
      std::vector<VectorXd> pre(m);
      for (int j = 0; j < m; ++j) {
        ts[j].assign(layers + 1, VectorXd());
        ts[j][0] = w1[j];
        for (int l = 0; l < layers; ++l) ts[j][l + 1] = circ_mult(us[j].col(l), ts[j][l]);
      }
      VectorXd res(bsz);
      MatrixXd pr(bsz, m);
      for (int i = 0; i < bsz; ++i) {
        int row = order[start + i];
        double o = -y[row];
        for (int j = 0; j < m; ++j) {
          pr(i, j) = X.row(row).dot(ts[j][layers]);
          o += std::max(0.0, pr(i, j)) * w2[j];
        }
        res[i] = o;
      }
      for (int j = 0; j < m; ++j) {
        VectorXd gq = VectorXd::Zero(d);
        double gw2 = 0;
        for (int i = 0; i < bsz; ++i) {
          int row = order[start + i];
          double g = scale * res[i];
          if (pr(i, j) > 0) {
            gq += g * w2[j] * X.row(row).transpose();
            gw2 += g * pr(i, j);
          }
        }
        // backprop through the circulant chain
        VectorXd gt = gq;
        for (int l = layers - 1; l >= 0; --l) {
          VectorXd gu = circ_fold(gt, ts[j][l]);
          gt = circ_mult_t(us[j].col(l), gt);
          us[j].col(l) -= lr * gu;
        }
        w1[j] -= lr * (gt + cfg.beta * w1[j]);
        w2[j] -= lr * (gw2 + cfg.beta * w2[j]);
        project(j);
      }
    }
    if (epoch % cfg.log_every == 0 || epoch == cfg.epochs - 1) {
      TrajectoryPoint pt;
      pt.epoch = epoch;
      pt.wall_ms = now_ms() - t0;
      pt.objective = full_objective();
      if (test_X && test_y) {
        CircularNet net = CircularNet::from_real(us, w1, w2, d, L);
        pt.test_accuracy = sign_accuracy(forward_dense(net, *test_X), *test_y);
      }
      run.trajectory.push_back(pt);
      if (pt.objective > 1e3 * j0 || !std::isfinite(pt.objective)) {
        run.diverged = true;
        break;
      }
    }
  }
  run.net = CircularNet::from_real(us, w1, w2, d, L);
  return run;
}

SgdRun<ThreeLayerNet> train_sgd_threelayer(const PatchSet& ps, const VectorXd& y, int m,
                                           const SGDConfig& cfg, const PatchSet* test_ps,
                                           const VectorXd* test_y) {
  const int n = ps.n, K = ps.K, h = ps.h;
  Rng rng(cfg.seed);
  ThreeLayerNet net;
  net.m = m;
  net.h = h;
  net.K = K;
  net.u.resize(h, m);
  net.w1.resize(K, m);
  net.w2.resize(m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < h; ++i) net.u(i, j) = cfg.init_scale * rng.gaussian() / std::sqrt(h);
    double nu = net.u.col(j).norm();
    if (nu > 1.0) net.u.col(j) /= nu;
    for (int k = 0; k < K; ++k) net.w1(k, j) = cfg.init_scale * rng.gaussian() / std::sqrt(K);
    net.w2[j] = cfg.init_scale * rng.gaussian() / std::sqrt(double(m));
  }
  SgdRun<ThreeLayerNet> run;
  double t0 = now_ms();
  double j0 = objective(net, ps, y, cfg.beta);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  int batch = std::min(cfg.batch, n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(cfg, epoch);
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch) {
      int bsz = std::min(batch, n - start);
      double scale = double(n) / double(bsz);
      std::vector<MatrixXd> pre1(m, MatrixXd(bsz, K));
      MatrixXd pre2(bsz, m);
      VectorXd res(bsz);
      for (int i = 0; i < bsz; ++i) {
        int row = order[start + i];
        double o = -y[row];
        for (int j = 0; j < m; ++j) {
          double p2 = 0;
          for (int k = 0; k < K; ++k) {
            double p1 = ps.patches[k].row(row).dot(net.u.col(j));
            pre1[j](i, k) = p1;
            p2 += std::max(0.0, p1) * net.w1(k, j);
          }
          pre2(i, j) = p2;
          o += std::max(0.0, p2) * net.w2[j];
        }
        res[i] = o;
      }
      for (int j = 0; j < m; ++j) {
        VectorXd gu = VectorXd::Zero(h);
        VectorXd gw1 = VectorXd::Zero(K);
        double gw2 = 0;
        for (int i = 0; i < bsz; ++i) {
          int row = order[start + i];
          double g = scale * res[i];
          if (pre2(i, j) > 0) {
            double g2 = g * net.w2[j];
            for (int k = 0; k < K; ++k) {
              double p1 = pre1[j](i, k);
              if (p1 > 0) {
                gw1[k] += g2 * p1;
                gu += g2 * net.w1(k, j) * ps.patches[k].row(row).transpose();
              }
            }
            gw2 += g * pre2(i, j);
          }
        }
        gw1 += cfg.beta * net.w1.col(j);
        gw2 += cfg.beta * net.w2[j];
        net.u.col(j) -= lr * gu;
        net.w1.col(j) -= lr * gw1;
        net.w2[j] -= lr * gw2;
        double nu = net.u.col(j).norm();
        if (nu > 1.0) net.u.col(j) /= nu;
      }
    }
    if (epoch % cfg.log_every == 0 || epoch == cfg.epochs - 1) {
      TrajectoryPoint pt;
      pt.epoch = epoch;
      pt.wall_ms = now_ms() - t0;
      pt.objective = objective(net, ps, y, cfg.beta);
      if (test_ps && test_y) pt.test_accuracy = sign_accuracy(forward(net, *test_ps), *test_y);
      run.trajectory.push_back(pt);
      if (pt.objective > 1e3 * j0 || !std::isfinite(pt.objective)) {
        run.diverged = true;
        break;
      }
    }
  }
  run.net = net;
  return run;
}

double linear_cnn_als(const PatchSet& ps, const VectorXd& y, int m, double beta, uint64_t seed,
                      int iters) {
  const int K = ps.K, h = ps.h, n = ps.n;
  Rng rng(seed);
  LinearNet net;
  net.m = m;
  net.u.resize(h, m);
  net.w.resize(K, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < h; ++i) net.u(i, j) = rng.gaussian() / std::sqrt(h);
    for (int k = 0; k < K; ++k) net.w(k, j) = rng.gaussian() / std::sqrt(K);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; ++it) {
    // solve for all filters jointly (ridge)
    MatrixXd B(n, m * h);
    for (int j = 0; j < m; ++j) {
      MatrixXd Bj = MatrixXd::Zero(n, h);
      for (int k = 0; k < K; ++k) Bj += net.w(k, j) * ps.patches[k];
      B.middleCols(j * h, h) = Bj;
    }
    MatrixXd G = B.transpose() * B + beta * MatrixXd::Identity(m * h, m * h);
    VectorXd uvec = G.ldlt().solve(B.transpose() * y);
    for (int j = 0; j < m; ++j) net.u.col(j) = uvec.segment(j * h, h);
    // solve for all output weights jointly
    MatrixXd C(n, m * K);
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < K; ++k) C.col(j * K + k) = ps.patches[k] * net.u.col(j);
    MatrixXd G2 = C.transpose() * C + beta * MatrixXd::Identity(m * K, m * K);
    VectorXd wvec = G2.ldlt().solve(C.transpose() * y);
    for (int j = 0; j < m; ++j) net.w.col(j) = wvec.segment(j * K, K);
    double obj = objective(net, ps, y, beta);
    if (std::abs(prev - obj) < 1e-14 * (1.0 + std::abs(obj))) break;
    prev = obj;
  }
  return objective(net, ps, y, beta);
}

std::string trajectory_csv(const std::vector<TrajectoryPoint>& traj, uint64_t seed) {
  std::ostringstream out;
  out << "seed,epoch,objective,test_accuracy,wall_ms\n";
  char buf[64];
  for (const TrajectoryPoint& p : traj) {
    out << seed << "," << p.epoch << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.objective);
    out << buf << ",";
    if (std::isfinite(p.test_accuracy)) {
      std::snprintf(buf, sizeof(buf), "%.17g", p.test_accuracy);
      out << buf;
    }
    out << ",";
    std::snprintf(buf, sizeof(buf), "%.3f", p.wall_ms);
    out << buf << "\n";
  }
  return out.str();
}

namespace {

std::string encode_vec(const VectorXd& v) {
  return encode_doubles(std::vector<double>(v.data(), v.data() + v.size()));
}
VectorXd decode_vec(const std::string& s) {
  std::vector<double> v = decode_doubles(s);
  return Eigen::Map<VectorXd>(v.data(), v.size());
}
std::string encode_cvec(const VectorXcd& v) {
  std::vector<double> raw(2 * v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    raw[2 * i] = v[i].real();
    raw[2 * i + 1] = v[i].imag();
  }
  return encode_doubles(raw);
}
VectorXcd decode_cvec(const std::string& s) {
  std::vector<double> raw = decode_doubles(s);
  VectorXcd v(raw.size() / 2);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = std::complex<double>(raw[2 * i], raw[2 * i + 1]);
  return v;
}

}  // namespace

std::string twolayer_to_json(const TwoLayerNet& net) {
  nlohmann::json j;
  j["format"] = "ccnn.net.twolayer.v1";
  j["pool"] = net.pool == Pool::Avg ? "avg" : "max";
  j["m"] = net.m;
  j["h"] = net.h;
  std::vector<double> f(net.filters.data(), net.filters.data() + net.filters.size());
  j["filters_b64"] = encode_doubles(f);
  j["out_w_b64"] = encode_vec(net.out_w);
  return j.dump(2);
}

TwoLayerNet twolayer_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "ccnn.net.twolayer.v1")
    throw std::runtime_error("twolayer net: bad format");
  TwoLayerNet net;
  net.pool = j.at("pool").get<std::string>() == "avg" ? Pool::Avg : Pool::Max;
  net.m = j.at("m").get<int>();
  net.h = j.at("h").get<int>();
  std::vector<double> f = decode_doubles(j.at("filters_b64").get<std::string>());
  net.filters = Eigen::Map<MatrixXd>(f.data(), net.h, net.m);
  net.out_w = decode_vec(j.at("out_w_b64").get<std::string>());
  return net;
}

std::string circular_to_json(const CircularNet& net) {
  nlohmann::json j;
  j["format"] = "ccnn.net.circular.v1";
  j["L"] = net.L;
  j["d"] = net.d;
  j["m"] = net.m;
  j["realness_residual"] = net.realness_residual;
  nlohmann::json diags = nlohmann::json::array();
  nlohmann::json w1s = nlohmann::json::array();
  for (int f = 0; f < net.m; ++f) {
    nlohmann::json per = nlohmann::json::array();
    for (int l = 0; l < net.L - 2; ++l) per.push_back(encode_cvec(net.diags[f].col(l)));
    diags.push_back(per);
    w1s.push_back(encode_cvec(net.w1_spec[f]));
  }
  j["diags"] = diags;
  j["w1_spec"] = w1s;
  j["w2_b64"] = encode_vec(net.w2);
  return j.dump(2);
}

CircularNet circular_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "ccnn.net.circular.v1")
    throw std::runtime_error("circular net: bad format");
  CircularNet net;
  net.L = j.at("L").get<int>();
  net.d = j.at("d").get<int>();
  net.m = j.at("m").get<int>();
  net.realness_residual = j.at("realness_residual").get<double>();
  net.w2 = decode_vec(j.at("w2_b64").get<std::string>());
  net.diags.resize(net.m);
  net.w1_spec.resize(net.m);
  for (int f = 0; f < net.m; ++f) {
    net.diags[f].resize(net.d, net.L - 2);
    for (int l = 0; l < net.L - 2; ++l)
      net.diags[f].col(l) = decode_cvec(j.at("diags")[f][l].get<std::string>());
    net.w1_spec[f] = decode_cvec(j.at("w1_spec")[f].get<std::string>());
  }
  return net;
}

std::string threelayer_to_json(const ThreeLayerNet& net) {
  nlohmann::json j;
  j["format"] = "ccnn.net.threelayer.v1";
  j["m"] = net.m;
  j["h"] = net.h;
  j["K"] = net.K;
  std::vector<double> u(net.u.data(), net.u.data() + net.u.size());
  std::vector<double> w1(net.w1.data(), net.w1.data() + net.w1.size());
  j["u_b64"] = encode_doubles(u);
  j["w1_b64"] = encode_doubles(w1);
  j["w2_b64"] = encode_vec(net.w2);
  return j.dump(2);
}

ThreeLayerNet threelayer_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "ccnn.net.threelayer.v1")
    throw std::runtime_error("threelayer net: bad format");
  ThreeLayerNet net;
  net.m = j.at("m").get<int>();
  net.h = j.at("h").get<int>();
  net.K = j.at("K").get<int>();
  std::vector<double> u = decode_doubles(j.at("u_b64").get<std::string>());
  std::vector<double> w1 = decode_doubles(j.at("w1_b64").get<std::string>());
  net.u = Eigen::Map<MatrixXd>(u.data(), net.h, net.m);
  net.w1 = Eigen::Map<MatrixXd>(w1.data(), net.K, net.m);
  net.w2 = decode_vec(j.at("w2_b64").get<std::string>());
  return net;
}

}  // namespace ccnn
