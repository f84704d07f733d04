#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cnnconvex/nets.hpp"

namespace ccnn {

/// Regularized objectives, Eq-style: 1/2||f - y||^2 + (beta/2) * sum of the
/// squared norms of the regularized weight pair per architecture.
double objective(const TwoLayerNet& net, const PatchSet& ps, const VectorXd& y, double beta);
double objective(const CircularNet& net, const SpectralFeatures& sf, const VectorXd& y,
                 double beta);
double objective(const ThreeLayerNet& net, const PatchSet& ps, const VectorXd& y, double beta);
double objective(const LinearNet& net, const PatchSet& ps, const VectorXd& y, double beta);

struct SGDConfig {
  double lr = 1e-2;
  int batch = 10;
  int epochs = 1000;
  uint64_t seed = 0;
  double init_scale = 1.0;      // multiplies the 1/sqrt(fan) defaults
  double beta = 1e-3;
  double decay_factor = 1.0;    // 1.0 = constant schedule
  int decay_every = 0;          // epochs between decays (0 = never)
  int log_every = 1;            // epochs between trajectory records
};

struct TrajectoryPoint {
  int epoch = 0;
  double wall_ms = 0.0;
  double objective = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

template <typename Net>
struct SgdRun {
  Net net;
  std::vector<TrajectoryPoint> trajectory;
  bool diverged = false;
};

SgdRun<TwoLayerNet> train_sgd_twolayer(const PatchSet& ps, const VectorXd& y, int m, Pool pool,
                                       const SGDConfig& cfg,
                                       const PatchSet* test_ps = nullptr,
                                       const VectorXd* test_y = nullptr);
SgdRun<CircularNet> train_sgd_circular(const MatrixXd& X, const VectorXd& y, int m, int L,
                                       const SGDConfig& cfg, const MatrixXd* test_X = nullptr,
                                       const VectorXd* test_y = nullptr);
SgdRun<ThreeLayerNet> train_sgd_threelayer(const PatchSet& ps, const VectorXd& y, int m,
                                           const SGDConfig& cfg,
                                           const PatchSet* test_ps = nullptr,
                                           const VectorXd* test_y = nullptr);

/// Alternating least squares for the linear CNN (test oracle for the nuclear
/// program); returns the best regularized objective over the run.
double linear_cnn_als(const PatchSet& ps, const VectorXd& y, int m, double beta, uint64_t seed,
                      int iters = 500);

double sign_accuracy(const VectorXd& pred, const VectorXd& y);

std::string trajectory_csv(const std::vector<TrajectoryPoint>& traj, uint64_t seed);

}  // namespace ccnn
