#pragma once

#include <string>
#include <vector>

#include "cnnconvex/data.hpp"
#include "cnnconvex/util.hpp"

namespace ccnn {

enum class Pool { Avg, Max };

/// Two-layer CNN f(X) = sum_j pool_k(relu(X_k u_j)) w_j.
struct TwoLayerNet {
  MatrixXd filters;  // h x m
  VectorXd out_w;    // m
  Pool pool = Pool::Avg;
  int m = 0, h = 0;
};

/// L-layer circular CNN f(X) = sum_j relu(X prod_l U_lj w_1j) w_2j with
/// circulant layers stored as spectral diagonals.
struct CircularNet {
  int L = 3, d = 0, m = 0;
  std::vector<MatrixXcd> diags;    // per filter: d x (L-2)
  std::vector<VectorXcd> w1_spec;  // per filter: F^H w_1
  VectorXd w2;
  double realness_residual = 0.0;
  // real parameterization (generators per circulant layer, time-domain w1)
  std::vector<MatrixXd> u_gens;   // per filter: d x (L-2)
  std::vector<VectorXd> w1_time;  // per filter: d
  bool has_real = false;

  static CircularNet from_real(const std::vector<MatrixXd>& u_gens,
                               const std::vector<VectorXd>& w1_time, const VectorXd& w2, int d,
                               int L);
  void derive_real();  // fills u_gens/w1_time from spectra; sets realness_residual
};

/// Three-layer two-ReLU CNN f(X) = sum_j relu(sum_k relu(X_k u_j) w_1jk) w_2j.
struct ThreeLayerNet {
  MatrixXd u;   // h x m
  MatrixXd w1;  // K x m
  VectorXd w2;  // m
  int m = 0, h = 0, K = 0;
};

/// Linear CNN f(X) = sum_j sum_k X_k u_j w_jk (used by the ALS baseline).
struct LinearNet {
  MatrixXd u;   // h x m
  MatrixXd w;   // K x m
  int m = 0;
};

VectorXd forward(const TwoLayerNet& net, const PatchSet& ps);
VectorXd forward(const CircularNet& net, const SpectralFeatures& sf);
/// Dense circulant route (real parameterization); pairs with the spectral
/// route in tests.
VectorXd forward_dense(const CircularNet& net, const MatrixXd& X);
VectorXd forward(const ThreeLayerNet& net, const PatchSet& ps);
VectorXd forward(const LinearNet& net, const PatchSet& ps);

std::string twolayer_to_json(const TwoLayerNet& net);
TwoLayerNet twolayer_from_json(const std::string& text);
std::string circular_to_json(const CircularNet& net);
CircularNet circular_from_json(const std::string& text);
std::string threelayer_to_json(const ThreeLayerNet& net);
ThreeLayerNet threelayer_from_json(const std::string& text);

}  // namespace ccnn
