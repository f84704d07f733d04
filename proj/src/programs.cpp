#include "cnnconvex/programs.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

namespace ccnn {

std::string to_string(Arch a) {
  switch (a) {
    case Arch::AvgPool: return "avgpool";
    case Arch::MaxPool: return "maxpool";
    case Arch::Circular: return "circular";
    case Arch::ThreeLayer: return "threelayer";
    case Arch::LinearNuclear: return "linear_nuclear";
    case Arch::LinearCircular: return "linear_circular";
  }
  return "avgpool";
}

Arch arch_from_string(const std::string& s) {
  if (s == "avgpool") return Arch::AvgPool;
  if (s == "maxpool") return Arch::MaxPool;
  if (s == "circular") return Arch::Circular;
  if (s == "threelayer") return Arch::ThreeLayer;
  if (s == "linear_nuclear") return Arch::LinearNuclear;
  if (s == "linear_circular") return Arch::LinearCircular;
  throw std::invalid_argument("unknown arch: " + s);
}

VectorXd Program::predict(const VectorXd& theta) const {
  VectorXd yhat = VectorXd::Zero(n);
  for (int b = 0; b < n_blocks; ++b) block_predict(b, theta.data() + size_t(b) * block_dim, yhat);
  return yhat;
}

void Program::predict_adj(const VectorXd& r, VectorXd& grad) const {
  grad.resize(total_dim());
  for (int b = 0; b < n_blocks; ++b) block_predict_adj(b, r, grad.data() + size_t(b) * block_dim);
}

VectorXd Program::cone_values(const VectorXd& theta) const {
  VectorXd s(total_cone_rows());
  for (int b = 0; b < n_blocks; ++b)
    block_cone(b, theta.data() + size_t(b) * block_dim, s.data() + size_t(b) * cone_rows_per_block);
  return s;
}

void Program::cone_adj(const VectorXd& mu, VectorXd& out) const {
  out.resize(total_dim());
  for (int b = 0; b < n_blocks; ++b)
    block_cone_adj(b, mu.data() + size_t(b) * cone_rows_per_block,
                   out.data() + size_t(b) * block_dim);
}

double Program::data_fit(const VectorXd& theta) const {
  return 0.5 * (predict(theta) - y).squaredNorm();
}

double Program::penalty_value(const VectorXd& theta) const {
  if (penalty == PenaltyKind::None) return 0.0;
  double total = 0.0;
  if (penalty == PenaltyKind::Nuclear) {
    for (int b = 0; b < n_blocks; ++b) {
      Eigen::Map<const MatrixXd> Z(theta.data() + size_t(b) * block_dim, nuc_rows, nuc_cols);
      Eigen::JacobiSVD<MatrixXd> svd(Z);
      total += svd.singularValues().sum();
    }
    return penalty_base * total;
  }
  for (int b = 0; b < n_blocks; ++b) {
    const double* th = theta.data() + size_t(b) * block_dim;
    for (const GroupDef& g : block_groups) {
      double s = 0;
      for (int i = 0; i < g.size; ++i) s += th[g.offset + i] * th[g.offset + i];
      total += g.weight * std::sqrt(s);
    }
  }
  return penalty_base * total;
}

double Program::objective(const VectorXd& theta) const {
  if (theta.size() != total_dim()) throw std::invalid_argument("objective: shape mismatch");
  return data_fit(theta) + penalty_value(theta);
}

double Program::violation(const VectorXd& theta) const {
  if (cone_rows_per_block == 0) return 0.0;
  VectorXd s = cone_values(theta);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) worst = std::max(worst, -s[i]);
  return worst;
}

double Program::block_norm(const VectorXd& theta, int b) const {
  return Eigen::Map<const VectorXd>(theta.data() + size_t(b) * block_dim, block_dim).norm();
}

double Program::dual_constraint_exact(const VectorXd&) const {
  return std::numeric_limits<double>::quiet_NaN();
}

VectorXd Program::linearized_max_probe(int, const VectorXd&) const { return VectorXd(); }

MatrixXd Program::jdinvjt(const std::vector<Eigen::LLT<MatrixXd>>& chol) const {
  MatrixXd out = MatrixXd::Zero(n, n);
  for (int b = 0; b < n_blocks; ++b) {
    MatrixXd Ab = dense_A(b);
    const auto& f = chol[chol.size() == 1 ? 0 : b];
    out.noalias() += Ab * f.solve(Ab.transpose());
  }
  return out;
}

uint64_t Program::hash() const {
  uint64_t h = fnv1a_str(to_string(arch));
  h = fnv1a_vec(y, h);
  h = fnv1a(&beta, sizeof(beta), h);
  h = fnv1a(&L, sizeof(L), h);
  if (arr) {
    uint64_t ah = arr->hash();
    h = fnv1a(&ah, sizeof(ah), h);
  }
  int dims[3] = {n_blocks, block_dim, cone_rows_per_block};
  h = fnv1a(dims, sizeof(dims), h);
  return h;
}

namespace {

std::vector<int8_t> row_signs_from_bits(const ArrangementSet& a, size_t pattern, int count,
                                        int offset = 0) {
  std::vector<int8_t> s(count);
  for (int i = 0; i < count; ++i) s[i] = a.bit(pattern, offset + i) ? 1 : -1;
  return s;
}

// ---------------------------------------------------------------------------
// Average pooling (Theorem 1 program)

class AvgPoolProgram final : public Program {
 public:
  MatrixXd M;                        // nK x h stacked patches
  std::vector<MatrixXd> A;           // per arrangement: n x h
  std::vector<std::vector<int8_t>> signs;  // per arrangement: nK cone signs

  void block_predict(int b, const double* th, VectorXd& acc) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    acc.noalias() += double(block_sign[b]) * (A[b / 2] * t);
  }
  void block_predict_adj(int b, const VectorXd& r, double* out) const override {
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = double(block_sign[b]) * (A[b / 2].transpose() * r);
  }
  void block_cone(int b, const double* th, double* s) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    Eigen::Map<VectorXd> sv(s, cone_rows_per_block);
    sv.noalias() = M * t;
    const auto& sg = signs[b / 2];
    for (int i = 0; i < cone_rows_per_block; ++i) sv[i] *= sg[i];
  }
  void block_cone_adj(int b, const double* mu, double* out) const override {
    VectorXd m(cone_rows_per_block);
    const auto& sg = signs[b / 2];
    for (int i = 0; i < cone_rows_per_block; ++i) m[i] = mu[i] * sg[i];
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = M.transpose() * m;
  }
  void block_btb(int, MatrixXd& out) const override { out = M.transpose() * M; }
  bool btb_uniform() const override { return true; }
  MatrixXd dense_A(int b) const override { return double(block_sign[b]) * A[b / 2]; }

  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    double nu = gen.norm();
    if (nu == 0) return 0;
    double acc = 0;
    for (const MatrixXd& Xk : patches->patches) acc += v.dot((Xk * gen).cwiseMax(0.0));
    return std::abs(acc) / nu;
  }
  VectorXd linearized_max_probe(int i, const VectorXd& v) const override {
    VectorXd g = A[i].transpose() * v;
    double ng = g.norm();
    return ng > 0 ? VectorXd(g / ng) : g;
  }
};

// ---------------------------------------------------------------------------
// Max pooling (Theorem 2 program)

class MaxPoolProgram final : public Program {
 public:
  MatrixXd M;
  std::vector<MatrixXd> A;                   // per arrangement: n x h (product masks)
  std::vector<std::vector<int8_t>> signs;    // relu signs, nK
  std::vector<std::vector<uint16_t>> argmax; // per arrangement: n
  int K = 0;

  // cone row layout per block: nK relu rows (patch-major), then ordered pairs
  // (k, j != k), n rows each, giving nK + nK(K-1) = nK^2 rows.
  void block_predict(int b, const double* th, VectorXd& acc) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    acc.noalias() += double(block_sign[b]) * (A[b / 2] * t);
  }
  void block_predict_adj(int b, const VectorXd& r, double* out) const override {
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = double(block_sign[b]) * (A[b / 2].transpose() * r);
  }
  void block_cone(int b, const double* th, double* s) const override {
    const int i = b / 2;
    Eigen::Map<const VectorXd> t(th, block_dim);
    MatrixXd pre(n, K);
    for (int k = 0; k < K; ++k) pre.col(k) = patches->patches[k] * t;
    const auto& sg = signs[i];
    const auto& am = argmax[i];
    int row = 0;
    for (int k = 0; k < K; ++k)
      for (int r = 0; r < n; ++r, ++row) s[row] = sg[k * n + r] * pre(r, k);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        for (int r = 0; r < n; ++r, ++row) s[row] = (am[r] == k) ? pre(r, k) - pre(r, j) : 0.0;
      }
  }
  void block_cone_adj(int b, const double* mu, double* out) const override {
    const int i = b / 2;
    Eigen::Map<VectorXd> o(out, block_dim);
    o.setZero();
    const auto& sg = signs[i];
    const auto& am = argmax[i];
    int row = 0;
    VectorXd tmp(n);
    for (int k = 0; k < K; ++k) {
      for (int r = 0; r < n; ++r, ++row) tmp[r] = mu[row] * sg[k * n + r];
      o.noalias() += patches->patches[k].transpose() * tmp;
    }
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        for (int r = 0; r < n; ++r, ++row) tmp[r] = (am[r] == k) ? mu[row] : 0.0;
        o.noalias() += (patches->patches[k] - patches->patches[j]).transpose() * tmp;
      }
  }
  void block_btb(int b, MatrixXd& out) const override {
    const int i = b / 2;
    out = M.transpose() * M;
    const auto& am = argmax[i];
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        MatrixXd D = patches->patches[k] - patches->patches[j];
        for (int r = 0; r < n; ++r)
          if (am[r] == k) out.noalias() += D.row(r).transpose() * D.row(r);
      }
  }
  MatrixXd dense_A(int b) const override { return double(block_sign[b]) * A[b / 2]; }

  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    double nu = gen.norm();
    if (nu == 0) return 0;
    VectorXd mp = VectorXd::Zero(n);
    for (int k = 0; k < K; ++k) {
      VectorXd r = (patches->patches[k] * gen).cwiseMax(0.0);
      mp = mp.cwiseMax(r);
    }
    return std::abs(v.dot(mp)) / nu;
  }
  VectorXd linearized_max_probe(int i, const VectorXd& v) const override {
    VectorXd g = A[i].transpose() * v;
    double ng = g.norm();
    return ng > 0 ? VectorXd(g / ng) : g;
  }
};

// ---------------------------------------------------------------------------
// Circular spectral program (Theorem 3); complex variables as re/im pairs.

class CircularProgram final : public Program {
 public:
  MatrixXd G;                                // n x 2d real operator of c -> Re(Xt c)
  std::vector<std::vector<int8_t>> row_sign; // per arrangement: n, +1 in S_i
  int d = 0;

  void block_predict(int b, const double* th, VectorXd& acc) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    VectorXd g = G * t;
    const auto& rs = row_sign[b / 2];
    double sb = block_sign[b];
    for (int i = 0; i < n; ++i)
      if (rs[i] > 0) acc[i] += sb * g[i];
  }
  void block_predict_adj(int b, const VectorXd& r, double* out) const override {
    VectorXd rm = VectorXd::Zero(n);
    const auto& rs = row_sign[b / 2];
    for (int i = 0; i < n; ++i)
      if (rs[i] > 0) rm[i] = r[i];
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = double(block_sign[b]) * (G.transpose() * rm);
  }
  void block_cone(int b, const double* th, double* s) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    Eigen::Map<VectorXd> sv(s, n);
    sv.noalias() = G * t;
    const auto& rs = row_sign[b / 2];
    for (int i = 0; i < n; ++i) sv[i] *= rs[i];
  }
  void block_cone_adj(int b, const double* mu, double* out) const override {
    VectorXd m(n);
    const auto& rs = row_sign[b / 2];
    for (int i = 0; i < n; ++i) m[i] = mu[i] * rs[i];
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = G.transpose() * m;
  }
  void block_btb(int, MatrixXd& out) const override { out = G.transpose() * G; }
  bool btb_uniform() const override { return true; }
  MatrixXd dense_A(int b) const override {
    MatrixXd Ab = MatrixXd::Zero(n, block_dim);
    const auto& rs = row_sign[b / 2];
    for (int r = 0; r < n; ++r)
      if (rs[r] > 0) Ab.row(r) = double(block_sign[b]) * G.row(r);
    return Ab;
  }
  MatrixXd jdinvjt(const std::vector<Eigen::LLT<MatrixXd>>& chol) const override {
    // A_b = sign * R_i G with R_i a 0/1 row mask, so
    // J D^{-1} J^T = 2 * sum_i R_i (G D^{-1} G^T) R_i.
    MatrixXd H = G * chol[0].solve(G.transpose());
    MatrixXd out = MatrixXd::Zero(n, n);
    for (const auto& rs : row_sign)
      for (int r = 0; r < n; ++r)
        if (rs[r] > 0)
          for (int c = 0; c < n; ++c)
            if (rs[c] > 0) out(r, c) += 2.0 * H(r, c);
    return out;
  }

  // gen: either a real w (length d, c = F^H w) or re/im pairs (length 2d)
  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    VectorXcd c(d);
    if (gen.size() == d) {
      c = spectral->F.adjoint() * gen.cast<std::complex<double>>();
    } else {
      for (int j = 0; j < d; ++j) c[j] = std::complex<double>(gen[2 * j], gen[2 * j + 1]);
    }
    double l1 = c.cwiseAbs().sum();
    if (l1 == 0) return 0;
    VectorXd pre = (spectral->Xt * c).real();
    double scale = std::pow(double(d), 0.5 * (L - 2));
    return scale * std::abs(v.dot(pre.cwiseMax(0.0))) / l1;
  }
  VectorXd linearized_max_probe(int i, const VectorXd& v) const override {
    VectorXd vm = VectorXd::Zero(n);
    const auto& rs = row_sign[i];
    for (int r = 0; r < n; ++r)
      if (rs[r] > 0) vm[r] = v[r];
    VectorXcd z = spectral->Xt.adjoint() * vm;  // d
    int best = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(z[j]) > std::abs(z[best])) best = j;
    VectorXd probe = VectorXd::Zero(2 * d);
    std::complex<double> ph = std::abs(z[best]) > 0 ? z[best] / std::abs(z[best])
                                                    : std::complex<double>(1, 0);
    probe[2 * best] = ph.real();
    probe[2 * best + 1] = ph.imag();
    return probe;
  }
};

// ---------------------------------------------------------------------------
// Three-layer two-ReLU program (Theorem 4)

class ThreeLayerProgram final : public Program {
 public:
  int K = 0, h = 0;
  std::vector<MatrixXd> W;                    // per triple: n x hK, sum_k I_k D(S1^k) X_k
  std::vector<std::vector<int8_t>> sign1;     // per triple: nK relu signs
  std::vector<std::vector<int8_t>> sign2;     // per triple: n second-layer signs

  // cone rows per block: K groups of n first-layer rows, then n second-layer rows
  void block_predict(int b, const double* th, VectorXd& acc) const override {
    const int i = b / 2;
    Eigen::Map<const VectorXd> t(th, block_dim);
    VectorXd g = W[i] * t;
    const auto& s2 = sign2[i];
    double sb = block_sign[b];
    for (int r = 0; r < n; ++r)
      if (s2[r] > 0) acc[r] += sb * g[r];
  }
  void block_predict_adj(int b, const VectorXd& r, double* out) const override {
    const int i = b / 2;
    VectorXd rm = VectorXd::Zero(n);
    const auto& s2 = sign2[i];
    for (int q = 0; q < n; ++q)
      if (s2[q] > 0) rm[q] = r[q];
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = double(block_sign[b]) * (W[i].transpose() * rm);
  }
  void block_cone(int b, const double* th, double* s) const override {
    const int i = b / 2;
    Eigen::Map<const VectorXd> t(th, block_dim);
    const auto& s1 = sign1[i];
    int row = 0;
    for (int k = 0; k < K; ++k) {
      VectorXd pk = patches->patches[k] * t.segment(k * h, h);
      for (int r = 0; r < n; ++r, ++row) s[row] = s1[k * n + r] * pk[r];
    }
    VectorXd g = W[i] * t;
    const auto& s2 = sign2[i];
    for (int r = 0; r < n; ++r, ++row) s[row] = s2[r] * g[r];
  }
  void block_cone_adj(int b, const double* mu, double* out) const override {
    const int i = b / 2;
    Eigen::Map<VectorXd> o(out, block_dim);
    o.setZero();
    const auto& s1 = sign1[i];
    int row = 0;
    VectorXd tmp(n);
    for (int k = 0; k < K; ++k) {
      for (int r = 0; r < n; ++r, ++row) tmp[r] = mu[row] * s1[k * n + r];
      o.segment(k * h, h).noalias() += patches->patches[k].transpose() * tmp;
    }
    const auto& s2 = sign2[i];
    for (int r = 0; r < n; ++r, ++row) tmp[r] = mu[row] * s2[r];
    o.noalias() += W[i].transpose() * tmp;
  }
  void block_btb(int b, MatrixXd& out) const override {
    const int i = b / 2;
    out = MatrixXd::Zero(block_dim, block_dim);
    for (int k = 0; k < K; ++k)
      out.block(k * h, k * h, h, h) = patches->patches[k].transpose() * patches->patches[k];
    out.noalias() += W[i].transpose() * W[i];
  }
  MatrixXd dense_A(int b) const override {
    const int i = b / 2;
    MatrixXd Ab = MatrixXd::Zero(n, block_dim);
    const auto& s2 = sign2[i];
    for (int r = 0; r < n; ++r)
      if (s2[r] > 0) Ab.row(r) = double(block_sign[b]) * W[i].row(r);
    return Ab;
  }

  // gen = [u; w1]
  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    VectorXd u = gen.head(h);
    VectorXd w1 = gen.tail(K);
    double nu = u.norm(), nw = w1.norm();
    if (nu == 0 || nw == 0) return 0;
    VectorXd pre2 = VectorXd::Zero(n);
    for (int k = 0; k < K; ++k) pre2 += (patches->patches[k] * u).cwiseMax(0.0) * w1[k];
    return std::abs(v.dot(pre2.cwiseMax(0.0))) / (nu * nw);
  }
  VectorXd linearized_max_probe(int i, const VectorXd& v) const override {
    VectorXd vm = VectorXd::Zero(n);
    const auto& s2 = sign2[i];
    for (int r = 0; r < n; ++r)
      if (s2[r] > 0) vm[r] = v[r];
    VectorXd g = W[i].transpose() * vm;  // hK
    Eigen::Map<const MatrixXd> C(g.data(), h, K);
    Eigen::JacobiSVD<MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
    VectorXd probe(h + K);
    probe.head(h) = svd.matrixU().col(0);
    probe.tail(K) = svd.matrixV().col(0);
    return probe;
  }
};

// ---------------------------------------------------------------------------
// Linear CNN programs (Theorems 5 and 6)

class LinearNuclearProgram final : public Program {
 public:
  MatrixXd A;  // n x hK = [X_1 ... X_K]

  void block_predict(int, const double* th, VectorXd& acc) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    acc.noalias() += A * t;
  }
  void block_predict_adj(int, const VectorXd& r, double* out) const override {
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = A.transpose() * r;
  }
  void block_cone(int, const double*, double*) const override {}
  void block_cone_adj(int, const double*, double* out) const override {
    Eigen::Map<VectorXd>(out, block_dim).setZero();
  }
  void block_btb(int, MatrixXd& out) const override {
    out = MatrixXd::Zero(block_dim, block_dim);
  }
  MatrixXd dense_A(int) const override { return A; }

  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    double nu = gen.norm();
    if (nu == 0) return 0;
    double acc = 0;
    for (const MatrixXd& Xk : patches->patches) {
      double t = v.dot(Xk * gen);
      acc += t * t;
    }
    return std::sqrt(acc) / nu;
  }
  double dual_constraint_exact(const VectorXd& v) const override {
    MatrixXd Mv(nuc_rows, nuc_cols);
    for (int k = 0; k < nuc_cols; ++k) Mv.col(k) = patches->patches[k].transpose() * v;
    Eigen::JacobiSVD<MatrixXd> svd(Mv);
    return svd.singularValues()[0];
  }
};

class LinearCircularProgram final : public Program {
 public:
  MatrixXd G;  // n x 2d
  int d = 0;

  void block_predict(int, const double* th, VectorXd& acc) const override {
    Eigen::Map<const VectorXd> t(th, block_dim);
    acc.noalias() += G * t;
  }
  void block_predict_adj(int, const VectorXd& r, double* out) const override {
    Eigen::Map<VectorXd> o(out, block_dim);
    o.noalias() = G.transpose() * r;
  }
  void block_cone(int, const double*, double*) const override {}
  void block_cone_adj(int, const double*, double* out) const override {
    Eigen::Map<VectorXd>(out, block_dim).setZero();
  }
  void block_btb(int, MatrixXd& out) const override {
    out = MatrixXd::Zero(block_dim, block_dim);
  }
  MatrixXd dense_A(int) const override { return G; }

  double probe_value(const VectorXd& gen, const VectorXd& v) const override {
    VectorXcd c(d);
    if (gen.size() == d)
      c = spectral->F.adjoint() * gen.cast<std::complex<double>>();
    else
      for (int j = 0; j < d; ++j) c[j] = std::complex<double>(gen[2 * j], gen[2 * j + 1]);
    double l1 = c.cwiseAbs().sum();
    if (l1 == 0) return 0;
    return std::sqrt(double(d)) * std::abs(v.dot((spectral->Xt * c).real())) / l1;
  }
  double dual_constraint_exact(const VectorXd& v) const override {
    VectorXcd z = spectral->Xt.adjoint() * v;
    return std::sqrt(double(d)) * z.cwiseAbs().maxCoeff();
  }
};

MatrixXd real_spectral_operator(const SpectralFeatures& sf) {
  const int n = sf.n, d = sf.d;
  MatrixXd G(n, 2 * d);
  for (int j = 0; j < d; ++j) {
    G.col(2 * j) = sf.Xt.col(j).real();
    G.col(2 * j + 1) = -sf.Xt.col(j).imag();
  }
  return G;
}

std::vector<GroupDef> pair_groups(int d) {
  std::vector<GroupDef> g(d);
  for (int j = 0; j < d; ++j) g[j] = {2 * j, 2, 1.0};
  return g;
}

}  // namespace

ProgramPtr build_avgpool(std::shared_ptr<const PatchSet> ps,
                         std::shared_ptr<const ArrangementSet> arr, const VectorXd& y,
                         double beta) {
  if (arr->kind != ArrKind::Conv) throw std::invalid_argument("build_avgpool: arrangement/patch mismatch");
  if (arr->n != ps->n || arr->K != ps->K || arr->mask_len != ps->n * ps->K)
    throw std::invalid_argument("build_avgpool: arrangement/patch mismatch");
  auto p = std::make_shared<AvgPoolProgram>();
  p->arch = Arch::AvgPool;
  p->n = ps->n;
  p->beta = beta;
  p->penalty_base = beta;
  p->y = y;
  p->penalty = PenaltyKind::GroupL2;
  p->arr = arr;
  p->patches = ps;
  const size_t P = arr->count();
  p->n_blocks = static_cast<int>(2 * P);
  p->block_dim = ps->h;
  p->cone_rows_per_block = ps->n * ps->K;
  p->block_groups = {{0, ps->h, 1.0}};
  p->block_sign.resize(p->n_blocks);
  for (size_t i = 0; i < P; ++i) {
    p->block_sign[2 * i] = -1;
    p->block_sign[2 * i + 1] = 1;
  }
  StackedPatchMatrix sm = stack_patches(*ps);
  p->M = sm.M;
  p->A.resize(P);
  p->signs.resize(P);
  for (size_t i = 0; i < P; ++i) {
    p->signs[i] = row_signs_from_bits(*arr, i, ps->n * ps->K);
    MatrixXd Ai = MatrixXd::Zero(ps->n, ps->h);
    for (int k = 0; k < ps->K; ++k)
      for (int r = 0; r < ps->n; ++r)
        if (arr->bit(i, k * ps->n + r)) Ai.row(r) += ps->patches[k].row(r);
    p->A[i] = Ai;
  }
  return p;
}

ProgramPtr build_maxpool(std::shared_ptr<const PatchSet> ps,
                         std::shared_ptr<const ArrangementSet> arr, const VectorXd& y,
                         double beta) {
  if (arr->kind != ArrKind::MaxPool || arr->n != ps->n || arr->K != ps->K)
    throw std::invalid_argument("build_maxpool: arrangement/patch mismatch");
  auto p = std::make_shared<MaxPoolProgram>();
  p->arch = Arch::MaxPool;
  p->n = ps->n;
  p->K = ps->K;
  p->beta = beta;
  p->penalty_base = beta;
  p->y = y;
  p->penalty = PenaltyKind::GroupL2;
  p->arr = arr;
  p->patches = ps;
  const size_t P = arr->count();
  p->n_blocks = static_cast<int>(2 * P);
  p->block_dim = ps->h;
  p->cone_rows_per_block = ps->n * ps->K * ps->K;
  p->block_groups = {{0, ps->h, 1.0}};
  p->block_sign.resize(p->n_blocks);
  for (size_t i = 0; i < P; ++i) {
    p->block_sign[2 * i] = -1;
    p->block_sign[2 * i + 1] = 1;
  }
  StackedPatchMatrix sm = stack_patches(*ps);
  p->M = sm.M;
  p->A.resize(P);
  p->signs.resize(P);
  p->argmax.resize(P);
  for (size_t i = 0; i < P; ++i) {
    p->signs[i] = row_signs_from_bits(*arr, i, ps->n * ps->K);
    const uint16_t* am = arr->argmax_row(i);
    p->argmax[i].assign(am, am + ps->n);
    MatrixXd Ai = MatrixXd::Zero(ps->n, ps->h);
    for (int r = 0; r < ps->n; ++r) {
      int k = am[r];
      if (arr->bit(i, k * ps->n + r)) Ai.row(r) = ps->patches[k].row(r);
    }
    p->A[i] = Ai;
  }
  return p;
}

ProgramPtr build_circular(std::shared_ptr<const SpectralFeatures> sf,
                          std::shared_ptr<const ArrangementSet> arr, const VectorXd& y, double beta,
                          int L) {
  if (L < 3) throw std::invalid_argument("build_circular: L must be >= 3");
  if (arr->kind != ArrKind::CConv || arr->n != sf->n)
    throw std::invalid_argument("build_circular: arrangement mismatch");
  auto p = std::make_shared<CircularProgram>();
  p->arch = Arch::Circular;
  p->n = sf->n;
  p->d = sf->d;
  p->L = L;
  p->beta = beta;
  p->penalty_base = beta / std::pow(double(sf->d), 0.5 * (L - 2));
  p->y = y;
  p->penalty = PenaltyKind::ComplexL1;
  p->arr = arr;
  p->spectral = sf;
  const size_t P = arr->count();
  p->n_blocks = static_cast<int>(2 * P);
  p->block_dim = 2 * sf->d;
  p->cone_rows_per_block = sf->n;
  p->block_groups = pair_groups(sf->d);
  p->block_sign.resize(p->n_blocks);
  for (size_t i = 0; i < P; ++i) {
    p->block_sign[2 * i] = -1;
    p->block_sign[2 * i + 1] = 1;
  }
  p->G = real_spectral_operator(*sf);
  p->row_sign.resize(P);
  for (size_t i = 0; i < P; ++i) p->row_sign[i] = row_signs_from_bits(*arr, i, sf->n);
  return p;
}

ProgramPtr build_threelayer(std::shared_ptr<const PatchSet> ps,
                            std::shared_ptr<const ArrangementSet> arr2, const VectorXd& y,
                            double beta) {
  if (arr2->kind != ArrKind::TwoLevel || arr2->n != ps->n || arr2->K != ps->K)
    throw std::invalid_argument("build_threelayer: arrangement/patch mismatch");
  auto p = std::make_shared<ThreeLayerProgram>();
  p->arch = Arch::ThreeLayer;
  p->n = ps->n;
  p->K = ps->K;
  p->h = ps->h;
  p->beta = beta;
  p->penalty_base = beta;
  p->y = y;
  p->penalty = PenaltyKind::Frobenius;
  p->arr = arr2;
  p->patches = ps;
  const size_t T = arr2->count();
  p->n_blocks = static_cast<int>(2 * T);
  p->block_dim = ps->h * ps->K;
  p->cone_rows_per_block = ps->n * (ps->K + 1);
  p->block_groups = {{0, ps->h * ps->K, 1.0}};
  p->block_sign.resize(p->n_blocks);
  for (size_t t = 0; t < T; ++t) {
    p->block_sign[2 * t] = -1;
    p->block_sign[2 * t + 1] = 1;
  }
  const int n = ps->n, K = ps->K, h = ps->h;
  p->W.resize(T);
  p->sign1.resize(T);
  p->sign2.resize(T);
  for (size_t t = 0; t < T; ++t) {
    p->sign1[t] = row_signs_from_bits(*arr2, t, n * K);
    p->sign2[t] = row_signs_from_bits(*arr2, t, n, n * K + K);
    MatrixXd Wt = MatrixXd::Zero(n, h * K);
    for (int k = 0; k < K; ++k) {
      double Ik = arr2->bit(t, n * K + k) ? 1.0 : -1.0;
      for (int r = 0; r < n; ++r)
        if (arr2->bit(t, k * n + r)) Wt.block(r, k * h, 1, h) = Ik * ps->patches[k].row(r);
    }
    p->W[t] = Wt;
  }
  return p;
}

ProgramPtr build_linear_nuclear(std::shared_ptr<const PatchSet> ps, const VectorXd& y,
                                double beta) {
  if (ps->K < 1) throw std::invalid_argument("build_linear_nuclear: need K >= 1");
  auto p = std::make_shared<LinearNuclearProgram>();
  p->arch = Arch::LinearNuclear;
  p->n = ps->n;
  p->beta = beta;
  p->penalty_base = beta;
  p->y = y;
  p->penalty = PenaltyKind::Nuclear;
  p->patches = ps;
  p->n_blocks = 1;
  p->block_dim = ps->h * ps->K;
  p->cone_rows_per_block = 0;
  p->block_sign = {1};
  p->nuc_rows = ps->h;
  p->nuc_cols = ps->K;
  p->A.resize(ps->n, ps->h * ps->K);
  for (int k = 0; k < ps->K; ++k) p->A.middleCols(k * ps->h, ps->h) = ps->patches[k];
  return p;
}

ProgramPtr build_linear_circular(std::shared_ptr<const SpectralFeatures> sf, const VectorXd& y,
                                 double beta) {
  auto p = std::make_shared<LinearCircularProgram>();
  p->arch = Arch::LinearCircular;
  p->n = sf->n;
  p->d = sf->d;
  p->beta = beta;
  p->penalty_base = beta / std::sqrt(double(sf->d));
  p->y = y;
  p->penalty = PenaltyKind::ComplexL1;
  p->spectral = sf;
  p->n_blocks = 1;
  p->block_dim = 2 * sf->d;
  p->cone_rows_per_block = 0;
  p->block_sign = {1};
  p->block_groups = pair_groups(sf->d);
  p->G = real_spectral_operator(*sf);
  return p;
}

std::string program_manifest(const Program& p, const std::string& arrangement_file) {
  nlohmann::json j;
  j["format"] = "ccnn.program.v1";
  j["arch"] = to_string(p.arch);
  j["n"] = p.n;
  j["beta"] = p.beta;
  j["penalty_base"] = p.penalty_base;
  j["L"] = p.L;
  j["n_blocks"] = p.n_blocks;
  j["block_dim"] = p.block_dim;
  j["cone_rows_per_block"] = p.cone_rows_per_block;
  j["arrangement_file"] = arrangement_file;
  j["hash"] = hash_hex(p.hash());
  std::vector<double> y(p.y.data(), p.y.data() + p.y.size());
  j["y_b64"] = encode_doubles(y);
  return j.dump(2);
}

}  // namespace ccnn
