#include "stldro/linsys.hpp"

#include "stldro/errors.hpp"

#include <string>

namespace stldro {

LinearSystem::LinearSystem(Eigen::MatrixXd a, Eigen::MatrixXd b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || a_.rows() == 0) {
    throw DimensionError("system matrix A must be square and non-empty");
  }
  if (b_.rows() != a_.rows()) {
    throw DimensionError("input matrix B must have " + std::to_string(a_.rows()) + " rows");
  }
  if (!a_.allFinite() || !b_.allFinite()) {
    throw std::invalid_argument("system matrices must have finite entries");
  }
}

MatrixPowers::MatrixPowers(const Eigen::MatrixXd& a, int count) {
  powers_.reserve(count);
  if (count > 0) powers_.push_back(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  for (int i = 1; i < count; ++i) powers_.push_back(a * powers_.back());
}

namespace {

void check_sequences(const LinearSystem& sys, const Eigen::VectorXd& x0, const Sequence& u,
                     const Sequence& w) {
  if (x0.size() != sys.state_dim()) throw DimensionError("x0 has wrong dimension");
  if (u.size() != w.size()) {
    throw DimensionError("input sequence has " + std::to_string(u.size()) +
                         " steps but disturbance sequence has " + std::to_string(w.size()));
  }
  for (const auto& uk : u) {
    if (uk.size() != sys.input_dim()) throw DimensionError("input step has wrong dimension");
  }
  for (const auto& wk : w) {
    if (wk.size() != sys.state_dim()) throw DimensionError("disturbance step has wrong dimension");
  }
}

}  // namespace

Trace rollout(const LinearSystem& sys, const Eigen::VectorXd& x0, const Sequence& u,
              const Sequence& w) {
  check_sequences(sys, x0, u, w);
  Trace xi;
  xi.reserve(u.size() + 1);
  xi.push_back(x0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    xi.push_back(sys.a() * xi.back() + sys.b() * u[k] + w[k]);
  }
  return xi;
}

void rollout(const LinearSystem& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& u,
             const Eigen::VectorXd& w, Trace& out) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  if (x0.size() != n) throw DimensionError("x0 has wrong dimension");
  const int steps = static_cast<int>(w.size() / n);
  if (w.size() != steps * n || u.size() != steps * m) {
    throw DimensionError("stacked input/disturbance lengths are inconsistent");
  }
  out.resize(steps + 1);
  out[0] = x0;
  for (int k = 0; k < steps; ++k) {
    out[k + 1].noalias() = sys.a() * out[k];
    if (m > 0) out[k + 1].noalias() += sys.b() * u.segment(k * m, m);
    out[k + 1] += w.segment(k * n, n);
  }
}

Eigen::VectorXd closed_form_state(const LinearSystem& sys, const MatrixPowers& powers,
                                  const Eigen::VectorXd& x0, const Sequence& u, const Sequence& w,
                                  int k) {
  Eigen::VectorXd x = powers[k] * x0;
  for (int i = 0; i < k; ++i) x += powers[k - i - 1] * (sys.b() * u[i] + w[i]);
  return x;
}

SensitivityMaps sensitivity_maps(const LinearSystem& sys, int horizon) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const MatrixPowers powers(sys.a(), horizon + 1);
  SensitivityMaps maps;
  maps.state.resize(horizon * n, n);
  maps.input = Eigen::MatrixXd::Zero(horizon * n, horizon * m);
  maps.disturbance = Eigen::MatrixXd::Zero(horizon * n, horizon * n);
  for (int k = 1; k <= horizon; ++k) {
    maps.state.block((k - 1) * n, 0, n, n) = powers[k];
    for (int i = 0; i < k; ++i) {
      maps.input.block((k - 1) * n, i * m, n, m) = powers[k - i - 1] * sys.b();
      maps.disturbance.block((k - 1) * n, i * n, n, n) = powers[k - i - 1];
    }
  }
  return maps;
}

void pullback(const LinearSystem& sys, const std::vector<Eigen::VectorXd>& state_grad,
              Eigen::VectorXd* input_grad, Eigen::VectorXd* disturbance_grad) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const int steps = static_cast<int>(state_grad.size()) - 1;
  if (input_grad) input_grad->resize(steps * m);
  if (disturbance_grad) disturbance_grad->resize(steps * n);
  // costate p_{k} = g_k + A^T p_{k+1}; df/dw_k = p_{k+1}, df/du_k = B^T p_{k+1}
  Eigen::VectorXd p = state_grad[steps];
  for (int k = steps - 1; k >= 0; --k) {
    if (disturbance_grad) disturbance_grad->segment(k * n, n) = p;
    if (input_grad) input_grad->segment(k * m, m).noalias() = sys.b().transpose() * p;
    Eigen::VectorXd next = state_grad[k];
    next.noalias() += sys.a().transpose() * p;
    p.swap(next);
  }
}

Eigen::VectorXd stack(const Sequence& seq) {
  Eigen::Index total = 0;
  for (const auto& v : seq) total += v.size();
  Eigen::VectorXd out(total);
  Eigen::Index pos = 0;
  for (const auto& v : seq) {
    out.segment(pos, v.size()) = v;
    pos += v.size();
  }
  return out;
}

Sequence unstack(const Eigen::VectorXd& stacked, int dim) {
  if (dim <= 0 || stacked.size() % dim != 0) throw DimensionError("cannot split stacked vector");
  Sequence out;
  for (Eigen::Index i = 0; i < stacked.size(); i += dim) out.push_back(stacked.segment(i, dim));
  return out;
}

}  // namespace stldro
