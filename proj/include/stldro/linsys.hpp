#pragma once

#include "stldro/stl.hpp"

#include <Eigen/Dense>

#include <vector>

namespace stldro {

/// Per-step vectors u_0..u_{N-1} or w_0..w_{N-1}.
using Sequence = std::vector<Eigen::VectorXd>;

/// x_{k+1} = A x_k + B u_k + w_k.
class LinearSystem {
 public:
  /// Throws DimensionError on inconsistent shapes, std::invalid_argument on
  /// non-finite entries.
  LinearSystem(Eigen::MatrixXd a, Eigen::MatrixXd b);

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }
  int state_dim() const { return static_cast<int>(a_.rows()); }
  int input_dim() const { return static_cast<int>(b_.cols()); }

 private:
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
};

/// A^0 .. A^{count-1}, computed by repeated multiplication.
class MatrixPowers {
 public:
  MatrixPowers(const Eigen::MatrixXd& a, int count);
  const Eigen::MatrixXd& operator[](int i) const { return powers_.at(i); }
  int size() const { return static_cast<int>(powers_.size()); }

 private:
  std::vector<Eigen::MatrixXd> powers_;
};

Trace rollout(const LinearSystem& sys, const Eigen::VectorXd& x0, const Sequence& u,
              const Sequence& w);

/// Stacked variant: u has N*m entries and w has N*n entries. Writes N+1 states
/// into `out`, reusing its storage.
void rollout(const LinearSystem& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& u,
             const Eigen::VectorXd& w, Trace& out);

/// x_k = A^k x0 + sum_{i<k} A^{k-i-1} (B u_i + w_i), evaluated term by term.
Eigen::VectorXd closed_form_state(const LinearSystem& sys, const MatrixPowers& powers,
                                  const Eigen::VectorXd& x0, const Sequence& u, const Sequence& w,
                                  int k);

/// Stacked map X_{1:N} = state * x0 + input * U + disturbance * W.
struct SensitivityMaps {
  Eigen::MatrixXd state;
  Eigen::MatrixXd input;
  Eigen::MatrixXd disturbance;
};

SensitivityMaps sensitivity_maps(const LinearSystem& sys, int horizon);

/// Reverse-mode chain rule through the dynamics. Given g_t = df/dx_t for
/// t = 0..N, writes df/dU (N*m) and df/dW (N*n) into whichever outputs are non-null.
void pullback(const LinearSystem& sys, const std::vector<Eigen::VectorXd>& state_grad,
              Eigen::VectorXd* input_grad, Eigen::VectorXd* disturbance_grad);

Eigen::VectorXd stack(const Sequence& seq);
Sequence unstack(const Eigen::VectorXd& stacked, int dim);

}  // namespace stldro
