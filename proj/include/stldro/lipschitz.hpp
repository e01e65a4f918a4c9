#pragma once

#include "stldro/linsys.hpp"
#include "stldro/stl.hpp"

#include <Eigen/Dense>

#include <vector>

namespace stldro {

/// Axis-aligned box of states on which predicate Lipschitz constants are taken.
struct Region {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Throws std::invalid_argument if empty, non-finite or mis-sized.
  void validate() const;
  bool contains(const Eigen::VectorXd& x) const;
  /// Every side extended by `fraction` of its width (so 0.2 grows each width by 40%).
  Region inflated(double fraction, double min_half_width = 1e-6) const;
};

struct LipschitzReport {
  double l1 = 0.0;  // largest predicate constant
  double l2 = 0.0;  // trajectory-to-disturbance constant
  double l_phi = 0.0;
  std::vector<double> predicate_constants;  // predicate leaves in pre-order
};

/// Affine: ||c||_2. Quadratic kinds: 2 sup_{x in R} ||Q (x - p)||_2, by vertex
/// enumeration up to 16 dimensions and 2 ||Q||_2 max_{x in R} ||x - p|| beyond.
double predicate_lipschitz(const Predicate& p, const Region& region);

/// Largest singular value. Dimensions <= 2 use the closed form unless
/// `force_iterative`; otherwise power iteration on M^T M, stopped when the
/// residual ||M^T M v - mu v|| falls below 1e-10 mu.
double spectral_norm(const Eigen::MatrixXd& m, bool force_iterative = false);

/// sqrt( sum_{i=0}^{N-1} ||A^i||^2 ).
double l2_bound(const Eigen::MatrixXd& a, int horizon, bool force_iterative = false);

LipschitzReport formula_lipschitz(const Formula& f, const LinearSystem& sys, int horizon,
                                  const Region& region);

}  // namespace stldro
