#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stldro {

/// Axis-aligned box {x : lower <= x <= upper}.
struct BoxDomain {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static BoxDomain uniform(int dim, double lo, double hi);

  int dim() const { return static_cast<int>(lower.size()); }
  /// Throws std::invalid_argument if mis-sized, non-finite or empty.
  void validate() const;
  bool contains(const Eigen::VectorXd& x, double slack = 0.0) const;
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
};

struct SolverConfig {
  int max_outer_iterations = 40;     // augmented-Lagrangian multiplier updates
  int max_inner_iterations = 400;    // projected-gradient iterations per subproblem
  int sup_iterations = 150;          // projected-gradient iterations per inner-sup start
  double gradient_tolerance = 1e-6;  // projected-gradient infinity norm
  double constraint_tolerance = 1e-6;
  double fd_step = 1e-6;             // relative finite-difference step
  int multistart = 16;               // K, starts per inner sup
  int outer_starts = 4;              // starts of the outer minimization
  double penalty_initial = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e10;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument unless every field is positive.
  void validate() const;
};

/// f(x), with the gradient written to `grad` when it is non-null.
using SmoothFunction = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct SolveResult {
  enum class Status { Converged, NotConverged, Infeasible };

  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd constraints;  // c_j(x); feasible means all >= -tolerance
  Eigen::VectorXd multipliers;
  double max_violation = 0.0;
  double stationarity = 0.0;    // projected-gradient norm of the final Lagrangian
  Status status = Status::NotConverged;
  int outer_iterations = 0;
  int inner_iterations = 0;
  int start_index = 0;

  bool feasible() const { return status != Status::Infeasible; }
};

std::string to_string(SolveResult::Status status);

struct BoxMinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double stationarity = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Spectral projected gradient with a non-monotone line search.
BoxMinimizeResult minimize_on_box(const SmoothFunction& f, Eigen::VectorXd x0, const BoxDomain& box,
                                  int max_iterations, double tolerance);

/// Projected BFGS: epsilon-active bounds take a scaled gradient step, free
/// variables a quasi-Newton step, with an Armijo search along the projection arc.
/// Monotone; suited to small, ill-conditioned problems.
BoxMinimizeResult quasi_newton_on_box(const SmoothFunction& f, Eigen::VectorXd x0, const BoxDomain& box,
                                      int max_iterations, double tolerance);

struct InnerSupResult {
  double value = 0.0;         // sup of g(w) - lambda ||w - anchor||
  Eigen::VectorXd argmax;
  Eigen::VectorXd g_gradient; // grad g at argmax (for Danskin-type derivatives)
  double distance = 0.0;      // ||argmax - anchor||
  bool converged = false;
  int starts = 0;
};

/// Multistart ascent for sup_{w in box} g(w) - lambda ||w - anchor||.
///
/// Starts, in order: the anchor, `warm_starts`, random box vertices, uniform random
/// points, K in total (warm starts and the anchor always run). A later start replaces
/// the incumbent only by an improvement above 1e-12 (1 + |best|), so ties go to the
/// earliest start and the anchor is returned whenever nothing beats it.
InnerSupResult inner_sup(const SmoothFunction& g, double lambda, const Eigen::VectorXd& anchor,
                         const BoxDomain& box, const SolverConfig& cfg,
                         const std::vector<Eigen::VectorXd>& warm_starts = {},
                         std::uint64_t stream = 0, int starts = -1);

/// min f(x) s.t. c_j(x) >= 0, x in box, by an augmented Lagrangian with
/// multistart. Start 0 is `starts[0]` if given (then the remaining given
/// starts), followed by uniform random points up to cfg.outer_starts. Returns the best
/// feasible start by objective, or the least-violating one when none is feasible.
SolveResult outer_minimize(const SmoothFunction& objective,
                           const std::vector<SmoothFunction>& constraints, const BoxDomain& box,
                           const SolverConfig& cfg,
                           const std::vector<Eigen::VectorXd>& starts = {});

/// Central differences with h_i = step * max(1, |x_i|).
Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double step = 1e-6);

}  // namespace stldro
