#pragma once

#include "stldro/linsys.hpp"
#include "stldro/lipschitz.hpp"
#include "stldro/probability.hpp"
#include "stldro/solver.hpp"
#include "stldro/stl.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stldro {

/// J(u, w) = sum_{k<N} (x_k^T Q x_k + u_k^T R u_k) + x_N^T Q_f x_N.
struct CostSpec {
  Eigen::MatrixXd q;
  Eigen::MatrixXd q_final;
  Eigen::MatrixXd r;

  static CostSpec scalar(double q, double q_final, double r, int state_dim, int input_dim);
  /// Throws std::invalid_argument unless Q, Q_f are symmetric PSD and R symmetric PD.
  void validate(int state_dim, int input_dim) const;
};

struct Scenario {
  std::string name = "scenario";
  LinearSystem sys{Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1)};
  Eigen::VectorXd x0;
  int horizon = 1;
  std::string formula_text;
  PredicateRegistry predicates;
  Formula formula = Formula::truth();  // negation normal form
  double r0 = 0.0;
  double epsilon = 0.1;
  CostSpec cost;
  DisturbanceModel model;
  Region region;
  bool region_from_hull = false;
  SmoothingConfig smoothing;
  Eigen::VectorXd input_lower;  // per step, length m
  Eigen::VectorXd input_upper;
  std::optional<double> radius;
  std::optional<RadiusRule> radius_rule;
  int drp_samples = 20;
  int ecp_samples = 200;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::optional<BoxDomain> w_box;  // stacked, length N * n
  double w_box_sigmas = 6.0;

  int state_dim() const { return sys.state_dim(); }
  int input_dim() const { return sys.input_dim(); }
  int input_length() const { return horizon * input_dim(); }
  int disturbance_length() const { return horizon * state_dim(); }
  /// Stacked input box U^N.
  BoxDomain input_box() const;
  /// Throws ScenarioError on inconsistent fields.
  void validate() const;
};

/// Box hull of `trials` simulated trajectories (uniform random inputs, model
/// disturbances), each side pushed out by `fraction` of its width.
Region trajectory_hull_region(const Scenario& scn, int trials = 200, double fraction = 0.1,
                              std::uint64_t seed = 0);

struct TighteningReport {
  LipschitzReport lipschitz;
  double h_inverse = 0.0;
  double value = 0.0;  // L_phi * h^{-1}(epsilon)
};
TighteningReport tightening(const Scenario& scn);

/// Radius from the scenario: the direct value if present, else the confidence rule
/// applied to `count` samples. Throws ScenarioError if neither is configured.
double scenario_radius(const Scenario& scn, int count);

/// Sample hull of `samples` widened by `sigmas` marginal standard deviations.
BoxDomain default_disturbance_box(const Scenario& scn, const EmpiricalDistribution& samples);

/// Reusable evaluation buffers for cost and robustness of one (u, w) pair.
/// Not thread-safe; use one per thread.
class Evaluator {
 public:
  explicit Evaluator(const Scenario& scn);

  const Trace& rollout(const Eigen::VectorXd& u, const Eigen::VectorXd& w);
  double cost(const Eigen::VectorXd& u, const Eigen::VectorXd& w,
              Eigen::VectorXd* du = nullptr, Eigen::VectorXd* dw = nullptr);
  double smooth_robustness(const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                           Eigen::VectorXd* du = nullptr, Eigen::VectorXd* dw = nullptr);
  double robustness(const Eigen::VectorXd& u, const Eigen::VectorXd& w);

 private:
  const Scenario* scn_;
  Trace trace_;
  std::vector<Eigen::VectorXd> state_grad_;
  Eigen::VectorXd du_;
};

struct ProgramSolution {
  std::string method;  // nominal | ecp | drp
  Eigen::VectorXd u;   // stacked N * m
  bool feasible = false;
  std::string status = "not_solved";  // converged | not_converged | infeasible_tightening | infeasible_solver
  double j_hat = 0.0;       // optimal value (dual objective for drp)
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  double radius = 0.0;
  double l_phi = 0.0;
  double h_inverse = 0.0;
  double tightening = 0.0;
  double constraint_value = 0.0;   // sample-average smoothed robustness (nominal/ecp)
  double residual = 0.0;           // constraint slack: >= -1e-6 when feasible
  double sample_average_cost = 0.0;
  double nominal_robustness = 0.0; // exact robustness at w = 0
  double best_reachable = 0.0;     // max sample-average smoothed robustness found when infeasible
  bool inner_converged = true;
  int samples = 0;
  std::uint64_t seed = 0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  BoxDomain w_box;
};

/// Deterministic problem: w = 0, robustness level r0, no tightening.
ProgramSolution solve_nominal(const Scenario& scn, const SolverConfig& cfg);

/// Sample-average expectation-constrained program with the concentration tightening.
ProgramSolution solve_ecp(const Scenario& scn, const EmpiricalDistribution& samples,
                          const SolverConfig& cfg);

/// Same program with an explicit tightening (0 recovers the plain sample average).
ProgramSolution solve_sample_average(const Scenario& scn, const EmpiricalDistribution& samples,
                                     double tightening, const SolverConfig& cfg,
                                     const std::vector<Eigen::VectorXd>& starts = {});

/// Finite-sample Wasserstein dual. Epigraph variables are eliminated (y = inner sup),
/// the outer problem runs over (u, lambda1, lambda2), and the result is re-certified
/// with more inner starts and a 1-D polish of each multiplier.
ProgramSolution solve_drp(const Scenario& scn, const EmpiricalDistribution& samples, double r,
                          const BoxDomain& w_box, const SolverConfig& cfg);

struct DualTerms {
  double value = 0.0;          // lambda r + mean sup
  Eigen::VectorXd sups;        // per-sample inner sups
  double mean_distance = 0.0;  // mean ||w* - w^i||
  bool converged = true;
};

/// lambda1 r + (1/M) sum_i sup_w [J(u,w) - lambda1 ||w - w^i||].
DualTerms cost_dual_terms(const Scenario& scn, const Eigen::VectorXd& u,
                          const EmpiricalDistribution& samples, double lambda1, double r,
                          const BoxDomain& w_box, const SolverConfig& cfg, int starts = -1);
/// lambda2 r + (1/M) sum_i sup_w [-rho(u,w) - lambda2 ||w - w^i||]; the worst-case
/// expected smoothed robustness over the ball is at least -value.
DualTerms robustness_dual_terms(const Scenario& scn, const Eigen::VectorXd& u,
                                const EmpiricalDistribution& samples, double lambda2, double r,
                                const BoxDomain& w_box, const SolverConfig& cfg, int starts = -1);

/// Values of a solution recomputed from its stored decision (u, multipliers,
/// tightening, disturbance box) and the training samples.
struct Certificate {
  double j_hat = 0.0;
  double constraint_value = 0.0;
  double residual = 0.0;
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  bool inner_converged = true;
};

/// Sample averages for nominal/ecp; for drp, both duals with fresh inner solves using
/// 4 K starts. solve_drp reports exactly these values.
Certificate certify(const Scenario& scn, const ProgramSolution& sol,
                    const EmpiricalDistribution& samples, const SolverConfig& cfg);

struct RateEstimate {
  double rate = 0.0;
  double stderr = 0.0;
  int trials = 0;
};

/// Streams used for evaluation draws start here so they never coincide with the
/// streams of training samples drawn with the same seed.
inline constexpr std::uint64_t kEvaluationStreamBase = 1ull << 40;

/// Fraction of fresh draws with exact robustness >= r0.
RateEstimate empirical_ccp_rate(const Scenario& scn, const Eigen::VectorXd& u, int trials,
                                std::uint64_t seed);

struct OutOfSampleReport {
  int trials = 0;
  double cost_mean = 0.0;
  double cost_stderr = 0.0;
  double bound = 0.0;      // J_hat
  bool pass = false;       // cost_mean - 2 stderr <= bound
  RateEstimate satisfaction;
  double robustness_median = 0.0;  // median exact robustness over the draws
};

OutOfSampleReport out_of_sample_report(const Scenario& scn, const ProgramSolution& sol, int trials,
                                       std::uint64_t seed);

/// J_hat >= (1/M) sum_i J(u_hat, w^i) - 1e-6.
bool drp_dual_bound_check(const Scenario& scn, const ProgramSolution& sol,
                          const EmpiricalDistribution& samples);

/// Trajectories of the solution under `count` fresh draws (stream base as above).
std::vector<Trace> sample_trajectories(const Scenario& scn, const Eigen::VectorXd& u, int count,
                                       std::uint64_t seed);

}  // namespace stldro
