#pragma once

#include "stldro/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace stldro {

/// Standard-Gaussian concentration function min{2 exp(-2 t^2 / pi^2), 1}.
/// Throws std::invalid_argument for t < 0.
double h_gaussian(double t);

/// Per-step disturbance distribution w_k (i.i.d. over k) together with the
/// light-tail constants and a concentration function h.
///
/// Every model uses h(t) = h_gaussian(t / s) for a model-specific scale s:
///   gaussian     s = sqrt(lambda_max(cov))
///   uniform box  s = max_i (hi_i - lo_i) / sqrt(2 pi)
///   empirical    s supplied by the caller
class DisturbanceModel {
 public:
  enum class Kind { Gaussian, UniformBox, Empirical };

  /// Throws std::invalid_argument unless cov is symmetric PSD and sized like mean.
  static DisturbanceModel gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static DisturbanceModel uniform_box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  /// Resamples whole stored sequences (each steps * dim long) with replacement.
  static DisturbanceModel empirical(std::vector<Eigen::VectorXd> sequences, int dim, double scale,
                                    std::string source = {});

  Kind kind() const { return kind_; }
  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const std::vector<Eigen::VectorXd>& sequences() const { return sequences_; }
  const std::string& source() const { return source_; }

  /// Light-tail constants: E exp(||w||^a) = C_tail < inf with a > 1, C_tail >= 1.
  double tail_a() const { return tail_a_; }
  double tail_c() const { return tail_c_; }
  void set_tail(double a, double c);

  double scale() const { return scale_; }
  double h(double t) const;
  /// Smallest t >= 0 with h(t) <= eps, by bisection. Throws unless 0 < eps <= 1.
  double h_inverse(double eps) const;

  /// Writes one sequence of `steps` draws (steps * dim values) into `out`.
  void draw(CounterRng& rng, int steps, double* out) const;

 private:
  Kind kind_ = Kind::Gaussian;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd factor_;  // cov = factor * factor^T
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  std::vector<Eigen::VectorXd> sequences_;
  std::string source_;
  double scale_ = 1.0;
  double tail_a_ = 2.0;
  double tail_c_ = 1.0;
};

/// Smallest t >= 0 with h(t) <= eps for any non-increasing h with h(0) <= 1
/// allowed; bisection to floating-point adjacency.
double invert_decreasing(const std::function<double(double)>& h, double eps);

/// Uniform mixture of M Dirac measures on stacked disturbance sequences.
struct EmpiricalDistribution {
  std::vector<Eigen::VectorXd> samples;

  int size() const { return static_cast<int>(samples.size()); }
  int length() const { return samples.empty() ? 0 : static_cast<int>(samples.front().size()); }
  /// Throws DimensionError if empty or ragged.
  void validate() const;
  double mean_norm_distance(const Eigen::VectorXd& w) const;
};

struct AmbiguitySet {
  EmpiricalDistribution center;
  double radius = 0.0;

  /// W1(q, center) <= radius (+1e-12 slack).
  bool contains(const EmpiricalDistribution& q) const;
};

/// M i.i.d. sequences of `steps` draws; sample i uses stream i of `seed`.
EmpiricalDistribution sample(const DisturbanceModel& model, int steps, int count,
                             std::uint64_t seed);

/// Wasserstein-1 (Euclidean ground cost) between two uniform discrete measures,
/// solved exactly as a transportation problem. Supports of at most 64 points.
double wasserstein_1(const EmpiricalDistribution& p, const EmpiricalDistribution& q);

struct RadiusRule {
  double beta = 0.05;
  double c1 = 0.0;
  double c2 = 0.0;
  double s = 0.0;  // <= 0 selects the per-step dimension
};

/// r = (log(c1/beta) / (c2 M))^(1/max(N s, 2)) when M >= log(c1/beta)/c2, else
/// the same base to the power 1/a. Throws std::invalid_argument on bad inputs.
double radius_from_confidence(double beta, int count, double tail_a, int steps, double c1,
                              double c2, double s);
double radius_from_confidence(const RadiusRule& rule, int count, const DisturbanceModel& model,
                              int steps);

struct ConcentrationCurve {
  std::vector<double> t;
  std::vector<double> within;  // empirical P{|f - mean| <= t}
  std::vector<double> bound;   // 1 - h(t)
  double mean = 0.0;
  int trials = 0;
};

/// Monte-Carlo check of P{|f(w) - E f| <= t} >= 1 - h(t) for a caller-asserted
/// 1-Lipschitz f of a whole sequence. The mean is estimated from the same draws
/// unless `known_mean` is given.
ConcentrationCurve concentration_check(const DisturbanceModel& model, int steps,
                                       const std::function<double(const Eigen::VectorXd&)>& f,
                                       int trials, std::uint64_t seed,
                                       const std::vector<double>& t_grid,
                                       const double* known_mean = nullptr);

/// CSV with header w_<k>_<j> (1-based step and coordinate), one sample per row.
void write_samples_csv(std::ostream& out, const EmpiricalDistribution& d, int dim);
EmpiricalDistribution read_samples_csv(std::istream& in, int* dim = nullptr);

}  // namespace stldro
