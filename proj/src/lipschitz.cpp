#include "stldro/lipschitz.hpp"

#include "stldro/errors.hpp"
#include "stldro/rng.hpp"

#include <algorithm>
#include <cmath>

namespace stldro {

void Region::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw DimensionError("region bounds must be non-empty and of equal length");
  }
  if (!lower.allFinite() || !upper.allFinite()) {
    throw std::invalid_argument("region bounds must be finite");
  }
  if ((lower.array() > upper.array()).any()) {
    throw std::invalid_argument("region is empty: some lower bound exceeds its upper bound");
  }
}

bool Region::contains(const Eigen::VectorXd& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Region Region::inflated(double fraction, double min_half_width) const {
  const Eigen::ArrayXd width = (upper - lower).array();
  const Eigen::ArrayXd pad = (fraction * width).max(min_half_width);
  return {lower.array() - pad, upper.array() + pad};
}

double predicate_lipschitz(const Predicate& p, const Region& region) {
  region.validate();
  if (p.kind == Predicate::Kind::Affine) return p.vector.norm();
  if (region.lower.size() != p.dim()) throw DimensionError("region and predicate dimensions differ");

  const int n = p.dim();
  if (n <= 16) {
    // ||Q(x - p)|| is convex in x, so its maximum over a box sits at a vertex.
    double best = 0.0;
    Eigen::VectorXd x(n);
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      for (int i = 0; i < n; ++i) x[i] = (mask >> i) & 1u ? region.upper[i] : region.lower[i];
      best = std::max(best, (p.weight * (x - p.vector)).norm());
    }
    return 2.0 * best;
  }
  const Eigen::VectorXd far = (region.lower - p.vector)
                                  .cwiseAbs()
                                  .cwiseMax((region.upper - p.vector).cwiseAbs());
  return 2.0 * spectral_norm(p.weight) * far.norm();
}

namespace {

double closed_form_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  // 2x2: sigma_max^2 = (F + sqrt(F^2 - 4 det^2)) / 2 with F = ||M||_F^2.
  const double f = m.squaredNorm();
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double disc = std::max(0.0, f * f - 4.0 * det * det);
  return std::sqrt(0.5 * (f + std::sqrt(disc)));
}

struct PowerResult {
  double eigenvalue = 0.0;
  bool converged = false;
};

PowerResult power_iterate(const Eigen::MatrixXd& gram, Eigen::VectorXd v) {
  constexpr int kMaxIterations = 200000;
  constexpr double kTolerance = 1e-10;
  PowerResult out;
  double norm = v.norm();
  if (norm == 0.0) return out;
  v /= norm;
  for (int it = 0; it < kMaxIterations; ++it) {
    Eigen::VectorXd w = gram * v;
    const double mu = v.dot(w);
    out.eigenvalue = mu;
    if (mu <= 0.0) return out;
    if ((w - mu * v).norm() <= kTolerance * mu) {
      out.converged = true;
      return out;
    }
    norm = w.norm();
    v = w / norm;
  }
  return out;
}

}  // namespace

double spectral_norm(const Eigen::MatrixXd& m, bool force_iterative) {
  if (m.size() == 0) return 0.0;
  if (!force_iterative && m.rows() <= 2 && m.cols() <= 2) return closed_form_norm(m);

  const Eigen::MatrixXd gram = m.transpose() * m;
  if (gram.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  PowerResult best = power_iterate(gram, Eigen::VectorXd::Ones(gram.rows()));
  // Restart from random vectors when the all-ones seed stalls or is orthogonal
  // to the dominant eigenvector.
  CounterRng rng(0x5eedu, 0);
  for (int restart = 0; restart < 8 && !best.converged; ++restart) {
    Eigen::VectorXd v(gram.rows());
    for (auto& x : v) x = rng.normal();
    const PowerResult r = power_iterate(gram, v);
    if (r.converged || r.eigenvalue > best.eigenvalue) best = r;
  }
  // A second pass from a random start guards against the ones vector being
  // orthogonal to the top eigenvector (it would converge to a smaller one).
  Eigen::VectorXd v(gram.rows());
  for (auto& x : v) x = rng.normal();
  const PowerResult check = power_iterate(gram, v);
  if (check.eigenvalue > best.eigenvalue) best = check;
  return std::sqrt(std::max(0.0, best.eigenvalue));
}

double l2_bound(const Eigen::MatrixXd& a, int horizon, bool force_iterative) {
  if (horizon < 1) throw std::invalid_argument("l2_bound: horizon must be at least 1");
  const MatrixPowers powers(a, horizon);
  double sum = 0.0;
  for (int i = 0; i < horizon; ++i) {
    const double s = spectral_norm(powers[i], force_iterative);
    sum += s * s;
  }
  return std::sqrt(sum);
}

LipschitzReport formula_lipschitz(const Formula& f, const LinearSystem& sys, int horizon,
                                  const Region& region) {
  region.validate();
  if (stldro::horizon(f) > horizon) {
    throw std::invalid_argument("formula horizon " + std::to_string(stldro::horizon(f)) +
                                " exceeds trajectory horizon " + std::to_string(horizon));
  }
  LipschitzReport report;
  for (const Predicate& p : predicates_of(f)) {
    const double l = predicate_lipschitz(p, region);
    report.predicate_constants.push_back(l);
    report.l1 = std::max(report.l1, l);
  }
  report.l2 = l2_bound(sys.a(), horizon);
  report.l_phi = report.l1 * report.l2;
  return report;
}

}  // namespace stldro
