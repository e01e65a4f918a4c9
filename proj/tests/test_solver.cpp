#include "stldro/solver.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace stldro;

namespace {

/// f(x) = 0.5 x^T H x - b^T x.
SmoothFunction quadratic(const Eigen::MatrixXd& h, const Eigen::VectorXd& b) {
  return [h, b](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = h * x - b;
    return 0.5 * x.dot(h * x) - b.dot(x);
  };
}

/// Inner sup by a dense n x n grid, then three zoomed 41 x 41 grids around the
/// incumbent, with the anchor always a candidate.
double grid_sup(const std::function<double(double, double)>& g, double lambda, const Eigen::Vector2d& anchor,
                double lo, double hi, int n) {
  const auto value = [&](double x, double y) { return g(x, y) - lambda * std::hypot(x - anchor[0], y - anchor[1]); };
  double best = value(anchor[0], anchor[1]);
  Eigen::Vector2d arg = anchor;
  const auto scan = [&](double x0, double x1, double y0, double y1, int count) {
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < count; ++j) {
        const double x = std::clamp(x0 + (x1 - x0) * i / (count - 1), lo, hi);
        const double y = std::clamp(y0 + (y1 - y0) * j / (count - 1), lo, hi);
        const double v = value(x, y);
        if (v > best) {
          best = v;
          arg = Eigen::Vector2d(x, y);
        }
      }
    }
  };
  scan(lo, hi, lo, hi, n);
  double h = (hi - lo) / (n - 1);
  for (int level = 0; level < 3; ++level) {
    scan(arg[0] - 2 * h, arg[0] + 2 * h, arg[1] - 2 * h, arg[1] + 2 * h, 41);
    h /= 10.0;
  }
  return best;
}

}  // namespace

TEST_CASE("box utilities") {
  const BoxDomain box = BoxDomain::uniform(3, -1.0, 2.0);
  CHECK(box.contains(Eigen::Vector3d(0, 2, -1)));
  CHECK_FALSE(box.contains(Eigen::Vector3d(0, 2.1, -1)));
  CHECK(box.project(Eigen::Vector3d(5, -5, 0.5)) == Eigen::Vector3d(2, -1, 0.5));
  CHECK_THROWS_AS(BoxDomain::uniform(2, 1.0, 0.0).validate(), std::invalid_argument);
  SolverConfig cfg;
  cfg.multistart = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("box minimizers solve bound-constrained quadratics") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = testing::uniform_int(rng, 1, 6);
    const Eigen::MatrixXd m = testing::random_matrix(rng, n, n);
    const Eigen::MatrixXd h = m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd b = testing::random_vector(rng, n, -3.0, 3.0);
    const BoxDomain box = BoxDomain::uniform(n, -1.0, 1.0);
    const auto f = quadratic(h, b);
    const auto spg = minimize_on_box(f, Eigen::VectorXd::Zero(n), box, 5000, 1e-9);
    const auto qn = quasi_newton_on_box(f, Eigen::VectorXd::Zero(n), box, 5000, 1e-9);
    CHECK(spg.converged);
    CHECK(qn.converged);
    CHECK(box.contains(spg.x));
    CHECK(box.contains(qn.x));
    CHECK(spg.value == doctest::Approx(qn.value).epsilon(1e-7));
    // KKT for a box: gradient sign matches active bounds, vanishes on free coordinates.
    const Eigen::VectorXd g = h * qn.x - b;
    for (int i = 0; i < n; ++i) {
      if (qn.x[i] <= -1.0 + 1e-8) CHECK(g[i] >= -1e-6);
      else if (qn.x[i] >= 1.0 - 1e-8) CHECK(g[i] <= 1e-6);
      else CHECK(std::abs(g[i]) <= 1e-6);
    }
  }
  // Unconstrained interior optimum.
  const auto f = quadratic(Eigen::Matrix2d(Eigen::Vector2d(1.0, 100.0).asDiagonal()), Eigen::Vector2d(0.5, 10.0));
  const auto r = quasi_newton_on_box(f, Eigen::Vector2d(0.9, -0.9), BoxDomain::uniform(2, -1, 1), 500, 1e-10);
  CHECK(r.x[0] == doctest::Approx(0.5));
  CHECK(r.x[1] == doctest::Approx(0.1));
}

TEST_CASE("inner sup matches a dense grid") {
  std::mt19937_64 rng(52);
  SolverConfig cfg;
  cfg.multistart = 16;
  cfg.sup_iterations = 300;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Vector2d c = testing::random_vector(rng, 2, -1.5, 1.5);
    const double a = testing::uniform(rng, -2.0, 2.0);
    const auto gfun = [&](double x, double y) {
      return a * ((x - c[0]) * (x - c[0]) + 0.5 * (y - c[1]) * (y - c[1])) + std::sin(2 * x);
    };
    const SmoothFunction g = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
      if (grad) *grad = Eigen::Vector2d(2 * a * (w[0] - c[0]) + 2 * std::cos(2 * w[0]), a * (w[1] - c[1]));
      return gfun(w[0], w[1]);
    };
    const Eigen::Vector2d anchor = testing::random_vector(rng, 2, -1.0, 1.0);
    const double lambda = testing::uniform(rng, 0.0, 4.0);
    const BoxDomain box = BoxDomain::uniform(2, -2.0, 2.0);
    const auto r = inner_sup(g, lambda, anchor, box, cfg, {}, trial);
    const double grid = grid_sup(gfun, lambda, anchor, -2.0, 2.0, 400);
    CHECK(r.value >= grid - 1e-6 * (1 + std::abs(grid)));
    CHECK(r.value <= grid + 1e-6 * (1 + std::abs(grid)));
    CHECK(box.contains(r.argmax));
    CHECK(r.distance == doctest::Approx((r.argmax - anchor).norm()));
  }
}

TEST_CASE("inner sup returns the anchor when the penalty dominates") {
  const SmoothFunction g = [](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    if (grad) *grad = Eigen::Vector2d(1.0, -2.0);
    return w[0] - 2 * w[1];
  };
  SolverConfig cfg;
  cfg.multistart = 8;
  const Eigen::Vector2d anchor(0.3, 0.2);
  const auto r = inner_sup(g, 10.0, anchor, BoxDomain::uniform(2, -1, 1), cfg);
  CHECK(r.argmax == anchor);
  CHECK(r.value == doctest::Approx(-0.1));
  // With a weak penalty the corner (1, -1) wins: 3 - 0.5 * |(0.7, -1.2)|.
  const auto weak = inner_sup(g, 0.5, anchor, BoxDomain::uniform(2, -1, 1), cfg);
  CHECK(weak.value == doctest::Approx(3.0 - 0.5 * std::hypot(0.7, 1.2)).epsilon(1e-6));
}

TEST_CASE("inner sup is non-increasing and convex in lambda") {
  const SmoothFunction g = [](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    if (grad) *grad = 2 * w;
    return w.squaredNorm();
  };
  SolverConfig cfg;
  cfg.multistart = 16;
  const Eigen::Vector2d anchor(0.2, -0.1);
  const BoxDomain box = BoxDomain::uniform(2, -1, 1);
  std::vector<double> values;
  for (int i = 0; i <= 20; ++i) values.push_back(inner_sup(g, 0.25 * i, anchor, box, cfg).value);
  for (std::size_t i = 1; i < values.size(); ++i) {
    CHECK(values[i] <= values[i - 1] + 1e-9);
    CHECK(values[i] >= g(anchor, nullptr) - 1e-12);  // anchor is always a candidate
    if (i + 1 < values.size()) CHECK(values[i - 1] + values[i + 1] >= 2 * values[i] - 1e-6);
  }
}

TEST_CASE("augmented Lagrangian solves a constrained problem") {
  // min (x-2)^2 + (y-1)^2  s.t.  x + y <= 1 (as 1 - x - y >= 0), x >= y^2 (x - y^2 >= 0).
  // Solution (1, 0)? Check: KKT at (1,0) with only the linear constraint active gives
  // grad f = (-2, -2) = -mu (1, 1): mu = 2 >= 0 and the parabola is inactive (1 > 0).
  const SmoothFunction f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(2 * (x[0] - 2), 2 * (x[1] - 1));
    return (x[0] - 2) * (x[0] - 2) + (x[1] - 1) * (x[1] - 1);
  };
  const SmoothFunction c1 = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(-1, -1);
    return 1 - x[0] - x[1];
  };
  const SmoothFunction c2 = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(1, -2 * x[1]);
    return x[0] - x[1] * x[1];
  };
  SolverConfig cfg;
  cfg.outer_starts = 3;
  const BoxDomain box = BoxDomain::uniform(2, -3, 3);
  const auto r = outer_minimize(f, {c1, c2}, box, cfg);
  REQUIRE(r.feasible());
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(r.x[1]) <= 1e-4);
  CHECK(r.objective == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(r.multipliers[0] == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(r.max_violation <= 1e-6);
  CHECK(box.contains(r.x));

  // The box itself binds when the constraint set lies outside it.
  const SmoothFunction impossible = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::Vector2d(1, 0);
    return x[0] - 5;
  };
  const auto bad = outer_minimize(f, {impossible}, box, cfg);
  CHECK_FALSE(bad.feasible());
  CHECK(bad.x[0] == doctest::Approx(3.0));
  CHECK(box.contains(bad.x));
}

TEST_CASE("finite-difference gradient") {
  const auto f = [](const Eigen::VectorXd& x) { return std::sin(x[0]) * x[1] + 1e3 * x[1] * x[1]; };
  const Eigen::Vector2d x(0.7, 40.0);
  const Eigen::VectorXd g = finite_diff_gradient(f, x);
  CHECK(g[0] == doctest::Approx(std::cos(0.7) * 40.0).epsilon(1e-4));
  CHECK(g[1] == doctest::Approx(std::sin(0.7) + 2e3 * 40.0).epsilon(1e-8));
}
