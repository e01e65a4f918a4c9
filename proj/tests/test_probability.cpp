#include "stldro/errors.hpp"
#include "stldro/probability.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace stldro;

namespace {

EmpiricalDistribution random_measure(std::mt19937_64& rng, int count, int dim) {
  EmpiricalDistribution d;
  for (int i = 0; i < count; ++i) d.samples.push_back(testing::random_vector(rng, dim, -2.0, 2.0));
  return d;
}

}  // namespace

TEST_CASE("concentration function inverse") {
  CHECK(h_gaussian(0.0) == 1.0);
  CHECK_THROWS_AS(h_gaussian(-1.0), std::invalid_argument);
  const auto unit = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  for (int i = 1; i <= 999; ++i) {
    const double eps = i / 1000.0;
    const double t = unit.h_inverse(eps);
    // Closed form: h(t) = eps  <=>  t = pi sqrt(log(2/eps)/2), clipped at 0.
    const double expected = eps >= 1.0 ? 0.0 : std::numbers::pi * std::sqrt(std::max(0.0, std::log(2.0 / eps)) / 2.0);
    CHECK(std::abs(unit.h(t) - eps) <= 1e-8);
    CHECK(t == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK(unit.h_inverse(2.0 * std::exp(-2.0)) == doctest::Approx(std::numbers::pi).epsilon(1e-9));
  CHECK(unit.h_inverse(1.0) == 0.0);
  CHECK_THROWS_AS(unit.h_inverse(0.0), std::invalid_argument);
  CHECK_THROWS_AS(unit.h_inverse(1.5), std::invalid_argument);

  const auto scaled = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::Vector2d(1e-8, 4e-8).asDiagonal());
  CHECK(scaled.scale() == doctest::Approx(2e-4));
  CHECK(scaled.h_inverse(0.1) == doctest::Approx(2e-4 * unit.h_inverse(0.1)).epsilon(1e-9));
  CHECK(invert_decreasing([](double t) { return std::exp(-t); }, 0.5) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("model construction rejects bad parameters") {
  CHECK_THROWS_AS(DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::Matrix2d(Eigen::Vector2d(1, -1).asDiagonal())),
                  std::invalid_argument);
  CHECK_THROWS_AS(DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(3, 3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(DisturbanceModel::uniform_box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, -1)), std::invalid_argument);
  auto m = DisturbanceModel::uniform_box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  CHECK_THROWS_AS(m.set_tail(0.5, 2.0), std::invalid_argument);
}

TEST_CASE("Wasserstein distance matches a brute-force coupling oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = testing::uniform_int(rng, 1, 3);
    static const int kSizes[][2] = {{1, 1}, {1, 4}, {2, 3}, {3, 3}, {4, 4}, {5, 5}, {6, 6}, {2, 4}, {3, 6}, {7, 7}};
    const auto& sz = kSizes[trial % 10];
    const auto p = random_measure(rng, sz[0], dim);
    const auto q = random_measure(rng, sz[1], dim);
    const double oracle = testing::oracle_wasserstein(p.samples, q.samples);
    CHECK(wasserstein_1(p, q) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(testing::oracle_wasserstein_assignment(p.samples, q.samples) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("Wasserstein distance is a metric") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = testing::uniform_int(rng, 1, 3);
    const auto p = random_measure(rng, testing::uniform_int(rng, 1, 12), dim);
    const auto q = random_measure(rng, testing::uniform_int(rng, 1, 12), dim);
    const auto s = random_measure(rng, testing::uniform_int(rng, 1, 12), dim);
    const double pq = wasserstein_1(p, q);
    CHECK(pq >= 0.0);
    CHECK(wasserstein_1(p, p) <= 1e-12);
    CHECK(pq == doctest::Approx(wasserstein_1(q, p)).epsilon(1e-9));
    CHECK(pq <= wasserstein_1(p, s) + wasserstein_1(s, q) + 1e-9);
  }
  // Translation by a constant vector moves every point by its norm.
  const auto p = random_measure(rng, 10, 2);
  EmpiricalDistribution shifted = p;
  for (auto& x : shifted.samples) x += Eigen::Vector2d(0.3, -0.4);
  CHECK(wasserstein_1(p, shifted) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(wasserstein_1(p, random_measure(rng, 3, 3)), DimensionError);
}

TEST_CASE("ambiguity set membership") {
  std::mt19937_64 rng(43);
  const auto center = random_measure(rng, 8, 2);
  EmpiricalDistribution moved = center;
  moved.samples[0] += Eigen::Vector2d(0.8, 0.0);  // W1 = 0.1
  CHECK(AmbiguitySet{center, 0.0}.contains(center));
  CHECK(AmbiguitySet{center, 0.1}.contains(moved));
  CHECK_FALSE(AmbiguitySet{center, 0.09}.contains(moved));
}

TEST_CASE("confidence radius rule") {
  // M = 20 >= log(20): first branch, exponent 1/max(N s, 2) = 1/2.
  CHECK(radius_from_confidence(0.05, 20, 2.0, 1, 1.0, 1.0, 1.0) ==
        doctest::Approx(std::sqrt(std::log(20.0) / 20.0)).epsilon(1e-12));
  CHECK(radius_from_confidence(0.05, 20, 2.0, 1, 1.0, 1.0, 1.0) == doctest::Approx(0.387).epsilon(1e-3));
  // M = 2 < log(20): second branch, exponent 1/a.
  CHECK(radius_from_confidence(0.05, 2, 3.0, 1, 1.0, 1.0, 1.0) ==
        doctest::Approx(std::cbrt(std::log(20.0) / 2.0)).epsilon(1e-12));
  // Larger samples never enlarge the ball.
  double previous = INFINITY;
  for (int m = 1; m <= 1000; m *= 2) {
    const double r = radius_from_confidence(0.05, m, 2.0, 15, 1.0, 1.0, 2.0);
    CHECK(r <= previous);
    previous = r;
  }
  CHECK_THROWS_AS(radius_from_confidence(0.0, 20, 2.0, 1, 1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(radius_from_confidence(0.05, 20, 1.0, 1, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("sampling is deterministic and moments are right") {
  const auto model = DisturbanceModel::gaussian(Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(0.25, 4.0).asDiagonal());
  const auto a = sample(model, 3, 4000, 9);
  const auto b = sample(model, 3, 4000, 9);
  REQUIRE(a.size() == 4000);
  REQUIRE(a.length() == 6);
  for (int i = 0; i < a.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  CHECK(sample(model, 3, 1, 10).samples[0] != a.samples[0]);
  // A prefix of a larger draw equals the smaller draw.
  CHECK(sample(model, 3, 10, 9).samples[7] == a.samples[7]);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  for (const auto& s : a.samples) mean += s;
  mean /= a.size();
  Eigen::VectorXd var = Eigen::VectorXd::Zero(6);
  for (const auto& s : a.samples) var += (s - mean).cwiseAbs2();
  var /= a.size() - 1;
  for (int k = 0; k < 3; ++k) {
    CHECK(mean[2 * k] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(mean[2 * k + 1] == doctest::Approx(-1.0).epsilon(0.15));
    CHECK(var[2 * k] == doctest::Approx(0.25).epsilon(0.1));
    CHECK(var[2 * k + 1] == doctest::Approx(4.0).epsilon(0.1));
  }

  const auto box = DisturbanceModel::uniform_box(Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 3));
  for (const auto& s : sample(box, 5, 200, 3).samples) {
    for (int k = 0; k < 5; ++k) {
      CHECK(std::abs(s[2 * k]) <= 1.0);
      CHECK(s[2 * k + 1] >= 0.0);
      CHECK(s[2 * k + 1] <= 3.0);
    }
  }
}

TEST_CASE("sample CSV round-trip and malformed input") {
  const auto model = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const auto d = sample(model, 3, 5, 1);
  std::stringstream ss;
  write_samples_csv(ss, d, 2);
  CHECK(ss.str().rfind("w_1_1,w_1_2,w_2_1", 0) == 0);
  int dim = 0;
  const auto back = read_samples_csv(ss, &dim);
  CHECK(dim == 2);
  REQUIRE(back.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(back.samples[i] == d.samples[i]);

  std::stringstream bad("w_1_1,w_1_2\n1,2\n3\n");
  CHECK_THROWS(read_samples_csv(bad));
  std::stringstream junk("w_1_1\nabc\n");
  CHECK_THROWS(read_samples_csv(junk));
}

TEST_CASE("Lipschitz functionals concentrate as the bound predicts") {
  const auto model = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2) * 0.04);
  const std::vector<double> grid = {0.05, 0.1, 0.2, 0.4, 0.8};
  const auto curve = concentration_check(
      model, 4, [](const Eigen::VectorXd& w) { return w.norm(); }, 20000, 5, grid);
  REQUIRE(curve.within.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(curve.bound[i] == doctest::Approx(1.0 - model.h(grid[i])));
    CHECK(curve.within[i] >= curve.bound[i] - 0.01);
  }
  const double zero = 0.0;
  const auto linear = concentration_check(
      model, 4, [](const Eigen::VectorXd& w) { return w[0]; }, 20000, 6, grid, &zero);
  CHECK(linear.mean == 0.0);
  // w[0] ~ N(0, 0.04): P{|w0| <= 0.2} = 0.6827.
  CHECK(linear.within[2] == doctest::Approx(0.6827).epsilon(0.03));
}
