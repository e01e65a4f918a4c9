#pragma once

// Shared helpers for the unit and acceptance tests: seeded random instances and
// small scenarios built in code.

#include "stldro/programs.hpp"
#include "stldro/stl.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <random>
#include <vector>

namespace testing {

using stldro::Formula;
using stldro::Predicate;
using stldro::Trace;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double lo = -1.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = uniform(rng, -scale, scale);
  }
  return m;
}

inline Trace random_trace(std::mt19937_64& rng, int length, int dim) {
  Trace t;
  for (int k = 0; k < length; ++k) t.push_back(random_vector(rng, dim, -2.0, 2.0));
  return t;
}

inline Predicate random_predicate(std::mt19937_64& rng, int dim) {
  if (uniform_int(rng, 0, 2) == 0) {
    Eigen::MatrixXd l = random_matrix(rng, dim, dim);
    return Predicate::quadratic_cap(random_vector(rng, dim), l * l.transpose() * 0.5,
                                    uniform(rng, 0.1, 2.0));
  }
  return Predicate::affine(random_vector(rng, dim), uniform(rng, -0.5, 0.5));
}

/// Random formula of bounded depth. `negations` allows Not nodes anywhere.
inline Formula random_formula(std::mt19937_64& rng, int dim, int depth, bool negations) {
  if (depth == 0) return Formula::pred(random_predicate(rng, dim));
  const int choice = uniform_int(rng, 0, negations ? 6 : 5);
  const auto sub = [&] { return random_formula(rng, dim, depth - 1, negations); };
  const auto window = [&](int& lo, int& hi) {
    lo = uniform_int(rng, 0, 2);
    hi = lo + uniform_int(rng, 0, 3);
  };
  int lo = 0;
  int hi = 0;
  switch (choice) {
    case 0: return Formula::pred(random_predicate(rng, dim));
    case 1: return Formula::conjunction(sub(), sub());
    case 2: return Formula::disjunction(sub(), sub());
    case 3: window(lo, hi); return Formula::eventually(lo, hi, sub());
    case 4: window(lo, hi); return Formula::always(lo, hi, sub());
    case 5: window(lo, hi); return Formula::until(lo, hi, sub(), sub());
    default: return Formula::negation(sub());
  }
}

/// Definitional robustness, written independently of the library's evaluator.
inline double oracle_robustness(const Formula& f, const Trace& x, int k) {
  using Op = Formula::Op;
  switch (f.op()) {
    case Op::True: return stldro::kTrueRobustness;
    case Op::Pred: return f.predicate().value(x[k]);
    case Op::Not: return -oracle_robustness(f.lhs(), x, k);
    case Op::And: return std::min(oracle_robustness(f.lhs(), x, k), oracle_robustness(f.rhs(), x, k));
    case Op::Or: return std::max(oracle_robustness(f.lhs(), x, k), oracle_robustness(f.rhs(), x, k));
    case Op::Eventually: {
      double best = -INFINITY;
      for (int j = f.lo(); j <= f.hi(); ++j) best = std::max(best, oracle_robustness(f.lhs(), x, k + j));
      return best;
    }
    case Op::Always: {
      double best = INFINITY;
      for (int j = f.lo(); j <= f.hi(); ++j) best = std::min(best, oracle_robustness(f.lhs(), x, k + j));
      return best;
    }
    case Op::Until: {
      double best = -INFINITY;
      for (int j = f.lo(); j <= f.hi(); ++j) {
        double v = oracle_robustness(f.rhs(), x, k + j);
        for (int t = k; t <= k + j; ++t) v = std::min(v, oracle_robustness(f.lhs(), x, t));
        best = std::max(best, v);
      }
      return best;
    }
  }
  return 0.0;
}

/// Scalar system x+ = x + u + w over `steps` steps with the reach condition
/// F[steps,steps] (x >= goal), Gaussian noise of standard deviation sigma.
inline stldro::Scenario toy_scenario(int steps = 1, double sigma = 0.1, double goal = 0.5) {
  using namespace stldro;
  Scenario s;
  s.name = "toy";
  s.sys = LinearSystem(Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1));
  s.x0 = Eigen::VectorXd::Zero(1);
  s.horizon = steps;
  s.predicates["goal"] = Predicate::affine(Eigen::VectorXd::Ones(1), -goal, "goal");
  s.formula_text = "F[" + std::to_string(steps) + "," + std::to_string(steps) + "] goal";
  s.formula = to_nnf(parse(s.formula_text, s.predicates, 1));
  s.epsilon = 0.5;
  s.cost = CostSpec::scalar(1.0, 1.0, 1.0, 1, 1);
  s.model = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1) * sigma * sigma);
  s.region = Region{Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Constant(1, 5.0)};
  s.smoothing = SmoothingConfig::uniform(10.0);
  s.input_lower = Eigen::VectorXd::Constant(1, -2.0);
  s.input_upper = Eigen::VectorXd::Constant(1, 2.0);
  s.drp_samples = 20;
  s.ecp_samples = 200;
  s.seed = 7;
  s.solver.seed = 7;
  s.solver.outer_starts = 2;
  s.solver.multistart = 8;
  s.validate();
  return s;
}

/// W1 between uniform measures by brute force: both supports are replicated to a
/// common size L = lcm(m, n), and the optimal coupling of two uniform L-point
/// measures is a permutation (Birkhoff), so enumerating all L! matchings is exact.
inline double oracle_wasserstein(const std::vector<Eigen::VectorXd>& p, const std::vector<Eigen::VectorXd>& q) {
  const std::size_t len = std::lcm(p.size(), q.size());
  std::vector<Eigen::VectorXd> a;
  std::vector<Eigen::VectorXd> b;
  for (std::size_t i = 0; i < len; ++i) {
    a.push_back(p[i % p.size()]);
    b.push_back(q[i % q.size()]);
  }
  std::vector<int> perm(len);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) total += (a[i] - b[perm[i]]).norm();
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(len);
}

/// Minimum-cost perfect matching (Hungarian method with potentials, O(n^3)) for a
/// square cost matrix.
inline double oracle_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, INFINITY);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = INFINITY;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(match[j] - 1, j - 1);
  return total;
}

/// W1 between uniform measures via an assignment on supports replicated to
/// lcm(m, n) points each.
inline double oracle_wasserstein_assignment(const std::vector<Eigen::VectorXd>& p,
                                            const std::vector<Eigen::VectorXd>& q) {
  const std::size_t len = std::lcm(p.size(), q.size());
  Eigen::MatrixXd cost(len, len);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) cost(i, j) = (p[i % p.size()] - q[j % q.size()]).norm();
  }
  return oracle_assignment(cost) / static_cast<double>(len);
}

}  // namespace testing
