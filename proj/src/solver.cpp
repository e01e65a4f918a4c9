#include "stldro/solver.hpp"

#include "stldro/errors.hpp"
#include "stldro/rng.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>
#include <limits>

namespace stldro {

BoxDomain BoxDomain::uniform(int dim, double lo, double hi) {
  return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
}

void BoxDomain::validate() const {
  if (lower.size() != upper.size()) throw DimensionError("box bounds have different lengths");
  if (!lower.allFinite() || !upper.allFinite()) throw std::invalid_argument("box bounds must be finite");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("box is empty");
}

bool BoxDomain::contains(const Eigen::VectorXd& x, double slack) const {
  return x.size() == lower.size() && (x.array() >= lower.array() - slack).all() &&
         (x.array() <= upper.array() + slack).all();
}

Eigen::VectorXd BoxDomain::project(const Eigen::VectorXd& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

void SolverConfig::validate() const {
  const bool ok = max_outer_iterations > 0 && max_inner_iterations > 0 && sup_iterations > 0 &&
                  gradient_tolerance > 0 && constraint_tolerance > 0 && fd_step > 0 &&
                  multistart > 0 && outer_starts > 0 && penalty_initial > 0 &&
                  penalty_growth > 1 && penalty_max >= penalty_initial;
  if (!ok) throw std::invalid_argument("solver configuration values must be positive (penalty growth > 1)");
}

std::string to_string(SolveResult::Status status) {
  switch (status) {
    case SolveResult::Status::Converged: return "converged";
    case SolveResult::Status::NotConverged: return "not_converged";
    case SolveResult::Status::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const BoxDomain& box) {
  if (x.size() == 0) return 0.0;
  return (box.project(x - g) - x).cwiseAbs().maxCoeff();
}

}  // namespace

BoxMinimizeResult minimize_on_box(const SmoothFunction& f, Eigen::VectorXd x0, const BoxDomain& box,
                                  int max_iterations, double tolerance) {
  constexpr double kAlphaMin = 1e-12;
  constexpr double kAlphaMax = 1e12;
  constexpr double kArmijo = 1e-4;
  constexpr std::size_t kMemory = 10;
  constexpr int kMaxBacktracks = 50;

  BoxMinimizeResult out;
  Eigen::VectorXd x = box.project(x0);
  Eigen::VectorXd g(x.size());
  double fx = f(x, &g);
  if (!std::isfinite(fx)) throw std::runtime_error("objective is not finite at the starting point");
  out.x = x;
  out.value = fx;
  out.gradient = g;
  out.stationarity = projected_gradient_norm(x, g, box);
  if (out.stationarity <= tolerance) {
    out.converged = true;
    return out;
  }

  double alpha = std::clamp(1.0 / out.stationarity, kAlphaMin, kAlphaMax);
  std::deque<double> history{fx};
  Eigen::VectorXd xt(x.size());
  Eigen::VectorXd gt(x.size());
  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    const Eigen::VectorXd d = box.project(x - alpha * g) - x;
    const double gd = g.dot(d);
    if (!(gd < 0.0)) break;  // no descent direction left at floating-point resolution
    const double reference = *std::max_element(history.begin(), history.end());
    double step = 1.0;
    double ft = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      xt = x + step * d;
      ft = f(xt, &gt);
      if (std::isfinite(ft) && ft <= reference + kArmijo * step * gd) {
        accepted = true;
        break;
      }
      double trial = std::isfinite(ft) ? -0.5 * step * step * gd / (ft - fx - step * gd) : 0.0;
      if (!(trial >= 0.1 * step && trial <= 0.9 * step)) trial = 0.5 * step;
      step = trial;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = xt - x;
    const Eigen::VectorXd y = gt - g;
    x = xt;
    g = gt;
    fx = ft;
    history.push_back(fx);
    if (history.size() > kMemory) history.pop_front();
    const double sy = s.dot(y);
    alpha = sy <= 0.0 ? kAlphaMax : std::clamp(s.squaredNorm() / sy, kAlphaMin, kAlphaMax);

    const double pg = projected_gradient_norm(x, g, box);
    if (fx < out.value || (fx == out.value && pg < out.stationarity)) {
      out.x = x;
      out.value = fx;
      out.gradient = g;
      out.stationarity = pg;
    }
    if (pg <= tolerance) {
      out.x = x;
      out.value = fx;
      out.gradient = g;
      out.stationarity = pg;
      out.converged = true;
      break;
    }
  }
  return out;
}

BoxMinimizeResult quasi_newton_on_box(const SmoothFunction& f, Eigen::VectorXd x0, const BoxDomain& box,
                                      int max_iterations, double tolerance) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 40;
  constexpr double kActiveWidth = 1e-3;

  BoxMinimizeResult out;
  const Eigen::Index n = x0.size();
  Eigen::VectorXd x = box.project(x0);
  Eigen::VectorXd g(n);
  double fx = f(x, &g);
  if (!std::isfinite(fx)) throw std::runtime_error("objective is not finite at the starting point");
  out.x = x;
  out.value = fx;
  out.gradient = g;
  out.stationarity = projected_gradient_norm(x, g, box);
  if (out.stationarity <= tolerance) {
    out.converged = true;
    return out;
  }

  // Hessian approximation; the identity is rescaled after the first accepted step.
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n) * std::max(out.stationarity, 1e-12);
  bool scaled = false;
  Eigen::VectorXd xt(n);
  Eigen::VectorXd gt(n);
  Eigen::VectorXd d(n);
  std::vector<Eigen::Index> free;
  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    // Epsilon-active bounds whose gradient pushes outward are moved by a scaled
    // gradient step; the free block takes the quasi-Newton step.
    const double eps = std::min(kActiveWidth, out.stationarity);
    free.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = x[i] - box.lower[i] <= eps && g[i] > 0.0;
      const bool at_upper = box.upper[i] - x[i] <= eps && g[i] < 0.0;
      if (at_lower || at_upper) {
        d[i] = -g[i] / b(i, i);
      } else {
        free.push_back(i);
      }
    }
    if (!free.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd bf(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf[a] = g[free[a]];
        for (Eigen::Index c = 0; c < nf; ++c) bf(a, c) = b(free[a], free[c]);
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(bf);
      Eigen::VectorXd df = ldlt.solve(-gf);
      if (ldlt.info() != Eigen::Success || !df.allFinite() || !(df.dot(gf) < 0.0)) {
        b = Eigen::MatrixXd::Identity(n, n) * b.diagonal().maxCoeff();
        df = -gf / b(0, 0);
      }
      for (Eigen::Index a = 0; a < nf; ++a) d[free[a]] = df[a];
    }

    double step = 1.0;
    double ft = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      xt = box.project(x + step * d);
      const double decrease = g.dot(xt - x);
      if (!(decrease < 0.0)) {
        step *= 0.5;
        continue;
      }
      ft = f(xt, &gt);
      if (std::isfinite(ft) && ft <= fx + kArmijo * decrease) {
        accepted = true;
        break;
      }
      double trial = std::isfinite(ft) ? -0.5 * step * step * g.dot(d) / (ft - fx - step * g.dot(d)) : 0.0;
      if (!(trial >= 0.1 * step && trial <= 0.5 * step)) trial = 0.5 * step;
      step = trial;
    }
    if (!accepted) {
      if (b.isDiagonal()) break;
      b = Eigen::MatrixXd::Identity(n, n) * b.diagonal().maxCoeff();
      continue;
    }

    const Eigen::VectorXd s = xt - x;
    const Eigen::VectorXd y = gt - g;
    x = xt;
    g = gt;
    fx = ft;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        b = Eigen::MatrixXd::Identity(n, n) * (y.squaredNorm() / sy);
        scaled = true;
      }
      const Eigen::VectorXd bs = b * s;
      b += (y * y.transpose()) / sy - (bs * bs.transpose()) / s.dot(bs);
    }

    const double pg = projected_gradient_norm(x, g, box);
    out.x = x;
    out.value = fx;
    out.gradient = g;
    out.stationarity = pg;
    if (pg <= tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

InnerSupResult inner_sup(const SmoothFunction& g, double lambda, const Eigen::VectorXd& anchor,
                         const BoxDomain& box, const SolverConfig& cfg,
                         const std::vector<Eigen::VectorXd>& warm_starts, std::uint64_t stream,
                         int starts) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("inner_sup: lambda must be non-negative");
  if (anchor.size() != box.dim()) throw DimensionError("inner_sup: anchor and box dimensions differ");
  const int n = box.dim();
  // The kink of ||w - anchor|| is rounded off at scale delta for the ascent only;
  // candidates are ranked by the exact objective. delta must keep the curvature
  // lambda / delta resolvable in floating point at the stopping tolerance.
  const double diameter = (box.upper - box.lower).norm();
  const double delta = 1e-6 * (diameter > 0.0 ? diameter : 1.0);
  const SmoothFunction negated = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    const Eigen::VectorXd diff = w - anchor;
    const double soft = std::sqrt(diff.squaredNorm() + delta * delta);
    const double value = g(w, grad) - lambda * (soft - delta);
    if (grad) {
      *grad -= (lambda / soft) * diff;
      *grad = -*grad;
    }
    return -value;
  };
  const auto exact = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    return g(w, grad) - lambda * (w - anchor).norm();
  };

  std::vector<Eigen::VectorXd> initial;
  initial.push_back(anchor);
  for (const auto& w : warm_starts) initial.push_back(box.project(w));
  const int total = std::max(starts > 0 ? starts : cfg.multistart, static_cast<int>(initial.size()));
  CounterRng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull, stream);
  for (int s = static_cast<int>(initial.size()); s < total; ++s) {
    Eigen::VectorXd w(n);
    const bool vertex = (s % 2) == 0;
    for (int j = 0; j < n; ++j) {
      w[j] = vertex ? ((rng.next_u32() & 1u) ? box.upper[j] : box.lower[j])
                    : rng.uniform(box.lower[j], box.upper[j]);
    }
    initial.push_back(std::move(w));
  }

  InnerSupResult best;
  Eigen::VectorXd grad(n);
  best.argmax = anchor;
  best.value = exact(anchor, &grad);
  best.g_gradient = grad;
  const double tolerance = 1e-3 * cfg.gradient_tolerance * (1.0 + lambda + grad.norm());
  for (std::size_t s = 0; s < initial.size(); ++s) {
    const BoxMinimizeResult r = minimize_on_box(negated, initial[s], box, cfg.sup_iterations, tolerance);
    const double value = exact(r.x, &grad);
    if (s == 0) best.converged = r.converged;
    if (value > best.value + 1e-12 * (1.0 + std::abs(best.value))) {
      best.value = value;
      best.argmax = r.x;
      best.g_gradient = grad;
      best.converged = r.converged;
    }
  }
  best.starts = static_cast<int>(initial.size());
  best.distance = (best.argmax - anchor).norm();
  return best;
}

SolveResult outer_minimize(const SmoothFunction& objective,
                           const std::vector<SmoothFunction>& constraints, const BoxDomain& box,
                           const SolverConfig& cfg, const std::vector<Eigen::VectorXd>& starts) {
  cfg.validate();
  box.validate();
  const int n = box.dim();
  const int m = static_cast<int>(constraints.size());
  for (const auto& s : starts) {
    if (s.size() != n) throw DimensionError("outer_minimize: start has wrong dimension");
  }

  std::vector<Eigen::VectorXd> initial;
  for (const auto& s : starts) initial.push_back(box.project(s));
  const int total = std::max(cfg.outer_starts, static_cast<int>(initial.size()));
  CounterRng rng(cfg.seed, 0x6f75746572ull);
  while (static_cast<int>(initial.size()) < total) {
    Eigen::VectorXd x(n);
    for (int j = 0; j < n; ++j) x[j] = rng.uniform(box.lower[j], box.upper[j]);
    initial.push_back(std::move(x));
  }

  const auto evaluate_constraints = [&](const Eigen::VectorXd& x, std::vector<Eigen::VectorXd>* grads) {
    Eigen::VectorXd c(m);
    for (int j = 0; j < m; ++j) c[j] = constraints[j](x, grads ? &(*grads)[j] : nullptr);
    return c;
  };
  const auto violation_of = [](const Eigen::VectorXd& c) {
    return c.size() == 0 ? 0.0 : std::max(0.0, -c.minCoeff());
  };

  SolveResult best;
  bool have_best = false;
  for (int start = 0; start < total; ++start) {
    SolveResult run;
    run.start_index = start;
    Eigen::VectorXd x = initial[start];
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
    double rho = cfg.penalty_initial;
    double previous_violation = std::numeric_limits<double>::infinity();
    std::vector<Eigen::VectorXd> cgrad(m, Eigen::VectorXd(n));
    Eigen::VectorXd c;
    bool converged = false;
    const double scale = objective(x, nullptr);
    for (int outer = 0; outer < cfg.max_outer_iterations && !converged; ++outer) {
      run.outer_iterations = outer + 1;
      // Augmented Lagrangian for c >= 0: psi(c) = (max(0, mu - rho c)^2 - mu^2) / (2 rho).
      const SmoothFunction lagrangian = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
        double value = objective(z, grad);
        Eigen::VectorXd gc(n);
        for (int j = 0; j < m; ++j) {
          const double cj = constraints[j](z, grad ? &gc : nullptr);
          const double shifted = std::max(0.0, mu[j] - rho * cj);
          value += (shifted * shifted - mu[j] * mu[j]) / (2.0 * rho);
          if (grad && shifted > 0.0) *grad -= shifted * gc;
        }
        return value;
      };
      // Stationarity is measured relative to the objective scale at the start.
      const BoxMinimizeResult sub = quasi_newton_on_box(lagrangian, x, box, cfg.max_inner_iterations,
                                                    0.1 * cfg.gradient_tolerance * (1.0 + std::abs(scale)));
      run.inner_iterations += sub.iterations;
      x = sub.x;

      Eigen::VectorXd gf(n);
      const double fx = objective(x, &gf);
      c = evaluate_constraints(x, &cgrad);
      const double violation = violation_of(c);
      for (int j = 0; j < m; ++j) mu[j] = std::max(0.0, mu[j] - rho * c[j]);
      Eigen::VectorXd gl = gf;
      for (int j = 0; j < m; ++j) gl -= mu[j] * cgrad[j];
      run.stationarity = projected_gradient_norm(x, gl, box);
      run.objective = fx;
      converged = violation <= cfg.constraint_tolerance &&
                  run.stationarity <= cfg.gradient_tolerance * (1.0 + std::abs(fx));
      if (violation > 0.25 * previous_violation && violation > cfg.constraint_tolerance) rho = std::min(rho * cfg.penalty_growth, cfg.penalty_max);
      previous_violation = violation;
    }
    run.x = x;
    run.constraints = c.size() == m ? c : evaluate_constraints(x, nullptr);
    run.max_violation = violation_of(run.constraints);
    run.multipliers = mu;
    const bool feasible = run.max_violation <= cfg.constraint_tolerance;
    run.status = !feasible ? SolveResult::Status::Infeasible
                 : converged ? SolveResult::Status::Converged
                             : SolveResult::Status::NotConverged;

    bool better = !have_best;
    if (have_best) {
      if (run.feasible() != best.feasible()) {
        better = run.feasible();
      } else if (run.feasible()) {
        better = run.objective < best.objective;
      } else {
        better = run.max_violation < best.max_violation;
      }
    }
    if (better) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace stldro
