#include "stldro/programs.hpp"

#include "stldro/errors.hpp"
#include "stldro/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stldro {

namespace {

bool symmetric(const Eigen::MatrixXd& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

void require_weight(const Eigen::MatrixXd& m, int dim, const std::string& name, bool definite) {
  if (m.rows() != dim || m.cols() != dim) {
    throw DimensionError("cost." + name + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  if (!m.allFinite() || !symmetric(m)) throw std::invalid_argument("cost." + name + " must be finite and symmetric");
  const double lo = min_eigenvalue(m);
  if (definite ? !(lo > 0.0) : lo < -1e-9) {
    throw std::invalid_argument("cost." + name + (definite ? " must be positive definite"
                                                           : " must be positive semidefinite"));
  }
}

}  // namespace

CostSpec CostSpec::scalar(double q, double q_final, double r, int state_dim, int input_dim) {
  return {q * Eigen::MatrixXd::Identity(state_dim, state_dim),
          q_final * Eigen::MatrixXd::Identity(state_dim, state_dim),
          r * Eigen::MatrixXd::Identity(input_dim, input_dim)};
}

void CostSpec::validate(int state_dim, int input_dim) const {
  require_weight(q, state_dim, "Q", false);
  require_weight(q_final, state_dim, "Q_f", false);
  require_weight(r, input_dim, "R", true);
}

BoxDomain Scenario::input_box() const {
  BoxDomain box{Eigen::VectorXd(input_length()), Eigen::VectorXd(input_length())};
  for (int k = 0; k < horizon; ++k) {
    box.lower.segment(k * input_dim(), input_dim()) = input_lower;
    box.upper.segment(k * input_dim(), input_dim()) = input_upper;
  }
  return box;
}

void Scenario::validate() const {
  const int n = state_dim();
  const int m = input_dim();
  if (horizon < 1) throw ScenarioError("horizon", "must be at least 1");
  if (x0.size() != n) throw ScenarioError("x0", "must have " + std::to_string(n) + " entries");
  if (stldro::horizon(formula) > horizon) {
    throw ScenarioError("formula", "formula horizon " + std::to_string(stldro::horizon(formula)) +
                                       " exceeds the trajectory horizon " + std::to_string(horizon));
  }
  if (contains_true(formula)) {
    throw ScenarioError("formula", "the constant T cannot be used in a synthesis formula");
  }
  if (!is_nnf(formula)) throw ScenarioError("formula", "internal: formula is not in negation normal form");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ScenarioError("epsilon", "must lie in (0, 1]");
  if (!std::isfinite(r0)) throw ScenarioError("robustness_level", "must be finite");
  try {
    cost.validate(n, m);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("cost", e.what());
  }
  if (model.dim() != n) throw ScenarioError("disturbance", "dimension must equal the state dimension");
  try {
    region.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("region", e.what());
  }
  if (region.lower.size() != n) throw ScenarioError("region", "dimension must equal the state dimension");
  try {
    smoothing.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("smoothing", e.what());
  }
  if (input_lower.size() != m || input_upper.size() != m) {
    throw ScenarioError("input_box", "bounds must have " + std::to_string(m) + " entries");
  }
  if (!input_lower.allFinite() || !input_upper.allFinite() ||
      (input_lower.array() > input_upper.array()).any()) {
    throw ScenarioError("input_box", "bounds must be finite with lower <= upper");
  }
  if (radius && !(*radius >= 0.0 && std::isfinite(*radius))) throw ScenarioError("radius", "must be >= 0");
  if (drp_samples < 1 || drp_samples > 64) throw ScenarioError("samples.drp", "must lie in [1, 64]");
  if (ecp_samples < 1) throw ScenarioError("samples.ecp", "must be at least 1");
  try {
    solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("solver", e.what());
  }
  if (w_box) {
    if (w_box->dim() != disturbance_length()) {
      throw ScenarioError("disturbance_box", "must have N*n = " + std::to_string(disturbance_length()) + " entries");
    }
    try {
      w_box->validate();
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("disturbance_box", e.what());
    }
  }
  if (!(w_box_sigmas >= 0.0)) throw ScenarioError("disturbance_box_sigmas", "must be >= 0");
}

Region trajectory_hull_region(const Scenario& scn, int trials, double fraction, std::uint64_t seed) {
  const int m = scn.input_dim();
  Region hull{scn.x0, scn.x0};
  Eigen::VectorXd u(scn.input_length());
  Eigen::VectorXd w(scn.disturbance_length());
  Trace trace;
  for (int t = 0; t < trials; ++t) {
    CounterRng rng(seed, static_cast<std::uint64_t>(t));
    for (int k = 0; k < scn.horizon; ++k) {
      for (int j = 0; j < m; ++j) u[k * m + j] = rng.uniform(scn.input_lower[j], scn.input_upper[j]);
    }
    scn.model.draw(rng, scn.horizon, w.data());
    rollout(scn.sys, scn.x0, u, w, trace);
    for (const auto& x : trace) {
      hull.lower = hull.lower.cwiseMin(x);
      hull.upper = hull.upper.cwiseMax(x);
    }
  }
  return hull.inflated(fraction);
}

TighteningReport tightening(const Scenario& scn) {
  TighteningReport t;
  t.lipschitz = formula_lipschitz(scn.formula, scn.sys, scn.horizon, scn.region);
  t.h_inverse = scn.model.h_inverse(scn.epsilon);
  t.value = t.lipschitz.l_phi * t.h_inverse;
  return t;
}

double scenario_radius(const Scenario& scn, int count) {
  if (scn.radius) return *scn.radius;
  if (scn.radius_rule) {
    return radius_from_confidence(*scn.radius_rule, count, scn.model, scn.horizon);
  }
  throw ScenarioError("radius", "no radius given and no radius_rule configured");
}

BoxDomain default_disturbance_box(const Scenario& scn, const EmpiricalDistribution& samples) {
  samples.validate();
  const int n = scn.state_dim();
  if (samples.length() != scn.disturbance_length()) {
    throw DimensionError("samples do not match the scenario horizon and dimension");
  }
  BoxDomain box{samples.samples.front(), samples.samples.front()};
  for (const auto& s : samples.samples) {
    box.lower = box.lower.cwiseMin(s);
    box.upper = box.upper.cwiseMax(s);
  }
  const Eigen::VectorXd sigma = scn.model.covariance().diagonal().cwiseMax(0.0).cwiseSqrt();
  for (int k = 0; k < scn.horizon; ++k) {
    box.lower.segment(k * n, n) -= scn.w_box_sigmas * sigma;
    box.upper.segment(k * n, n) += scn.w_box_sigmas * sigma;
  }
  return box;
}

// ---------------------------------------------------------------------------
// Evaluator

Evaluator::Evaluator(const Scenario& scn) : scn_(&scn) {}

const Trace& Evaluator::rollout(const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  stldro::rollout(scn_->sys, scn_->x0, u, w, trace_);
  return trace_;
}

double Evaluator::cost(const Eigen::VectorXd& u, const Eigen::VectorXd& w, Eigen::VectorXd* du,
                       Eigen::VectorXd* dw) {
  rollout(u, w);
  const CostSpec& c = scn_->cost;
  const int steps = scn_->horizon;
  const int m = scn_->input_dim();
  double value = 0.0;
  for (int k = 0; k < steps; ++k) {
    value += trace_[k].dot(c.q * trace_[k]);
    const auto uk = u.segment(k * m, m);
    value += uk.dot(c.r * uk);
  }
  value += trace_[steps].dot(c.q_final * trace_[steps]);
  if (du || dw) {
    state_grad_.resize(steps + 1);
    for (int k = 0; k < steps; ++k) state_grad_[k].noalias() = 2.0 * (c.q * trace_[k]);
    state_grad_[steps].noalias() = 2.0 * (c.q_final * trace_[steps]);
    pullback(scn_->sys, state_grad_, du ? &du_ : nullptr, dw);
    if (du) {
      for (int k = 0; k < steps; ++k) du_.segment(k * m, m).noalias() += 2.0 * (c.r * u.segment(k * m, m));
      *du = du_;
    }
  }
  return value;
}

double Evaluator::smooth_robustness(const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                                    Eigen::VectorXd* du, Eigen::VectorXd* dw) {
  rollout(u, w);
  const bool want = du || dw;
  const double value =
      stldro::smooth_robustness(scn_->formula, trace_, 0, scn_->smoothing, want ? &state_grad_ : nullptr);
  if (want) pullback(scn_->sys, state_grad_, du, dw);
  return value;
}

double Evaluator::robustness(const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
  rollout(u, w);
  return stldro::robustness(scn_->formula, trace_, 0);
}

// ---------------------------------------------------------------------------
// Sample-average programs

namespace {

struct Averages {
  double cost = 0.0;
  double robustness = 0.0;
};

Averages sample_averages(const Scenario& scn, const Eigen::VectorXd& u, const EmpiricalDistribution& samples) {
  Evaluator ev(scn);
  Averages a;
  for (const auto& w : samples.samples) {
    a.cost += ev.cost(u, w);
    a.robustness += ev.smooth_robustness(u, w);
  }
  a.cost /= samples.size();
  a.robustness /= samples.size();
  return a;
}

/// Largest sample-average smoothed robustness found by multistart ascent over U^N.
double best_reachable_robustness(const Scenario& scn, const EmpiricalDistribution& samples,
                                 const SolverConfig& cfg, const std::vector<Eigen::VectorXd>& starts) {
  Evaluator ev(scn);
  const BoxDomain box = scn.input_box();
  const double inv = 1.0 / samples.size();
  const SmoothFunction negative_mean = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    double total = 0.0;
    Eigen::VectorXd g(u.size());
    if (grad) grad->setZero(u.size());
    for (const auto& w : samples.samples) {
      total += ev.smooth_robustness(u, w, grad ? &g : nullptr, nullptr);
      if (grad) *grad -= inv * g;
    }
    return -inv * total;
  };
  std::vector<Eigen::VectorXd> initial = starts;
  initial.push_back(Eigen::VectorXd::Zero(box.dim()));
  CounterRng rng(cfg.seed, 0x7265616368ull);
  for (int s = 0; s < cfg.outer_starts; ++s) {
    Eigen::VectorXd u(box.dim());
    for (int j = 0; j < box.dim(); ++j) u[j] = rng.uniform(box.lower[j], box.upper[j]);
    initial.push_back(std::move(u));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& u0 : initial) {
    const BoxMinimizeResult r =
        minimize_on_box(negative_mean, u0, box, cfg.max_inner_iterations, cfg.gradient_tolerance);
    best = std::max(best, -r.value);
  }
  return best;
}

void fill_common(const Scenario& scn, ProgramSolution& sol) {
  Evaluator ev(scn);
  sol.nominal_robustness = ev.robustness(sol.u, Eigen::VectorXd::Zero(scn.disturbance_length()));
}

}  // namespace

ProgramSolution solve_sample_average(const Scenario& scn, const EmpiricalDistribution& samples,
                                     double tightening_value, const SolverConfig& cfg,
                                     const std::vector<Eigen::VectorXd>& starts) {
  scn.validate();
  samples.validate();
  if (samples.length() != scn.disturbance_length()) {
    throw DimensionError("samples do not match the scenario horizon and dimension");
  }
  const BoxDomain box = scn.input_box();
  const double inv = 1.0 / samples.size();
  const double target = scn.r0 + tightening_value;
  Evaluator ev(scn);

  // J is quadratic in (u, w) with affine dynamics, so the sample mean of J(u, w^i)
  // equals J(u, w_bar) plus a constant independent of u.
  Eigen::VectorXd w_bar = Eigen::VectorXd::Zero(samples.length());
  for (const auto& w : samples.samples) w_bar += inv * w;
  const Eigen::VectorXd u_zero = Eigen::VectorXd::Zero(box.dim());
  double offset = -ev.cost(u_zero, w_bar);
  for (const auto& w : samples.samples) offset += inv * ev.cost(u_zero, w);
  const SmoothFunction objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    return ev.cost(u, w_bar, grad, nullptr) + offset;
  };
  const SmoothFunction constraint = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    double total = 0.0;
    Eigen::VectorXd g(u.size());
    if (grad) grad->setZero(u.size());
    for (const auto& w : samples.samples) {
      total += ev.smooth_robustness(u, w, grad ? &g : nullptr, nullptr);
      if (grad) *grad += inv * g;
    }
    return inv * total - target;
  };

  std::vector<Eigen::VectorXd> initial = starts;
  if (initial.empty()) initial.push_back(box.project(Eigen::VectorXd::Zero(box.dim())));
  const SolveResult r = outer_minimize(objective, {constraint}, box, cfg, initial);

  ProgramSolution sol;
  sol.method = "ecp";
  sol.u = r.x;
  sol.samples = samples.size();
  sol.tightening = tightening_value;
  const Averages avg = sample_averages(scn, r.x, samples);
  sol.sample_average_cost = avg.cost;
  sol.j_hat = avg.cost;
  sol.constraint_value = avg.robustness;
  sol.residual = avg.robustness - target;
  sol.outer_iterations = r.outer_iterations;
  sol.inner_iterations = r.inner_iterations;
  sol.feasible = r.feasible();
  if (r.feasible()) {
    sol.status = to_string(r.status);
  } else {
    sol.best_reachable = best_reachable_robustness(scn, samples, cfg, {r.x});
    sol.status = sol.best_reachable < target - cfg.constraint_tolerance ? "infeasible_tightening"
                                                                         : "infeasible_solver";
  }
  fill_common(scn, sol);
  return sol;
}

ProgramSolution solve_nominal(const Scenario& scn, const SolverConfig& cfg) {
  EmpiricalDistribution zero;
  zero.samples.push_back(Eigen::VectorXd::Zero(scn.disturbance_length()));
  ProgramSolution sol = solve_sample_average(scn, zero, 0.0, cfg);
  sol.method = "nominal";
  sol.seed = cfg.seed;
  return sol;
}

ProgramSolution solve_ecp(const Scenario& scn, const EmpiricalDistribution& samples,
                          const SolverConfig& cfg) {
  const TighteningReport t = tightening(scn);
  const ProgramSolution nominal = solve_nominal(scn, cfg);
  ProgramSolution sol = solve_sample_average(scn, samples, t.value, cfg,
                                             {Eigen::VectorXd::Zero(scn.input_length()), nominal.u});
  sol.l_phi = t.lipschitz.l_phi;
  sol.h_inverse = t.h_inverse;
  sol.seed = cfg.seed;
  return sol;
}

// ---------------------------------------------------------------------------
// Wasserstein dual

namespace {

enum class DualKind { Cost, Robustness };

/// Evaluates lambda r + mean_i sup_w [g(u, w) - lambda ||w - w^i||] together with the
/// Danskin derivatives in u and lambda, keeping per-sample maximizers as warm starts.
class DualOracle {
 public:
  DualOracle(const Scenario& scn, const EmpiricalDistribution& samples, DualKind kind, double r,
             const BoxDomain& w_box, const SolverConfig& cfg)
      : scn_(scn), samples_(samples), kind_(kind), r_(r), box_(w_box), cfg_(cfg), ev_(scn),
        warm_(samples.samples) {}

  struct Result {
    DualTerms terms;
    Eigen::VectorXd du;  // derivative of the mean sup in u
    double dlambda = 0.0;
  };

  Result evaluate(const Eigen::VectorXd& u, double lambda, int starts, bool want_gradient) {
    Result out;
    const int count = samples_.size();
    out.terms.sups.resize(count);
    if (want_gradient) out.du = Eigen::VectorXd::Zero(u.size());
    Eigen::VectorXd du(u.size());
    double distance = 0.0;
    for (int i = 0; i < count; ++i) {
      const SmoothFunction g = [&](const Eigen::VectorXd& w, Eigen::VectorXd* dw) {
        if (kind_ == DualKind::Cost) return ev_.cost(u, w, nullptr, dw);
        const double rho = ev_.smooth_robustness(u, w, nullptr, dw);
        if (dw) *dw = -*dw;
        return -rho;
      };
      const InnerSupResult s = inner_sup(g, lambda, samples_.samples[i], box_, cfg_, {warm_[i]},
                                         static_cast<std::uint64_t>(i), starts);
      warm_[i] = s.argmax;
      out.terms.sups[i] = s.value;
      out.terms.converged = out.terms.converged && s.converged;
      distance += s.distance;
      if (want_gradient) {
        if (kind_ == DualKind::Cost) {
          ev_.cost(u, s.argmax, &du, nullptr);
          out.du += du;
        } else {
          ev_.smooth_robustness(u, s.argmax, &du, nullptr);
          out.du -= du;
        }
      }
    }
    out.terms.mean_distance = distance / count;
    out.terms.value = lambda * r_ + out.terms.sups.mean();
    if (want_gradient) out.du /= count;
    out.dlambda = r_ - out.terms.mean_distance;
    return out;
  }

  /// Lipschitz estimate of g in w at the sample anchors (largest gradient norm).
  double local_lipschitz(const Eigen::VectorXd& u) {
    double best = 0.0;
    Eigen::VectorXd dw;
    for (const auto& w : samples_.samples) {
      if (kind_ == DualKind::Cost) {
        ev_.cost(u, w, nullptr, &dw);
      } else {
        ev_.smooth_robustness(u, w, nullptr, &dw);
      }
      best = std::max(best, dw.norm());
    }
    return best;
  }

 private:
  const Scenario& scn_;
  const EmpiricalDistribution& samples_;
  DualKind kind_;
  double r_;
  const BoxDomain& box_;
  SolverConfig cfg_;
  Evaluator ev_;
  std::vector<Eigen::VectorXd> warm_;
};

/// Minimizes the convex function lambda -> value(lambda) on [0, hi] by golden
/// section, returning the best point seen (including both ends).
template <typename F>
double golden_minimize(F&& value, double hi, int iterations) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = 0.0;
  double b = hi;
  double best_x = 0.0;
  double best_v = value(0.0);
  const auto track = [&](double x, double v) {
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  };
  track(hi, value(hi));
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = value(c);
  double fd = value(d);
  track(c, fc);
  track(d, fd);
  for (int it = 0; it < iterations; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = value(c);
      track(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = value(d);
      track(d, fd);
    }
  }
  return best_x;
}

}  // namespace

DualTerms cost_dual_terms(const Scenario& scn, const Eigen::VectorXd& u,
                          const EmpiricalDistribution& samples, double lambda1, double r,
                          const BoxDomain& w_box, const SolverConfig& cfg, int starts) {
  DualOracle oracle(scn, samples, DualKind::Cost, r, w_box, cfg);
  return oracle.evaluate(u, lambda1, starts, false).terms;
}

DualTerms robustness_dual_terms(const Scenario& scn, const Eigen::VectorXd& u,
                                const EmpiricalDistribution& samples, double lambda2, double r,
                                const BoxDomain& w_box, const SolverConfig& cfg, int starts) {
  DualOracle oracle(scn, samples, DualKind::Robustness, r, w_box, cfg);
  return oracle.evaluate(u, lambda2, starts, false).terms;
}

ProgramSolution solve_drp(const Scenario& scn, const EmpiricalDistribution& samples, double r,
                          const BoxDomain& w_box, const SolverConfig& cfg) {
  scn.validate();
  samples.validate();
  cfg.validate();
  if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("solve_drp: radius must be >= 0");
  if (samples.length() != scn.disturbance_length()) {
    throw DimensionError("samples do not match the scenario horizon and dimension");
  }
  if (w_box.dim() != scn.disturbance_length()) throw DimensionError("disturbance box has the wrong dimension");
  w_box.validate();
  for (const auto& w : samples.samples) {
    if (!w_box.contains(w, 1e-12)) throw std::invalid_argument("solve_drp: a sample lies outside the disturbance box");
  }

  const TighteningReport t = tightening(scn);
  const double target = scn.r0 + t.value;
  const int nu = scn.input_length();
  const BoxDomain u_box = scn.input_box();

  // Warm start from the sample-average program on the same samples.
  const ProgramSolution saa = solve_sample_average(scn, samples, t.value, cfg);

  DualOracle cost_oracle(scn, samples, DualKind::Cost, r, w_box, cfg);
  DualOracle rob_oracle(scn, samples, DualKind::Robustness, r, w_box, cfg);
  constexpr double kMaxScaleMultiple = 100.0;
  const double scale1 = std::max(cost_oracle.local_lipschitz(saa.u), 1e-6);
  const double scale2 = std::max(rob_oracle.local_lipschitz(saa.u), 1e-6);

  // z = (u, s1, s2) with lambda_j = scale_j * s_j.
  BoxDomain z_box{Eigen::VectorXd(nu + 2), Eigen::VectorXd(nu + 2)};
  z_box.lower << u_box.lower, 0.0, 0.0;
  z_box.upper << u_box.upper, kMaxScaleMultiple, kMaxScaleMultiple;
  const int search_starts = std::min(cfg.multistart, 4);
  // The dual is nonsmooth where an inner maximizer jumps between basins, so the joint
  // search runs on a bounded budget from the sample-average solution; the multipliers
  // are then polished exactly for the returned input.
  SolverConfig search = cfg;
  search.outer_starts = 1;
  search.max_outer_iterations = std::min(cfg.max_outer_iterations, 10);
  search.max_inner_iterations = std::min(cfg.max_inner_iterations, 30);
  double margin = 0.0;

  const SmoothFunction objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    const auto res = cost_oracle.evaluate(z.head(nu), scale1 * z[nu], search_starts, grad != nullptr);
    if (grad) {
      grad->resize(nu + 2);
      grad->head(nu) = res.du;
      (*grad)[nu] = scale1 * res.dlambda;
      (*grad)[nu + 1] = 0.0;
    }
    return res.terms.value;
  };
  const SmoothFunction constraint = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
    const auto res = rob_oracle.evaluate(z.head(nu), scale2 * z[nu + 1], search_starts, grad != nullptr);
    if (grad) {
      grad->resize(nu + 2);
      grad->head(nu) = -res.du;
      (*grad)[nu] = 0.0;
      (*grad)[nu + 1] = -scale2 * res.dlambda;
    }
    return -res.terms.value - target - margin;
  };

  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd z0(nu + 2);
  z0 << saa.u, 1.0, 1.0;
  starts.push_back(z0);

  ProgramSolution sol;
  sol.method = "drp";
  sol.radius = r;
  sol.samples = samples.size();
  sol.seed = cfg.seed;
  sol.l_phi = t.lipschitz.l_phi;
  sol.h_inverse = t.h_inverse;
  sol.tightening = t.value;
  sol.w_box = w_box;

  constexpr int kRepairs = 3;
  constexpr int kGoldenIterations = 30;
  SolveResult result;
  for (int attempt = 0; attempt <= kRepairs; ++attempt) {
    result = outer_minimize(objective, {constraint}, z_box, search, starts);
    sol.outer_iterations += result.outer_iterations;
    sol.inner_iterations += result.inner_iterations;

    // Certification: polish each multiplier in 1-D for the fixed input, then
    // re-solve every inner sup with more starts.
    const Eigen::VectorXd u = result.x.head(nu);
    const double lambda_hi1 = scale1 * kMaxScaleMultiple;
    const double lambda_hi2 = scale2 * kMaxScaleMultiple;
    const double lambda1 = golden_minimize(
        [&](double l) { return cost_oracle.evaluate(u, l, cfg.multistart, false).terms.value; },
        lambda_hi1, kGoldenIterations);
    const double lambda2 = golden_minimize(
        [&](double l) { return rob_oracle.evaluate(u, l, cfg.multistart, false).terms.value; },
        lambda_hi2, kGoldenIterations);
    sol.u = u;
    sol.lambda1 = lambda1;
    sol.lambda2 = lambda2;
    const Certificate cert = certify(scn, sol, samples, cfg);
    sol.y1 = cert.y1;
    sol.y2 = cert.y2;
    sol.j_hat = cert.j_hat;
    sol.residual = cert.residual;
    sol.constraint_value = cert.constraint_value;
    sol.inner_converged = cert.inner_converged;
    if (sol.residual >= -cfg.constraint_tolerance) break;
    // The certified sups exceeded those seen during the search: tighten and retry.
    margin += -sol.residual + cfg.constraint_tolerance;
    starts.assign(1, result.x);
  }

  sol.sample_average_cost = sample_averages(scn, sol.u, samples).cost;
  sol.feasible = sol.residual >= -cfg.constraint_tolerance;
  if (sol.feasible) {
    sol.status = result.status == SolveResult::Status::Converged ? "converged" : "not_converged";
  } else {
    // The non-robust program with the same tightening decides whether the
    // constraint level itself is out of reach.
    sol.best_reachable = best_reachable_robustness(scn, samples, cfg, {saa.u, sol.u});
    sol.status = sol.best_reachable < target - cfg.constraint_tolerance ? "infeasible_tightening"
                                                                         : "infeasible_solver";
  }
  fill_common(scn, sol);
  return sol;
}

Certificate certify(const Scenario& scn, const ProgramSolution& sol,
                    const EmpiricalDistribution& samples, const SolverConfig& cfg) {
  if (sol.u.size() != scn.input_length()) throw DimensionError("certify: input has the wrong length");
  const double target = scn.r0 + sol.tightening;
  Certificate c;
  if (sol.method == "drp") {
    // Fresh oracles (anchors as the only warm starts) so the values depend on the
    // stored decision alone.
    const int starts = 4 * cfg.multistart;
    const DualTerms t1 = cost_dual_terms(scn, sol.u, samples, sol.lambda1, sol.radius, sol.w_box, cfg, starts);
    const DualTerms t2 =
        robustness_dual_terms(scn, sol.u, samples, sol.lambda2, sol.radius, sol.w_box, cfg, starts);
    c.j_hat = t1.value;
    c.constraint_value = -t2.value;
    c.y1 = t1.sups;
    c.y2 = t2.sups;
    c.inner_converged = t1.converged && t2.converged;
  } else {
    const Averages avg = sample_averages(scn, sol.u, samples);
    c.j_hat = avg.cost;
    c.constraint_value = avg.robustness;
  }
  c.residual = c.constraint_value - target;
  return c;
}

// ---------------------------------------------------------------------------
// Monte-Carlo evaluation

namespace {

Eigen::VectorXd draw_fresh(const Scenario& scn, std::uint64_t seed, int i) {
  CounterRng rng(seed, kEvaluationStreamBase + static_cast<std::uint64_t>(i));
  Eigen::VectorXd w(scn.disturbance_length());
  scn.model.draw(rng, scn.horizon, w.data());
  return w;
}

double binomial_stderr(double p, int trials) {
  return trials > 0 ? std::sqrt(p * (1.0 - p) / trials) : 0.0;
}

}  // namespace

RateEstimate empirical_ccp_rate(const Scenario& scn, const Eigen::VectorXd& u, int trials,
                                std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("empirical_ccp_rate: need at least one trial");
  Evaluator ev(scn);
  int hits = 0;
  for (int i = 0; i < trials; ++i) {
    if (ev.robustness(u, draw_fresh(scn, seed, i)) >= scn.r0) ++hits;
  }
  RateEstimate est;
  est.trials = trials;
  est.rate = static_cast<double>(hits) / trials;
  est.stderr = binomial_stderr(est.rate, trials);
  return est;
}

OutOfSampleReport out_of_sample_report(const Scenario& scn, const ProgramSolution& sol, int trials,
                                       std::uint64_t seed) {
  OutOfSampleReport rep;
  rep.trials = trials;
  rep.bound = sol.j_hat;
  if (trials < 1) return rep;
  Evaluator ev(scn);
  std::vector<double> costs(trials);
  std::vector<double> robust(trials);
  int hits = 0;
  for (int i = 0; i < trials; ++i) {
    const Eigen::VectorXd w = draw_fresh(scn, seed, i);
    costs[i] = ev.cost(sol.u, w);
    robust[i] = ev.robustness(sol.u, w);
    if (robust[i] >= scn.r0) ++hits;
  }
  rep.cost_mean = std::accumulate(costs.begin(), costs.end(), 0.0) / trials;
  double ss = 0.0;
  for (double c : costs) ss += (c - rep.cost_mean) * (c - rep.cost_mean);
  rep.cost_stderr = trials > 1 ? std::sqrt(ss / (trials - 1) / trials) : 0.0;
  rep.pass = rep.cost_mean - 2.0 * rep.cost_stderr <= rep.bound;
  rep.satisfaction.trials = trials;
  rep.satisfaction.rate = static_cast<double>(hits) / trials;
  rep.satisfaction.stderr = binomial_stderr(rep.satisfaction.rate, trials);
  std::nth_element(robust.begin(), robust.begin() + trials / 2, robust.end());
  rep.robustness_median = robust[trials / 2];
  return rep;
}

bool drp_dual_bound_check(const Scenario& scn, const ProgramSolution& sol,
                          const EmpiricalDistribution& samples) {
  return sol.j_hat >= sample_averages(scn, sol.u, samples).cost - 1e-6;
}

std::vector<Trace> sample_trajectories(const Scenario& scn, const Eigen::VectorXd& u, int count,
                                       std::uint64_t seed) {
  std::vector<Trace> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Trace t;
    rollout(scn.sys, scn.x0, u, draw_fresh(scn, seed, i), t);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace stldro
