// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.
//
//   acceptance --cli <path to stl-dro> --workdir <scratch directory> [--only N]

#include "stldro/lipschitz.hpp"
#include "stldro/programs.hpp"
#include "stldro/scenario_io.hpp"

#include "support.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace stldro;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Feasible DRP solves seen by any criterion, for the dual-bound sanity check.
struct DualRecord {
  std::string label;
  double j_hat;
  double sample_average_cost;
};
std::vector<DualRecord> g_dual_records;

void record(const std::string& label, const ProgramSolution& s) {
  if (s.feasible) g_dual_records.push_back({label, s.j_hat, s.sample_average_cost});
}

// ---------------------------------------------------------------------------

Outcome ac1_case_study(const std::string& cli, const fs::path& work) {
  const fs::path dir = work / "ac1";
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int solve_code = run_command(shell_quote(cli) + " solve casestudy --method drp --radius 1e-3 --out " +
                                     shell_quote(dir.string()) + " > " + shell_quote((dir / "solve.log").string()) +
                                     " 2>&1");
  const int eval_code = run_command(shell_quote(cli) + " evaluate casestudy " +
                                    shell_quote((dir / "drp_solution.txt").string()) + " --trials 1000 --out " +
                                    shell_quote(dir.string()) + " > " + shell_quote((dir / "evaluate.log").string()) +
                                    " 2>&1");
  const double elapsed = seconds_since(t0);
  if (solve_code != 0 || eval_code != 0) {
    return {false, fmt("solve exit %d, evaluate exit %d (logs in %s)", solve_code, eval_code, dir.c_str())};
  }
  const auto summary = read_key_values(dir / "drp_summary.txt");
  const auto eval = read_key_values(dir / "drp_evaluation.txt");
  if (!eval.count("satisfaction_rate") || !summary.count("j_hat")) return {false, "missing output fields"};
  const double rate = std::stod(eval.at("satisfaction_rate"));
  g_dual_records.push_back({"case study (cli)", std::stod(summary.at("j_hat")),
                            std::stod(summary.at("sample_average_cost"))});
  const bool pass = rate >= 0.9 && elapsed <= 600.0;
  return {pass, fmt("rate=%.4f (>= 0.90) status=%s time=%.1fs (<= 600s)", rate, summary.at("status").c_str(),
                    elapsed)};
}

Outcome ac2_conservatism() {
  const Scenario scn = load_scenario(kBuiltinCaseStudy);
  const auto ecp_samples = sample(scn.model, scn.horizon, scn.ecp_samples, scn.seed);
  const auto drp_samples = sample(scn.model, scn.horizon, scn.drp_samples, scn.seed);
  const ProgramSolution ecp = solve_ecp(scn, ecp_samples, scn.solver);
  const ProgramSolution drp = solve_drp(scn, drp_samples, scenario_radius(scn, drp_samples.size()),
                                        default_disturbance_box(scn, drp_samples), scn.solver);
  record("case study drp", drp);
  const auto distances = [&](const ProgramSolution& s) {
    std::vector<double> out;
    for (const Trace& t : sample_trajectories(scn, s.u, 100, scn.seed)) {
      double d = INFINITY;
      for (const auto& x : t) d = std::min(d, 0.75 - x[1]);
      out.push_back(d);
    }
    return median(out);
  };
  const double m_ecp = distances(ecp);
  const double m_drp = distances(drp);
  return {ecp.feasible && drp.feasible && m_drp > m_ecp,
          fmt("median min_k(0.75 - x2): drp(M=%d)=%.6g ecp(M=%d)=%.6g", drp_samples.size(), m_drp,
              ecp_samples.size(), m_ecp)};
}

Outcome ac3_nominal() {
  const Scenario scn = load_scenario(kBuiltinCaseStudy);
  const ProgramSolution nom = solve_nominal(scn, scn.solver);
  Evaluator ev(scn);
  const double rho = ev.robustness(nom.u, Eigen::VectorXd::Zero(scn.disturbance_length()));
  return {nom.feasible && rho > 0.0, fmt("exact robustness at w = 0: %.6g (> 0), J=%.6g", rho, nom.j_hat)};
}

Outcome ac4_lipschitz() {
  const Scenario scn = load_scenario(kBuiltinCaseStudy);
  const double l_phi = tightening(scn).lipschitz.l_phi;
  const Eigen::VectorXd u = solve_nominal(scn, scn.solver).u;
  Evaluator ev(scn);
  std::mt19937_64 rng(404);
  const int len = scn.disturbance_length();
  const auto inside = [&](const Eigen::VectorXd& w) {
    for (const auto& x : ev.rollout(u, w)) {
      if (!scn.region.contains(x)) return false;
    }
    return true;
  };
  int pairs = 0;
  int violations = 0;
  int rejected = 0;
  double worst_ratio = 0.0;
  while (pairs < 100000) {
    // Scales spread over several decades, from the noise level up to region-filling.
    const double scale = std::pow(10.0, testing::uniform(rng, -5.0, -0.5));
    const Eigen::VectorXd w1 = testing::random_vector(rng, len, -scale, scale);
    const double step = scale * std::pow(10.0, testing::uniform(rng, -3.0, 0.5));
    const Eigen::VectorXd w2 = w1 + testing::random_vector(rng, len, -step, step);
    if (!inside(w1) || !inside(w2)) {
      ++rejected;
      continue;
    }
    const double d = std::abs(ev.robustness(u, w1) - ev.robustness(u, w2));
    const double bound = l_phi * (w1 - w2).norm();
    worst_ratio = std::max(worst_ratio, d / bound);
    if (d > bound * (1.0 + 1e-12)) ++violations;
    ++pairs;
  }
  return {violations == 0, fmt("%d pairs, %d violations, max |drho|/(L_phi |dw|)=%.4f, L_phi=%.6g, %d rejected",
                               pairs, violations, worst_ratio, l_phi, rejected)};
}

Outcome ac5_l2_bound() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = testing::uniform_int(rng, 1, 4);
    const int steps = testing::uniform_int(rng, 1, 10);
    const Eigen::MatrixXd a = testing::random_matrix(rng, n, n, 0.8);
    // Oracle: largest eigenvalue of (A^i)^T A^i from a symmetric eigen-solver.
    double total = 0.0;
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < steps; ++i) {
      total += Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p.transpose() * p).eigenvalues().maxCoeff();
      p = a * p;
    }
    const double oracle = std::sqrt(total);
    worst = std::max(worst, std::abs(l2_bound(a, steps) - oracle) / oracle);
  }
  double worst_2x2 = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd m = testing::random_matrix(rng, 2, 2, 3.0);
    const double closed = spectral_norm(m);
    worst_2x2 = std::max(worst_2x2, std::abs(closed - spectral_norm(m, true)) / closed);
  }
  const Eigen::MatrixXd di = (Eigen::MatrixXd(2, 2) << 1, 1, 0, 1).finished();
  worst_2x2 = std::max(worst_2x2, std::abs(l2_bound(di, 15) - l2_bound(di, 15, true)) / l2_bound(di, 15));
  return {worst <= 1e-8 && worst_2x2 <= 1e-10,
          fmt("max rel error vs eigen oracle %.2e (<= 1e-8), 2x2 closed vs iterative %.2e (<= 1e-10)", worst,
              worst_2x2)};
}

Outcome ac6_wasserstein() {
  std::mt19937_64 rng(606);
  const auto measure = [&](int count, int dim) {
    EmpiricalDistribution d;
    for (int i = 0; i < count; ++i) d.samples.push_back(testing::random_vector(rng, dim, -2.0, 2.0));
    return d;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = testing::uniform_int(rng, 1, 4);
    const auto p = measure(testing::uniform_int(rng, 1, 6), dim);
    const auto q = measure(testing::uniform_int(rng, 1, 6), dim);
    const double oracle = testing::oracle_wasserstein_assignment(p.samples, q.samples);
    worst = std::max(worst, std::abs(wasserstein_1(p, q) - oracle) / std::max(1.0, oracle));
  }
  int axiom_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = testing::uniform_int(rng, 1, 4);
    const auto p = measure(testing::uniform_int(rng, 1, 6), dim);
    const auto q = measure(testing::uniform_int(rng, 1, 6), dim);
    const auto s = measure(testing::uniform_int(rng, 1, 6), dim);
    const double pq = wasserstein_1(p, q);
    if (pq < 0.0 || wasserstein_1(p, p) > 1e-12) ++axiom_failures;
    if (std::abs(pq - wasserstein_1(q, p)) > 1e-9) ++axiom_failures;
    if (pq > wasserstein_1(p, s) + wasserstein_1(s, q) + 1e-9) ++axiom_failures;
  }
  return {worst <= 1e-6 && axiom_failures == 0,
          fmt("50 pairs max error vs assignment oracle %.2e (<= 1e-6), %d axiom failures on 100 triples", worst,
              axiom_failures)};
}

Outcome ac7_h_inverse() {
  const auto unit = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  double worst = 0.0;
  for (int i = 1; i <= 99; ++i) {
    const double eps = i / 100.0;
    worst = std::max(worst, std::abs(unit.h(unit.h_inverse(eps)) - eps));
  }
  const double pi_err = std::abs(unit.h_inverse(2.0 * std::exp(-2.0)) - std::numbers::pi);
  return {worst <= 1e-8 && pi_err <= 1e-9,
          fmt("max |h(h^-1(eps)) - eps| = %.2e (<= 1e-8), |h^-1(2e^-2) - pi| = %.2e (<= 1e-9)", worst, pi_err)};
}

Outcome ac8_inner_sup() {
  std::mt19937_64 rng(808);
  const SolverConfig cfg;
  const BoxDomain box = BoxDomain::uniform(2, -2.0, 2.0);
  constexpr int kGrid = 400;
  double worst = 0.0;
  int away = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d c = testing::random_vector(rng, 2, -1.5, 1.5);
    // Either sign of curvature, so maxima fall on edges, corners or in the interior.
    const double a = testing::uniform(rng, -2.0, 2.0);
    const double b = testing::uniform(rng, -2.0, 2.0);
    const auto gfun = [=](double x, double y) {
      return a * ((x - c[0]) * (x - c[0]) + 0.5 * (y - c[1]) * (y - c[1])) + std::sin(2 * x) + b * y;
    };
    const SmoothFunction g = [=](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
      if (grad) *grad = Eigen::Vector2d(2 * a * (w[0] - c[0]) + 2 * std::cos(2 * w[0]), a * (w[1] - c[1]) + b);
      return gfun(w[0], w[1]);
    };
    const Eigen::Vector2d anchor = testing::random_vector(rng, 2, -1.0, 1.0);
    const double lambda = testing::uniform(rng, 0.0, 4.0);
    const auto value = [&](double x, double y) { return gfun(x, y) - lambda * std::hypot(x - anchor[0], y - anchor[1]); };
    // Grid search; the anchor (where the objective has its kink) is an extra candidate.
    double grid = value(anchor[0], anchor[1]);
    for (int i = 0; i < kGrid; ++i) {
      for (int j = 0; j < kGrid; ++j) {
        grid = std::max(grid, value(-2.0 + 4.0 * i / (kGrid - 1), -2.0 + 4.0 * j / (kGrid - 1)));
      }
    }
    const auto r = inner_sup(g, lambda, anchor, box, cfg, {}, static_cast<std::uint64_t>(trial));
    worst = std::max(worst, std::abs(r.value - grid) / std::max(1.0, std::abs(grid)));
    if (r.distance > 1e-9) ++away;
  }
  int anchor_failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // g(w) = a^T w + 0.5 k |w|^2 has box Lipschitz constant |a| + k * sqrt(8).
    const Eigen::Vector2d av = testing::random_vector(rng, 2, -2.0, 2.0);
    const double k = testing::uniform(rng, 0.0, 1.0);
    const SmoothFunction g = [=](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
      if (grad) *grad = av + k * w;
      return av.dot(w) + 0.5 * k * w.squaredNorm();
    };
    const double lip = av.norm() + k * std::sqrt(8.0);
    const Eigen::Vector2d anchor = testing::random_vector(rng, 2, -2.0, 2.0);
    const auto r = inner_sup(g, lip * testing::uniform(rng, 1.01, 3.0), anchor, box, cfg);
    if (!(r.argmax == anchor) || r.value != g(anchor, nullptr)) ++anchor_failures;
  }
  return {worst <= 1e-3 && anchor_failures == 0,
          fmt("max rel error vs %dx%d grid %.2e (<= 1e-3, %d/20 maximizers off the anchor), anchor returned %d/20",
              kGrid, kGrid, worst, away, 20 - anchor_failures)};
}

Outcome ac9_smoothing() {
  std::mt19937_64 rng(909);
  int violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Formula f = to_nnf(testing::random_formula(rng, 2, 3, true));
    const Trace t = testing::random_trace(rng, horizon(f) + 1, 2);
    const auto cfg = SmoothingConfig::uniform(std::pow(10.0, testing::uniform(rng, 0.0, 2.0)));
    if (smooth_robustness(f, t, 0, cfg) > robustness(f, t) + 1e-12) ++violations;
  }
  const Scenario scn = load_scenario(kBuiltinCaseStudy);
  const ProgramSolution nom = solve_nominal(scn, scn.solver);
  Evaluator ev(scn);
  const Trace t = ev.rollout(nom.u, Eigen::VectorXd::Zero(scn.disturbance_length()));
  const double exact = robustness(scn.formula, t);
  std::vector<double> gaps;
  for (double c : {1.0, 10.0, 100.0}) gaps.push_back(exact - smooth_robustness(scn.formula, t, 0, SmoothingConfig::uniform(c)));
  const bool monotone = gaps[0] >= gaps[1] && gaps[1] >= gaps[2] && gaps[2] >= 0.0;
  return {violations == 0 && monotone, fmt("%d violations in 1e4 pairs; gaps at C=1,10,100: %.4g %.4g %.4g",
                                           violations, gaps[0], gaps[1], gaps[2])};
}

Scenario toy_with_seed(std::uint64_t seed) {
  Scenario scn = testing::toy_scenario();
  scn.seed = seed;
  scn.solver.seed = seed;
  scn.radius_rule = RadiusRule{0.05, 1.0, 1.0, 1.0};
  return scn;
}

Outcome ac10_out_of_sample() {
  int passes = 0;
  int solved = 0;
  double radius = 0.0;
  std::string worst;
  double worst_margin = INFINITY;
  for (int i = 0; i < 20; ++i) {
    const Scenario scn = toy_with_seed(1000 + i);
    const auto samples = sample(scn.model, scn.horizon, scn.drp_samples, scn.seed);
    radius = scenario_radius(scn, samples.size());
    const ProgramSolution sol = solve_drp(scn, samples, radius, default_disturbance_box(scn, samples), scn.solver);
    record(fmt("toy seed %d", 1000 + i), sol);
    if (!sol.feasible) continue;
    ++solved;
    const OutOfSampleReport rep = out_of_sample_report(scn, sol, 2000, scn.seed);
    if (rep.pass) ++passes;
    const double margin = sol.j_hat - (rep.cost_mean - 2.0 * rep.cost_stderr);
    if (margin < worst_margin) {
      worst_margin = margin;
      worst = fmt("J_hat=%.4g MC=%.4g+-%.2g", sol.j_hat, rep.cost_mean, rep.cost_stderr);
    }
  }
  return {passes >= 18, fmt("%d/20 pass (>= 18), %d feasible, r=%.4g; tightest: %s", passes, solved, radius,
                            worst.c_str())};
}

Outcome ac11_dual_sanity() {
  const Scenario scn = toy_with_seed(77);
  const auto samples = sample(scn.model, scn.horizon, scn.drp_samples, scn.seed);
  const BoxDomain box = default_disturbance_box(scn, samples);
  std::vector<double> j;
  bool all_feasible = true;
  for (double r : {0.0, 1e-3, 1e-2}) {
    const ProgramSolution sol = solve_drp(scn, samples, r, box, scn.solver);
    all_feasible = all_feasible && sol.feasible;
    record(fmt("toy r=%g", r), sol);
    j.push_back(sol.j_hat);
  }
  int bound_failures = 0;
  std::string first_failure;
  for (const auto& rec : g_dual_records) {
    if (rec.j_hat < rec.sample_average_cost - 1e-6) {
      if (bound_failures++ == 0) first_failure = rec.label;
    }
  }
  const bool monotone = j[0] <= j[1] + 1e-9 && j[1] <= j[2] + 1e-9;
  return {all_feasible && monotone && bound_failures == 0,
          fmt("J_hat >= SAA cost on %zu/%zu feasible solves%s%s; J_hat(r=0,1e-3,1e-2) = %.6g %.6g %.6g",
              g_dual_records.size() - bound_failures, g_dual_records.size(), bound_failures ? ", first failure: " : "",
              first_failure.c_str(), j[0], j[1], j[2])};
}

Outcome ac12_concentration() {
  constexpr int kSteps = 15;
  constexpr int kTrials = 100000;
  const auto model = DisturbanceModel::gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(0.25 * i);
  const double zero = 0.0;
  struct Functional {
    const char* name;
    std::function<double(const Eigen::VectorXd&)> f;
    const double* mean;
  };
  const std::vector<Functional> functionals = {
      {"norm", [](const Eigen::VectorXd& w) { return w.norm(); }, nullptr},
      {"coordinate", [](const Eigen::VectorXd& w) { return w[0]; }, &zero},
      {"average", [](const Eigen::VectorXd& w) { return w.sum() / std::sqrt(static_cast<double>(w.size())); }, &zero},
      {"max", [](const Eigen::VectorXd& w) { return w.maxCoeff(); }, nullptr},
  };
  int failures = 0;
  double min_margin = INFINITY;
  for (std::size_t k = 0; k < functionals.size(); ++k) {
    const auto& fn = functionals[k];
    const ConcentrationCurve c = concentration_check(model, kSteps, fn.f, kTrials, 1200 + k, grid, fn.mean);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double b = std::clamp(c.bound[i], 0.0, 1.0);
      const double slack = 3.0 * std::sqrt(b * (1.0 - b) / kTrials) + 1.0 / kTrials;
      min_margin = std::min(min_margin, c.within[i] - c.bound[i]);
      if (c.within[i] < c.bound[i] - slack) ++failures;
    }
  }
  return {failures == 0, fmt("%zu functionals x %zu t-values, %d below 1-h(t) beyond binomial slack, min margin %.4f",
                             functionals.size(), grid.size(), failures, min_margin)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli;
  std::string workdir = "acceptance_out";
  std::vector<int> only;
  app.add_option("--cli", cli, "stl-dro executable")->required();
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [&] { return ac1_case_study(cli, workdir); }},
      {2, ac2_conservatism},
      {3, ac3_nominal},
      {4, ac4_lipschitz},
      {5, ac5_l2_bound},
      {6, ac6_wasserstein},
      {7, ac7_h_inverse},
      {8, ac8_inner_sup},
      {9, ac9_smoothing},
      {10, ac10_out_of_sample},
      {11, ac11_dual_sanity},
      {12, ac12_concentration},
  };
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("AC%d %s %s [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
