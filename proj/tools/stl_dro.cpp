#include "stldro/plot.hpp"
#include "stldro/programs.hpp"
#include "stldro/scenario_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stldro;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

/// Thrown for user-facing failures that are not library errors.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string default_out_dir() {
  const char* env = std::getenv("STL_DRO_OUT");
  return env && *env ? env : "stl-dro-out";
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
  if (!out) throw CliError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw CliError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

class KeyValues {
 public:
  void add(const std::string& key, const std::string& value) { out_ << key << " = " << value << '\n'; }
  void add(const std::string& key, double value) { add(key, format_double(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
  void comment(const std::string& text) { out_ << "# " << text << '\n'; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::string region_text(const Region& r) {
  return "[" + format_vector(r.lower) + "] .. [" + format_vector(r.upper) + "]";
}

void print_ast(std::ostream& out, const Formula& f, int depth) {
  const std::string pad(2 * depth, ' ');
  const auto interval = [&] { return "[" + std::to_string(f.lo()) + "," + std::to_string(f.hi()) + "]"; };
  switch (f.op()) {
    case Formula::Op::True: out << pad << "true\n"; return;
    case Formula::Op::Pred: {
      const Predicate& p = f.predicate();
      out << pad << "pred " << (p.name.empty() ? to_string(f) : p.name) << '\n';
      return;
    }
    case Formula::Op::Not: out << pad << "not\n"; print_ast(out, f.lhs(), depth + 1); return;
    case Formula::Op::And: out << pad << "and\n"; break;
    case Formula::Op::Or: out << pad << "or\n"; break;
    case Formula::Op::Until: out << pad << "until " << interval() << '\n'; break;
    case Formula::Op::Eventually: out << pad << "eventually " << interval() << '\n'; print_ast(out, f.lhs(), depth + 1); return;
    case Formula::Op::Always: out << pad << "always " << interval() << '\n'; print_ast(out, f.lhs(), depth + 1); return;
  }
  print_ast(out, f.lhs(), depth + 1);
  print_ast(out, f.rhs(), depth + 1);
}

// ---------------------------------------------------------------------------
// check

int cmd_check(const std::string& path) {
  const Scenario scn = load_scenario(path);
  const TighteningReport t = tightening(scn);
  KeyValues kv;
  kv.add("scenario", scn.name);
  kv.add("formula", scn.formula_text);
  kv.add("formula_nnf", to_string(scn.formula));
  kv.add("horizon", scn.horizon);
  kv.add("formula_horizon", horizon(scn.formula));
  kv.add("region", region_text(scn.region));
  kv.add("region_source", std::string(scn.region_from_hull ? "trajectory_hull" : "declared"));
  const auto preds = predicates_of(scn.formula);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string name = preds[i].name.empty() ? "leaf" + std::to_string(i) : preds[i].name;
    kv.add("lipschitz." + std::to_string(i) + "." + name, t.lipschitz.predicate_constants[i]);
  }
  kv.add("l1", t.lipschitz.l1);
  kv.add("l2", t.lipschitz.l2);
  kv.add("l_phi", t.lipschitz.l_phi);
  kv.add("epsilon", scn.epsilon);
  kv.add("h_inverse", t.h_inverse);
  kv.add("tightening", t.value);
  kv.add("robustness_level", scn.r0);
  if (scn.radius) kv.add("radius", *scn.radius);
  if (scn.radius_rule) kv.add("radius_rule_drp", scenario_radius(scn, scn.drp_samples));
  std::cout << kv.str() << "ast:\n";
  print_ast(std::cout, scn.formula, 1);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// solve

struct RunOptions {
  std::string method;
  std::optional<int> samples;
  std::optional<double> radius;
  std::optional<std::uint64_t> seed;
};

json run_block(const RunOptions& o) {
  json run = {{"method", o.method}};
  run["samples"] = o.samples ? json(*o.samples) : json(nullptr);
  run["radius"] = o.radius ? json(*o.radius) : json(nullptr);
  run["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  return run;
}

RunOptions run_from_block(const json& run) {
  RunOptions o;
  o.method = run.at("method").get<std::string>();
  if (!run.at("samples").is_null()) o.samples = run.at("samples").get<int>();
  if (!run.at("radius").is_null()) o.radius = run.at("radius").get<double>();
  if (!run.at("seed").is_null()) o.seed = run.at("seed").get<std::uint64_t>();
  return o;
}

/// Command-line overrides are folded into the scenario so the embedded configuration
/// is complete on its own.
void apply_overrides(Scenario& scn, const RunOptions& o) {
  if (o.method != "nominal" && o.method != "ecp" && o.method != "drp") {
    throw CliError("unknown method '" + o.method + "' (expected nominal|ecp|drp)");
  }
  if (o.seed) {
    scn.seed = *o.seed;
    scn.solver.seed = *o.seed;
  }
  if (o.samples) {
    if (*o.samples < 1) throw CliError("--samples must be positive");
    (o.method == "ecp" ? scn.ecp_samples : scn.drp_samples) = *o.samples;
  }
  if (o.radius) {
    if (!(*o.radius >= 0.0)) throw CliError("--radius must be non-negative");
    scn.radius = *o.radius;
  }
  scn.validate();
}

EmpiricalDistribution training_samples(const Scenario& scn, const std::string& method) {
  if (method == "nominal") {
    EmpiricalDistribution zero;
    zero.samples.push_back(Eigen::VectorXd::Zero(scn.disturbance_length()));
    return zero;
  }
  const int count = method == "ecp" ? scn.ecp_samples : scn.drp_samples;
  return sample(scn.model, scn.horizon, count, scn.seed);
}

ProgramSolution run_method(const Scenario& scn, const std::string& method) {
  if (method == "nominal") return solve_nominal(scn, scn.solver);
  const EmpiricalDistribution samples = training_samples(scn, method);
  if (method == "ecp") return solve_ecp(scn, samples, scn.solver);
  const double r = scenario_radius(scn, samples.size());
  const BoxDomain box = scn.w_box ? *scn.w_box : default_disturbance_box(scn, samples);
  return solve_drp(scn, samples, r, box, scn.solver);
}

std::map<std::string, std::string> csv_comments(const json& config, const std::string& method,
                                                const std::string& realization) {
  return {{"config", config.dump()}, {"method", method}, {"realization", realization}};
}

void write_trajectory(const fs::path& path, const Scenario& scn, const Eigen::VectorXd& u,
                      const Eigen::VectorXd& w, const std::map<std::string, std::string>& comments) {
  Evaluator ev(scn);
  const Trace trace = ev.rollout(u, w);
  std::ostringstream out;
  write_trajectory_csv(out, trace, u, scn.input_dim(), comments);
  write_file(path, out.str());
}

std::string summary_text(const ProgramSolution& s, const json& config) {
  KeyValues kv;
  kv.comment("stl-dro solve summary");
  kv.add("method", s.method);
  kv.add("status", s.status);
  kv.add("feasible", s.feasible);
  kv.add("j_hat", s.j_hat);
  kv.add("sample_average_cost", s.sample_average_cost);
  kv.add("lambda1", s.lambda1);
  kv.add("lambda2", s.lambda2);
  kv.add("residual", s.residual);
  kv.add("constraint_value", s.constraint_value);
  kv.add("tightening", s.tightening);
  kv.add("l_phi", s.l_phi);
  kv.add("h_inverse", s.h_inverse);
  kv.add("radius", s.radius);
  kv.add("nominal_robustness", s.nominal_robustness);
  if (!s.feasible) kv.add("best_reachable", s.best_reachable);
  kv.add("inner_converged", s.inner_converged);
  kv.add("samples", s.samples);
  kv.add("seed", std::to_string(s.seed));
  kv.add("outer_iterations", s.outer_iterations);
  kv.add("inner_iterations", s.inner_iterations);
  kv.add("config", config.dump());
  return kv.str();
}

int cmd_solve(const std::string& path, const RunOptions& opts, const std::string& out_dir) {
  Scenario scn = load_scenario(path);
  apply_overrides(scn, opts);
  const json config = {{"scenario", scenario_to_json(scn)}, {"run", run_block(opts)}};
  const ProgramSolution sol = run_method(scn, opts.method);

  const fs::path dir = prepare_dir(out_dir);
  const std::string stem = opts.method;
  write_file(dir / (stem + "_solution.txt"), solution_to_text(sol, config));
  const std::string summary = summary_text(sol, config);
  write_file(dir / (stem + "_summary.txt"), summary);
  const std::string csv = stem + "_nominal.csv";
  write_trajectory(dir / csv, scn, sol.u, Eigen::VectorXd::Zero(scn.disturbance_length()),
                   csv_comments(config, opts.method, "nominal"));
  write_file(dir / (stem + "_trajectories.index"), csv + "\n");

  std::cout << summary;
  std::cout << "# wrote " << (dir / (stem + "_solution.txt")).string() << '\n';
  return sol.feasible ? kExitOk : kExitInfeasible;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& scenario_path, const std::string& solution_path, int trials,
                 std::optional<std::uint64_t> seed, const std::string& out_dir, int trajectories) {
  if (trials < 0) throw CliError("--trials must be >= 0");
  if (trajectories < 0) throw CliError("--trajectories must be >= 0");
  const SolutionDocument doc = parse_solution_text(read_file(solution_path));
  if (!doc.config.contains("scenario") || !doc.config.contains("run")) {
    throw CliError("solution file has no embedded configuration");
  }
  const RunOptions opts = run_from_block(doc.config.at("run"));
  Scenario scn = load_scenario(scenario_path);
  apply_overrides(scn, opts);
  if (scenario_to_json(scn) != doc.config.at("scenario")) {
    throw CliError("solution was produced for a different scenario configuration than " + scenario_path);
  }
  const ProgramSolution& sol = doc.solution;
  if (sol.method != opts.method) throw CliError("solution method does not match its configuration");

  const Certificate cert = certify(scn, sol, training_samples(scn, opts.method), scn.solver);
  const std::uint64_t mc_seed = seed ? *seed : scn.seed;

  KeyValues kv;
  kv.comment("stl-dro evaluation");
  kv.add("method", sol.method);
  kv.add("solution", solution_path);
  kv.add("bound_j_hat", sol.j_hat);
  kv.add("j_hat_recomputed", cert.j_hat);
  kv.add("residual", sol.residual);
  kv.add("residual_recomputed", cert.residual);
  kv.add("certificate_reproduced", cert.j_hat == sol.j_hat && cert.residual == sol.residual);
  kv.add("feasible", sol.feasible);
  kv.add("trials", trials);
  if (trials > 0) {
    const OutOfSampleReport rep = out_of_sample_report(scn, sol, trials, mc_seed);
    kv.add("seed", std::to_string(mc_seed));
    kv.add("satisfaction_rate", rep.satisfaction.rate);
    kv.add("satisfaction_stderr", rep.satisfaction.stderr);
    kv.add("satisfaction_target", 1.0 - scn.epsilon);
    kv.add("cost_mean", rep.cost_mean);
    kv.add("cost_stderr", rep.cost_stderr);
    kv.add("robustness_median", rep.robustness_median);
    kv.add("bound_pass", rep.pass);
  }
  kv.add("config", doc.config.dump());

  const fs::path dir = prepare_dir(out_dir);
  const std::string stem = sol.method + "_eval";
  if (trajectories > 0) {
    const std::vector<Trace> traces = sample_trajectories(scn, sol.u, trajectories, mc_seed);
    std::string index;
    char name[64];
    for (int i = 0; i < trajectories; ++i) {
      std::snprintf(name, sizeof name, "%s_%04d.csv", stem.c_str(), i);
      std::ostringstream out;
      write_trajectory_csv(out, traces[i], sol.u, scn.input_dim(),
                           csv_comments(doc.config, sol.method, std::to_string(i)));
      write_file(dir / name, out.str());
      index += std::string(name) + "\n";
    }
    write_file(dir / (stem + ".index"), index);
  }
  write_file(dir / (sol.method + "_evaluation.txt"), kv.str());
  std::cout << kv.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (p.extension() != ".index") {
      files.push_back(p);
      continue;
    }
    std::istringstream lines(read_file(p));
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const fs::path entry(line);
      files.push_back(entry.is_absolute() ? entry : p.parent_path() / entry);
    }
  }
  return files;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out, const PhaseOverlay& overlay) {
  std::vector<Trace> traces;
  for (const auto& file : expand_inputs(inputs)) {
    std::istringstream in(read_file(file));
    try {
      traces.push_back(read_trajectory_csv(in).states);
    } catch (const std::invalid_argument& e) {
      throw CliError(file.string() + ": " + e.what());
    }
  }
  const fs::path path(out);
  if (path.has_parent_path()) prepare_dir(path.parent_path().string());
  write_file(path, phase_plot_svg(traces, overlay));
  std::cout << "wrote " << path.string() << " (" << traces.size() << " trajectories)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained STL input synthesis with Wasserstein robustness"};
  app.require_subcommand(1);

  std::string scenario;
  auto* check = app.add_subcommand("check", "Parse a scenario and report Lipschitz constants and tightening");
  check->add_option("scenario", scenario, "Scenario file or 'casestudy'")->required();

  RunOptions run;
  std::string out_dir = default_out_dir();
  auto* solve = app.add_subcommand("solve", "Synthesize an input sequence");
  solve->add_option("scenario", scenario, "Scenario file or 'casestudy'")->required();
  solve->add_option("--method", run.method, "nominal | ecp | drp")
      ->required()
      ->check(CLI::IsMember({"nominal", "ecp", "drp"}));
  solve->add_option("--samples", run.samples, "Number of training samples M");
  solve->add_option("--radius", run.radius, "Wasserstein radius (overrides the scenario)");
  solve->add_option("--seed", run.seed, "Seed for samples and solver starts");
  solve->add_option("--out", out_dir, "Output directory (default $STL_DRO_OUT or ./stl-dro-out)");

  std::string solution;
  int trials = 1000;
  int trajectories = 0;
  std::optional<std::uint64_t> eval_seed;
  auto* evaluate = app.add_subcommand("evaluate", "Recompute the certificate and run Monte-Carlo checks");
  evaluate->add_option("scenario", scenario, "Scenario file or 'casestudy'")->required();
  evaluate->add_option("solution", solution, "Solution file written by solve")->required();
  evaluate->add_option("--trials", trials, "Monte-Carlo draws (0 skips them)");
  evaluate->add_option("--seed", eval_seed, "Seed for the evaluation draws (default: scenario seed)");
  evaluate->add_option("--out", out_dir, "Output directory (default $STL_DRO_OUT or ./stl-dro-out)");
  evaluate->add_option("--trajectories", trajectories, "Write this many sampled trajectory CSVs");

  std::vector<std::string> inputs;
  std::string svg_out = "phase.svg";
  PhaseOverlay overlay;
  bool no_line = false;
  bool no_ellipse = false;
  std::vector<double> ellipse_diag;
  auto* plot = app.add_subcommand("plot", "Phase-plane SVG of trajectory CSVs");
  plot->add_option("inputs", inputs, "Trajectory CSVs or .index files");
  plot->add_option("--out", svg_out, "Output SVG path");
  plot->add_option("--level", overlay.safety_level, "Safety line x2 = level");
  plot->add_option("--ellipse-diag", ellipse_diag, "Diagonal of T for the target x^T T x = 1")->expected(2);
  plot->add_flag("--no-line", no_line, "Omit the safety line");
  plot->add_flag("--no-ellipse", no_ellipse, "Omit the target ellipse");
  plot->add_option("--title", overlay.title, "Plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*check) return cmd_check(scenario);
    if (*solve) return cmd_solve(scenario, run, out_dir);
    if (*evaluate) return cmd_evaluate(scenario, solution, trials, eval_seed, out_dir, trajectories);
    if (*plot) {
      overlay.safety_line = !no_line;
      overlay.ellipse = !no_ellipse;
      if (!ellipse_diag.empty()) overlay.ellipse_weight = Eigen::Vector2d(ellipse_diag[0], ellipse_diag[1]).asDiagonal();
      return cmd_plot(inputs, svg_out, overlay);
    }
  } catch (const std::exception& e) {
    std::cerr << "stl-dro: " << e.what() << '\n';
  }
  return kExitError;
}
