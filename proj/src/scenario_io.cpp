#include "stldro/scenario_io.hpp"

#include "stldro/errors.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace stldro {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ScenarioError(path, message);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) fail(path.empty() ? key : path + "." + key, "missing field");
  return obj.at(key);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double to_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

int to_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<int>();
}

Eigen::VectorXd to_vector(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

/// Array of rows, or a scalar s meaning s * I (when `identity_dim` > 0).
Eigen::MatrixXd to_matrix(const json& v, const std::string& path, int identity_dim = 0) {
  if (v.is_number() && identity_dim > 0) {
    return to_number(v, path) * Eigen::MatrixXd::Identity(identity_dim, identity_dim);
  }
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  if (!v[0].is_array()) fail(path, "expected an array of rows");
  const std::size_t cols = v[0].size();
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != cols) fail(row_path, "rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = to_number(v[i][j], row_path + "[" + std::to_string(j) + "]");
  }
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(join(path, key), "unknown field");
  }
}

Predicate predicate_from_json(const std::string& name, const json& v, int n, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
  const std::string type = require(v, "type", path).is_string() ? v.at("type").get<std::string>() : "";
  try {
    if (type == "affine") {
      check_keys(v, {"type", "c", "d"}, path);
      Eigen::VectorXd c = to_vector(require(v, "c", path), path + ".c");
      if (c.size() != n) fail(path + ".c", "must have " + std::to_string(n) + " entries");
      return Predicate::affine(std::move(c), to_number(require(v, "d", path), path + ".d"), name);
    }
    if (type == "quadratic_cap") {
      check_keys(v, {"type", "center", "weight", "level"}, path);
      Eigen::VectorXd p = to_vector(require(v, "center", path), path + ".center");
      if (p.size() != n) fail(path + ".center", "must have " + std::to_string(n) + " entries");
      return Predicate::quadratic_cap(std::move(p), to_matrix(require(v, "weight", path), path + ".weight", n),
                                      to_number(require(v, "level", path), path + ".level"), name);
    }
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  fail(path + ".type", "must be \"affine\" or \"quadratic_cap\"");
}

json predicate_to_json(const Predicate& p) {
  if (p.kind == Predicate::Kind::Affine) return {{"type", "affine"}, {"c", vector_json(p.vector)}, {"d", p.level}};
  if (p.kind == Predicate::Kind::QuadraticCap) {
    return {{"type", "quadratic_cap"}, {"center", vector_json(p.vector)}, {"weight", matrix_json(p.weight)},
            {"level", p.level}};
  }
  throw std::invalid_argument("predicate registry entries must be affine or quadratic caps");
}

DisturbanceModel disturbance_from_json(const json& v, int n, const std::string& base_dir) {
  const std::string path = "disturbance";
  if (!v.is_object()) fail(path, "expected an object");
  const json& t = require(v, "type", path);
  const std::string type = t.is_string() ? t.get<std::string>() : "";
  DisturbanceModel model;
  try {
    if (type == "gaussian") {
      check_keys(v, {"type", "mean", "cov", "tail_a", "tail_c"}, path);
      Eigen::VectorXd mean = v.contains("mean") ? to_vector(v.at("mean"), path + ".mean") : Eigen::VectorXd::Zero(n);
      model = DisturbanceModel::gaussian(std::move(mean), to_matrix(require(v, "cov", path), path + ".cov", n));
    } else if (type == "uniform") {
      check_keys(v, {"type", "lower", "upper", "tail_a", "tail_c"}, path);
      model = DisturbanceModel::uniform_box(to_vector(require(v, "lower", path), path + ".lower"),
                                            to_vector(require(v, "upper", path), path + ".upper"));
    } else if (type == "empirical") {
      check_keys(v, {"type", "file", "scale", "tail_a", "tail_c"}, path);
      const json& f = require(v, "file", path);
      if (!f.is_string()) fail(path + ".file", "expected a path");
      std::filesystem::path file = f.get<std::string>();
      if (file.is_relative()) file = std::filesystem::path(base_dir) / file;
      std::ifstream in(file);
      if (!in) fail(path + ".file", "cannot open '" + file.string() + "'");
      int dim = 0;
      EmpiricalDistribution d;
      try {
        d = read_samples_csv(in, &dim);
      } catch (const std::exception& e) {
        fail(path + ".file", e.what());
      }
      model = DisturbanceModel::empirical(std::move(d.samples), dim,
                                          to_number(require(v, "scale", path), path + ".scale"),
                                          std::filesystem::absolute(file).lexically_normal().string());
    } else {
      fail(path + ".type", "must be \"gaussian\", \"uniform\" or \"empirical\"");
    }
    if (v.contains("tail_a") || v.contains("tail_c")) {
      model.set_tail(v.contains("tail_a") ? to_number(v.at("tail_a"), path + ".tail_a") : 2.0,
                     v.contains("tail_c") ? to_number(v.at("tail_c"), path + ".tail_c") : 1.0);
    }
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  if (model.dim() != n) fail(path, "dimension must equal the state dimension " + std::to_string(n));
  return model;
}

json disturbance_to_json(const DisturbanceModel& m) {
  json out;
  switch (m.kind()) {
    case DisturbanceModel::Kind::Gaussian:
      out = {{"type", "gaussian"}, {"mean", vector_json(m.mean())}, {"cov", matrix_json(m.covariance())}};
      break;
    case DisturbanceModel::Kind::UniformBox:
      out = {{"type", "uniform"}, {"lower", vector_json(m.lower())}, {"upper", vector_json(m.upper())}};
      break;
    case DisturbanceModel::Kind::Empirical:
      out = {{"type", "empirical"}, {"file", m.source()}, {"scale", m.scale()}};
      break;
  }
  out["tail_a"] = m.tail_a();
  out["tail_c"] = m.tail_c();
  return out;
}

SmoothingConfig smoothing_from_json(const json& v) {
  const std::string path = "smoothing";
  if (!v.is_object()) fail(path, "expected an object");
  check_keys(v, {"uniform", "and", "or", "eventually", "always", "until", "sites"}, path);
  SmoothingConfig cfg;
  if (v.contains("uniform")) cfg = SmoothingConfig::uniform(to_number(v.at("uniform"), path + ".uniform"));
  if (v.contains("and")) cfg.and_c = to_number(v.at("and"), path + ".and");
  if (v.contains("or")) cfg.or_c = to_number(v.at("or"), path + ".or");
  if (v.contains("eventually")) cfg.eventually_c = to_number(v.at("eventually"), path + ".eventually");
  if (v.contains("always")) cfg.always_c = to_number(v.at("always"), path + ".always");
  if (v.contains("until")) cfg.until_c = to_number(v.at("until"), path + ".until");
  if (v.contains("sites")) {
    const json& sites = v.at("sites");
    if (!sites.is_object()) fail(path + ".sites", "expected an object mapping site index to constant");
    for (const auto& [key, value] : sites.items()) {
      std::size_t used = 0;
      int site = -1;
      try {
        site = std::stoi(key, &used);
      } catch (const std::exception&) {
      }
      if (site < 0 || used != key.size()) fail(path + ".sites." + key, "site keys must be non-negative integers");
      cfg.sites[site] = to_number(value, path + ".sites." + key);
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return cfg;
}

json smoothing_to_json(const SmoothingConfig& cfg) {
  json sites = json::object();
  for (const auto& [site, c] : cfg.sites) sites[std::to_string(site)] = c;
  return {{"and", cfg.and_c}, {"or", cfg.or_c},         {"eventually", cfg.eventually_c},
          {"always", cfg.always_c}, {"until", cfg.until_c}, {"sites", sites}};
}

SolverConfig solver_from_json(const json& v) {
  const std::string path = "solver";
  if (!v.is_object()) fail(path, "expected an object");
  check_keys(v, {"max_outer_iterations", "max_inner_iterations", "sup_iterations", "gradient_tolerance",
                 "constraint_tolerance", "fd_step", "multistart", "outer_starts", "penalty_initial",
                 "penalty_growth", "penalty_max", "seed"},
             path);
  SolverConfig cfg;
  const auto i = [&](const char* key, int& field) {
    if (v.contains(key)) field = to_int(v.at(key), join(path, key));
  };
  const auto d = [&](const char* key, double& field) {
    if (v.contains(key)) field = to_number(v.at(key), join(path, key));
  };
  i("max_outer_iterations", cfg.max_outer_iterations);
  i("max_inner_iterations", cfg.max_inner_iterations);
  i("sup_iterations", cfg.sup_iterations);
  d("gradient_tolerance", cfg.gradient_tolerance);
  d("constraint_tolerance", cfg.constraint_tolerance);
  d("fd_step", cfg.fd_step);
  i("multistart", cfg.multistart);
  i("outer_starts", cfg.outer_starts);
  d("penalty_initial", cfg.penalty_initial);
  d("penalty_growth", cfg.penalty_growth);
  d("penalty_max", cfg.penalty_max);
  if (v.contains("seed")) {
    if (!v.at("seed").is_number_unsigned()) fail("solver.seed", "expected a non-negative integer");
    cfg.seed = v.at("seed").get<std::uint64_t>();
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return cfg;
}

json solver_to_json(const SolverConfig& c) {
  return {{"max_outer_iterations", c.max_outer_iterations},
          {"max_inner_iterations", c.max_inner_iterations},
          {"sup_iterations", c.sup_iterations},
          {"gradient_tolerance", c.gradient_tolerance},
          {"constraint_tolerance", c.constraint_tolerance},
          {"fd_step", c.fd_step},
          {"multistart", c.multistart},
          {"outer_starts", c.outer_starts},
          {"penalty_initial", c.penalty_initial},
          {"penalty_growth", c.penalty_growth},
          {"penalty_max", c.penalty_max},
          {"seed", c.seed}};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> bounds_from_json(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object with lower and upper");
  check_keys(v, {"lower", "upper"}, path);
  return {to_vector(require(v, "lower", path), path + ".lower"), to_vector(require(v, "upper", path), path + ".upper")};
}

}  // namespace

json builtin_casestudy_json() {
  return json::parse(R"json({
    "name": "casestudy",
    "system": {"A": [[1, 1], [0, 1]], "B": [[0.5], [1]]},
    "x0": [-8, 0],
    "horizon": 15,
    "predicates": {
      "p1": {"type": "quadratic_cap", "center": [0, 0], "weight": [[0.25, 0], [0, 0.04]], "level": 1},
      "p2": {"type": "affine", "c": [0, -1], "d": 0.75}
    },
    "formula": "(F[0,15] p1) & (G[0,15] p2)",
    "cost": {"Q": 10, "Q_f": 10, "R": 1},
    "disturbance": {"type": "gaussian", "mean": [0, 0], "cov": [[1e-8, 0], [0, 1e-8]]},
    "epsilon": 0.1,
    "robustness_level": 0,
    "radius": 0.001,
    "smoothing": {"always": 100, "eventually": 10, "and": 10},
    "region": {"lower": [-10, -10], "upper": [10, 10]},
    "input_box": {"lower": [-1], "upper": [1]},
    "samples": {"drp": 20, "ecp": 200},
    "seed": 2024
  })json");
}

Scenario scenario_from_json(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) fail("(root)", "scenario must be a JSON object");
  check_keys(doc, {"name", "system", "x0", "horizon", "predicates", "formula", "cost", "disturbance", "epsilon",
                   "robustness_level", "radius", "radius_rule", "smoothing", "region", "input_box", "samples",
                   "seed", "solver", "disturbance_box", "disturbance_box_sigmas"},
             "");
  Scenario scn;
  if (doc.contains("name")) {
    if (!doc.at("name").is_string()) fail("name", "expected a string");
    scn.name = doc.at("name").get<std::string>();
  }

  const json& system = require(doc, "system", "");
  check_keys(system, {"A", "B"}, "system");
  try {
    scn.sys = LinearSystem(to_matrix(require(system, "A", "system"), "system.A"),
                           to_matrix(require(system, "B", "system"), "system.B"));
  } catch (const std::invalid_argument& e) {
    fail("system", e.what());
  }
  const int n = scn.state_dim();
  const int m = scn.input_dim();

  scn.x0 = to_vector(require(doc, "x0", ""), "x0");
  scn.horizon = to_int(require(doc, "horizon", ""), "horizon");
  if (scn.horizon < 1) fail("horizon", "must be at least 1");

  if (doc.contains("predicates")) {
    const json& preds = doc.at("predicates");
    if (!preds.is_object()) fail("predicates", "expected an object keyed by predicate name");
    for (const auto& [name, value] : preds.items()) {
      bool valid = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
      for (char ch : name) valid = valid && (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_');
      if (!valid) fail("predicates." + name, "names must be identifiers");
      scn.predicates.emplace(name, predicate_from_json(name, value, n, "predicates." + name));
    }
  }

  const json& formula = require(doc, "formula", "");
  if (!formula.is_string()) fail("formula", "expected formula text");
  scn.formula_text = formula.get<std::string>();
  try {
    scn.formula = to_nnf(parse(scn.formula_text, scn.predicates, n));
  } catch (const ParseError& e) {
    fail("formula", e.what());
  } catch (const std::invalid_argument& e) {
    fail("formula", e.what());
  }

  const json& cost = require(doc, "cost", "");
  check_keys(cost, {"Q", "Q_f", "R"}, "cost");
  scn.cost.q = to_matrix(require(cost, "Q", "cost"), "cost.Q", n);
  scn.cost.q_final = to_matrix(require(cost, "Q_f", "cost"), "cost.Q_f", n);
  scn.cost.r = to_matrix(require(cost, "R", "cost"), "cost.R", m);

  scn.model = disturbance_from_json(require(doc, "disturbance", ""), n, base_dir);
  if (scn.model.kind() == DisturbanceModel::Kind::Empirical &&
      scn.model.sequences().front().size() != static_cast<Eigen::Index>(scn.horizon) * n) {
    fail("disturbance.file", "samples must hold horizon * n = " + std::to_string(scn.horizon * n) + " values");
  }
  scn.epsilon = to_number(require(doc, "epsilon", ""), "epsilon");
  if (doc.contains("robustness_level")) scn.r0 = to_number(doc.at("robustness_level"), "robustness_level");

  if (doc.contains("radius") && !doc.at("radius").is_null()) scn.radius = to_number(doc.at("radius"), "radius");
  if (doc.contains("radius_rule") && !doc.at("radius_rule").is_null()) {
    const json& rr = doc.at("radius_rule");
    check_keys(rr, {"beta", "c1", "c2", "s"}, "radius_rule");
    RadiusRule rule;
    rule.beta = to_number(require(rr, "beta", "radius_rule"), "radius_rule.beta");
    rule.c1 = to_number(require(rr, "c1", "radius_rule"), "radius_rule.c1");
    rule.c2 = to_number(require(rr, "c2", "radius_rule"), "radius_rule.c2");
    if (rr.contains("s")) rule.s = to_number(rr.at("s"), "radius_rule.s");
    if (!(rule.beta > 0 && rule.beta < 1)) fail("radius_rule.beta", "must lie in (0, 1)");
    if (!(rule.c1 > 0)) fail("radius_rule.c1", "must be positive");
    if (!(rule.c2 > 0)) fail("radius_rule.c2", "must be positive");
    scn.radius_rule = rule;
  }

  if (doc.contains("smoothing")) scn.smoothing = smoothing_from_json(doc.at("smoothing"));
  const auto [ulo, uhi] = bounds_from_json(require(doc, "input_box", ""), "input_box");
  scn.input_lower = ulo;
  scn.input_upper = uhi;

  if (doc.contains("samples")) {
    const json& s = doc.at("samples");
    check_keys(s, {"drp", "ecp"}, "samples");
    if (s.contains("drp")) scn.drp_samples = to_int(s.at("drp"), "samples.drp");
    if (s.contains("ecp")) scn.ecp_samples = to_int(s.at("ecp"), "samples.ecp");
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) fail("seed", "expected a non-negative integer");
    scn.seed = doc.at("seed").get<std::uint64_t>();
  }
  scn.solver.seed = scn.seed;
  if (doc.contains("solver")) {
    json solver = doc.at("solver");
    if (solver.is_object() && !solver.contains("seed")) solver["seed"] = scn.seed;
    scn.solver = solver_from_json(solver);
  }
  if (doc.contains("disturbance_box") && !doc.at("disturbance_box").is_null()) {
    const auto [lo, hi] = bounds_from_json(doc.at("disturbance_box"), "disturbance_box");
    scn.w_box = BoxDomain{lo, hi};
  }
  if (doc.contains("disturbance_box_sigmas")) {
    scn.w_box_sigmas = to_number(doc.at("disturbance_box_sigmas"), "disturbance_box_sigmas");
  }

  if (doc.contains("region") && !doc.at("region").is_null()) {
    const auto [lo, hi] = bounds_from_json(doc.at("region"), "region");
    scn.region = Region{lo, hi};
  } else {
    if (scn.x0.size() != n) fail("x0", "must have " + std::to_string(n) + " entries");
    if (scn.input_lower.size() != m || scn.input_upper.size() != m) {
      fail("input_box", "bounds must have " + std::to_string(m) + " entries");
    }
    scn.region = trajectory_hull_region(scn, 200, 0.1, scn.seed);
    scn.region_from_hull = true;
  }
  scn.validate();
  return scn;
}

json load_scenario_json(const std::string& path, std::string* base_dir) {
  std::ifstream in(path);
  if (!in) {
    if (path == kBuiltinCaseStudy) {
      if (base_dir) *base_dir = ".";
      return builtin_casestudy_json();
    }
    throw std::runtime_error("cannot open scenario '" + path + "'");
  }
  if (base_dir) *base_dir = std::filesystem::path(path).parent_path().string();
  if (base_dir && base_dir->empty()) *base_dir = ".";
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError("(root)", std::string("invalid JSON: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::string base;
  const json doc = load_scenario_json(path, &base);
  return scenario_from_json(doc, base);
}

json scenario_to_json(const Scenario& scn) {
  json preds = json::object();
  for (const auto& [name, p] : scn.predicates) preds[name] = predicate_to_json(p);
  json doc = {
      {"name", scn.name},
      {"system", {{"A", matrix_json(scn.sys.a())}, {"B", matrix_json(scn.sys.b())}}},
      {"x0", vector_json(scn.x0)},
      {"horizon", scn.horizon},
      {"predicates", preds},
      {"formula", scn.formula_text},
      {"cost", {{"Q", matrix_json(scn.cost.q)}, {"Q_f", matrix_json(scn.cost.q_final)}, {"R", matrix_json(scn.cost.r)}}},
      {"disturbance", disturbance_to_json(scn.model)},
      {"epsilon", scn.epsilon},
      {"robustness_level", scn.r0},
      {"radius", scn.radius ? json(*scn.radius) : json(nullptr)},
      {"smoothing", smoothing_to_json(scn.smoothing)},
      {"region", {{"lower", vector_json(scn.region.lower)}, {"upper", vector_json(scn.region.upper)}}},
      {"input_box", {{"lower", vector_json(scn.input_lower)}, {"upper", vector_json(scn.input_upper)}}},
      {"samples", {{"drp", scn.drp_samples}, {"ecp", scn.ecp_samples}}},
      {"seed", scn.seed},
      {"solver", solver_to_json(scn.solver)},
      {"disturbance_box_sigmas", scn.w_box_sigmas},
  };
  if (scn.radius_rule) {
    doc["radius_rule"] = {{"beta", scn.radius_rule->beta}, {"c1", scn.radius_rule->c1},
                          {"c2", scn.radius_rule->c2}, {"s", scn.radius_rule->s}};
  }
  if (scn.w_box) {
    doc["disturbance_box"] = {{"lower", vector_json(scn.w_box->lower)}, {"upper", vector_json(scn.w_box->upper)}};
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Flat key-value documents

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str()) throw std::invalid_argument("bad number '" + cell + "'");
    values.push_back(v);
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string solution_to_text(const ProgramSolution& s, const json& config) {
  std::ostringstream out;
  const auto kv = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  out << "# stl-dro solution\n";
  kv("method", s.method);
  kv("status", s.status);
  kv("feasible", s.feasible ? "true" : "false");
  kv("u", format_vector(s.u));
  kv("j_hat", format_double(s.j_hat));
  kv("lambda1", format_double(s.lambda1));
  kv("lambda2", format_double(s.lambda2));
  kv("y1", format_vector(s.y1));
  kv("y2", format_vector(s.y2));
  kv("radius", format_double(s.radius));
  kv("l_phi", format_double(s.l_phi));
  kv("h_inverse", format_double(s.h_inverse));
  kv("tightening", format_double(s.tightening));
  kv("constraint_value", format_double(s.constraint_value));
  kv("residual", format_double(s.residual));
  kv("sample_average_cost", format_double(s.sample_average_cost));
  kv("nominal_robustness", format_double(s.nominal_robustness));
  kv("best_reachable", format_double(s.best_reachable));
  kv("inner_converged", s.inner_converged ? "true" : "false");
  kv("samples", std::to_string(s.samples));
  kv("seed", std::to_string(s.seed));
  kv("outer_iterations", std::to_string(s.outer_iterations));
  kv("inner_iterations", std::to_string(s.inner_iterations));
  kv("w_box_lower", format_vector(s.w_box.lower));
  kv("w_box_upper", format_vector(s.w_box.upper));
  kv("config", config.dump());
  return out.str();
}

SolutionDocument parse_solution_text(const std::string& text) {
  SolutionDocument doc;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw std::invalid_argument("solution line " + std::to_string(number) + ": expected 'key = value'");
    }
    doc.fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = doc.fields.find(key);
    if (it == doc.fields.end()) throw std::invalid_argument(std::string("solution is missing '") + key + "'");
    return it->second;
  };
  const auto num = [&](const char* key) { return std::strtod(get(key).c_str(), nullptr); };
  ProgramSolution& s = doc.solution;
  s.method = get("method");
  s.status = get("status");
  s.feasible = get("feasible") == "true";
  s.u = parse_vector(get("u"));
  s.j_hat = num("j_hat");
  s.lambda1 = num("lambda1");
  s.lambda2 = num("lambda2");
  s.y1 = parse_vector(get("y1"));
  s.y2 = parse_vector(get("y2"));
  s.radius = num("radius");
  s.l_phi = num("l_phi");
  s.h_inverse = num("h_inverse");
  s.tightening = num("tightening");
  s.constraint_value = num("constraint_value");
  s.residual = num("residual");
  s.sample_average_cost = num("sample_average_cost");
  s.nominal_robustness = num("nominal_robustness");
  s.best_reachable = num("best_reachable");
  s.inner_converged = get("inner_converged") == "true";
  s.samples = std::stoi(get("samples"));
  s.seed = std::stoull(get("seed"));
  s.outer_iterations = std::stoi(get("outer_iterations"));
  s.inner_iterations = std::stoi(get("inner_iterations"));
  s.w_box.lower = parse_vector(get("w_box_lower"));
  s.w_box.upper = parse_vector(get("w_box_upper"));
  try {
    doc.config = json::parse(get("config"));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("solution config is not valid JSON: ") + e.what());
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Trajectory CSV

void write_trajectory_csv(std::ostream& out, const Trace& trace, const Eigen::VectorXd& u,
                          int input_dim, const std::map<std::string, std::string>& comments) {
  if (trace.empty()) throw std::invalid_argument("write_trajectory_csv: empty trajectory");
  const int steps = static_cast<int>(trace.size()) - 1;
  if (u.size() != static_cast<Eigen::Index>(steps) * input_dim) {
    throw DimensionError("write_trajectory_csv: input length does not match the trajectory");
  }
  for (const auto& [key, value] : comments) out << "# " << key << " = " << value << '\n';
  const auto n = trace.front().size();
  out << 'k';
  for (Eigen::Index j = 0; j < n; ++j) out << ",x" << j + 1;
  for (int j = 0; j < input_dim; ++j) out << ",u" << j + 1;
  out << '\n';
  for (int k = 0; k <= steps; ++k) {
    out << k;
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(trace[k][j]);
    for (int j = 0; j < input_dim; ++j) {
      out << ',';
      if (k < steps) out << format_double(u[k * input_dim + j]);
    }
    out << '\n';
  }
}

TrajectoryData read_trajectory_csv(std::istream& in) {
  TrajectoryData data;
  std::string line;
  int number = 0;
  int n = -1;
  int m = 0;
  const auto bad = [&](const std::string& msg) {
    throw std::invalid_argument("trajectory CSV line " + std::to_string(number) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos && line.size() > 2) data.comments[line.substr(2, eq - 2)] = line.substr(eq + 3);
      continue;
    }
    std::vector<std::string> cells;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (line.back() == ',') cells.emplace_back();
    }
    if (n < 0) {
      if (cells.empty() || cells[0] != "k") bad("expected header starting with 'k'");
      n = 0;
      std::size_t i = 1;
      for (; i < cells.size() && cells[i] == "x" + std::to_string(n + 1); ++i) ++n;
      for (; i < cells.size() && cells[i] == "u" + std::to_string(m + 1); ++i) ++m;
      if (n == 0 || i != cells.size()) bad("header must be k,x1..xn,u1..um");
      continue;
    }
    if (static_cast<int>(cells.size()) != 1 + n + m) bad("expected " + std::to_string(1 + n + m) + " columns");
    const auto number_at = [&](std::size_t i) {
      char* end = nullptr;
      const double v = std::strtod(cells[i].c_str(), &end);
      if (cells[i].empty() || *end != '\0' || !std::isfinite(v)) bad("bad number '" + cells[i] + "'");
      return v;
    };
    if (static_cast<int>(number_at(0)) != static_cast<int>(data.states.size())) bad("time index out of sequence");
    Eigen::VectorXd x(n);
    for (int j = 0; j < n; ++j) x[j] = number_at(1 + j);
    data.states.push_back(std::move(x));
    bool blank = true;
    for (int j = 0; j < m; ++j) blank = blank && cells[1 + n + j].empty();
    if (!blank) {
      Eigen::VectorXd u(m);
      for (int j = 0; j < m; ++j) u[j] = number_at(1 + n + j);
      data.inputs.push_back(std::move(u));
    }
  }
  if (n < 0) throw std::invalid_argument("trajectory CSV has no header");
  if (data.states.empty()) throw std::invalid_argument("trajectory CSV has no rows");
  return data;
}

}  // namespace stldro
