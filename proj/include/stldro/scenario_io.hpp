#pragma once

#include "stldro/programs.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace stldro {

/// Name under which the built-in case study is available wherever a scenario path
/// is accepted.
inline constexpr const char* kBuiltinCaseStudy = "casestudy";

/// Double-integrator reach-avoid case study as a scenario document.
nlohmann::json builtin_casestudy_json();

/// Builds and validates a scenario. Relative file references (empirical samples) are
/// resolved against `base_dir`. Throws ScenarioError naming the offending field.
Scenario scenario_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");

/// Loads a scenario file, or the built-in case study when `path` equals
/// kBuiltinCaseStudy and no such file exists.
Scenario load_scenario(const std::string& path);
nlohmann::json load_scenario_json(const std::string& path, std::string* base_dir = nullptr);

/// Fully resolved document (every default filled in); scenario_from_json of the result
/// reproduces the scenario.
nlohmann::json scenario_to_json(const Scenario& scn);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
std::string format_vector(const Eigen::VectorXd& v);
Eigen::VectorXd parse_vector(const std::string& text);

/// Flat `key = value` document; the resolved configuration is embedded on a
/// `config = {...}` line.
std::string solution_to_text(const ProgramSolution& sol, const nlohmann::json& config);

struct SolutionDocument {
  ProgramSolution solution;
  nlohmann::json config;
  std::map<std::string, std::string> fields;
};
SolutionDocument parse_solution_text(const std::string& text);

/// Trajectory CSV: `#` comment lines (including the config), then header
/// `k,x1..xn,u1..um` with inputs left blank at k = N.
void write_trajectory_csv(std::ostream& out, const Trace& trace, const Eigen::VectorXd& u,
                          int input_dim, const std::map<std::string, std::string>& comments);

struct TrajectoryData {
  Trace states;
  std::vector<Eigen::VectorXd> inputs;
  std::map<std::string, std::string> comments;
};
/// Throws std::invalid_argument with a line number on malformed input.
TrajectoryData read_trajectory_csv(std::istream& in);

}  // namespace stldro
