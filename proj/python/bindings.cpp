#include "stldro/errors.hpp"
#include "stldro/lipschitz.hpp"
#include "stldro/probability.hpp"
#include "stldro/programs.hpp"
#include "stldro/scenario_io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

namespace py = pybind11;
using namespace stldro;

namespace {

EmpiricalDistribution to_distribution(const Eigen::MatrixXd& rows) {
  EmpiricalDistribution d;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) d.samples.emplace_back(rows.row(i).transpose());
  return d;
}

py::dict solution_dict(const ProgramSolution& s) {
  py::dict d;
  d["method"] = s.method;
  d["status"] = s.status;
  d["feasible"] = s.feasible;
  d["u"] = s.u;
  d["j_hat"] = s.j_hat;
  d["lambda1"] = s.lambda1;
  d["lambda2"] = s.lambda2;
  d["residual"] = s.residual;
  d["constraint_value"] = s.constraint_value;
  d["sample_average_cost"] = s.sample_average_cost;
  d["tightening"] = s.tightening;
  d["radius"] = s.radius;
  d["nominal_robustness"] = s.nominal_robustness;
  d["samples"] = s.samples;
  return d;
}

ProgramSolution solve(const Scenario& base, const std::string& method, std::optional<int> samples,
                      std::optional<double> radius, std::optional<std::uint64_t> seed) {
  Scenario scn = base;
  if (seed) {
    scn.seed = *seed;
    scn.solver.seed = *seed;
  }
  if (radius) scn.radius = *radius;
  if (method == "nominal") return solve_nominal(scn, scn.solver);
  if (method != "ecp" && method != "drp") throw std::invalid_argument("method must be nominal, ecp or drp");
  const int count = samples.value_or(method == "ecp" ? scn.ecp_samples : scn.drp_samples);
  const EmpiricalDistribution train = sample(scn.model, scn.horizon, count, scn.seed);
  if (method == "ecp") return solve_ecp(scn, train, scn.solver);
  const BoxDomain box = scn.w_box ? *scn.w_box : default_disturbance_box(scn, train);
  return solve_drp(scn, train, scenario_radius(scn, count), box, scn.solver);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chance-constrained STL input synthesis with Wasserstein robustness.";

  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("horizon", &Scenario::horizon)
      .def_readonly("epsilon", &Scenario::epsilon)
      .def_readonly("formula_text", &Scenario::formula_text)
      .def_property_readonly("state_dim", &Scenario::state_dim)
      .def_property_readonly("input_dim", &Scenario::input_dim)
      .def_property_readonly("formula", [](const Scenario& s) { return to_string(s.formula); })
      .def("to_json", [](const Scenario& s) { return scenario_to_json(s).dump(); })
      .def("rollout",
           [](const Scenario& s, const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
             Evaluator ev(s);
             const Trace& t = ev.rollout(u, w);
             Eigen::MatrixXd out(t.size(), s.state_dim());
             for (std::size_t k = 0; k < t.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = t[k].transpose();
             return out;
           },
           py::arg("u"), py::arg("w"))
      .def("robustness", [](const Scenario& s, const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
             return Evaluator(s).robustness(u, w);
           }, py::arg("u"), py::arg("w"))
      .def("smooth_robustness", [](const Scenario& s, const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
             return Evaluator(s).smooth_robustness(u, w);
           }, py::arg("u"), py::arg("w"))
      .def("cost", [](const Scenario& s, const Eigen::VectorXd& u, const Eigen::VectorXd& w) {
             return Evaluator(s).cost(u, w);
           }, py::arg("u"), py::arg("w"));

  m.def("load_scenario", &load_scenario, py::arg("path"),
        "Load a scenario file, or the built-in case study by name.");
  m.def("scenario_from_json",
        [](const std::string& text, const std::string& base_dir) {
          return scenario_from_json(nlohmann::json::parse(text), base_dir);
        },
        py::arg("text"), py::arg("base_dir") = ".");

  m.def("check", [](const Scenario& s) {
    const TighteningReport t = tightening(s);
    py::dict d;
    d["l1"] = t.lipschitz.l1;
    d["l2"] = t.lipschitz.l2;
    d["l_phi"] = t.lipschitz.l_phi;
    d["predicate_constants"] = t.lipschitz.predicate_constants;
    d["h_inverse"] = t.h_inverse;
    d["tightening"] = t.value;
    return d;
  }, py::arg("scenario"), "Lipschitz constants and concentration tightening.");

  m.def("solve",
        [](const Scenario& s, const std::string& method, std::optional<int> samples,
           std::optional<double> radius, std::optional<std::uint64_t> seed) {
          ProgramSolution sol;
          {
            py::gil_scoped_release release;
            sol = solve(s, method, samples, radius, seed);
          }
          return solution_dict(sol);
        },
        py::arg("scenario"), py::arg("method"), py::arg("samples") = py::none(),
        py::arg("radius") = py::none(), py::arg("seed") = py::none());

  m.def("satisfaction_rate",
        [](const Scenario& s, const Eigen::VectorXd& u, int trials, std::uint64_t seed) {
          const RateEstimate r = empirical_ccp_rate(s, u, trials, seed);
          return py::make_tuple(r.rate, r.stderr);
        },
        py::arg("scenario"), py::arg("u"), py::arg("trials"), py::arg("seed"));

  m.def("l2_bound", [](const Eigen::MatrixXd& a, int n) { return l2_bound(a, n); }, py::arg("a"),
        py::arg("horizon"));
  m.def("spectral_norm", [](const Eigen::MatrixXd& a) { return spectral_norm(a); }, py::arg("m"));
  m.def("h_gaussian", &h_gaussian, py::arg("t"));
  m.def("h_gaussian_inverse", [](double eps) { return invert_decreasing(h_gaussian, eps); }, py::arg("eps"));
  m.def("wasserstein_1",
        [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
          return wasserstein_1(to_distribution(p), to_distribution(q));
        },
        py::arg("p"), py::arg("q"), "W1 between uniform measures on the rows of p and q.");
  m.def("radius_from_confidence",
        [](double beta, int count, double tail_a, int steps, double c1, double c2, double s) {
          return radius_from_confidence(beta, count, tail_a, steps, c1, c2, s);
        },
        py::arg("beta"), py::arg("count"), py::arg("tail_a"), py::arg("steps"), py::arg("c1"),
        py::arg("c2"), py::arg("s"));
}
