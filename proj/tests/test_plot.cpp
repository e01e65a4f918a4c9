#include "stldro/plot.hpp"
#include "stldro/scenario_io.hpp"

#include <doctest.h>

#include <regex>
#include <sstream>

using namespace stldro;

namespace {

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("empty plot still has axes and overlays") {
  const std::string svg = phase_plot_svg({}, PhaseOverlay{});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("id=\"safety\"") != std::string::npos);
  CHECK(svg.find("id=\"target\"") != std::string::npos);
  CHECK(count(svg, "class=\"trajectory\"") == 0);

  PhaseOverlay bare;
  bare.safety_line = false;
  bare.ellipse = false;
  const std::string plain = phase_plot_svg({}, bare);
  CHECK(plain.find("id=\"safety\"") == std::string::npos);
  CHECK(plain.find("id=\"target\"") == std::string::npos);
}

TEST_CASE("trajectories are drawn deterministically") {
  const Scenario scn = load_scenario(kBuiltinCaseStudy);
  const ProgramSolution nominal = solve_nominal(scn, scn.solver);
  const Trace x = rollout(scn.sys, scn.x0, unstack(nominal.u, 1),
                          Sequence(scn.horizon, Eigen::VectorXd::Zero(2)));
  // The nominal trajectory ends inside the target ellipse and below the ceiling.
  const Eigen::Vector2d end = x.back();
  CHECK(end.dot(Eigen::Vector2d(0.25, 0.04).asDiagonal() * end) <= 1.0);
  for (const auto& s : x) CHECK(s[1] <= 0.75 + 1e-9);

  PhaseOverlay overlay;
  overlay.title = "nominal <& test>";
  const std::string a = phase_plot_svg({x, x}, overlay);
  const std::string b = phase_plot_svg({x, x}, overlay);
  CHECK(a == b);
  CHECK(count(a, "class=\"trajectory\"") == 2);
  CHECK(a.find("nominal &lt;&amp; test&gt;") != std::string::npos);
  CHECK_THROWS_AS(phase_plot_svg({Trace{Eigen::VectorXd::Zero(1)}}, overlay), std::invalid_argument);
}
