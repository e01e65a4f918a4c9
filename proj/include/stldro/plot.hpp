#pragma once

#include "stldro/stl.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace stldro {

/// Reference geometry drawn over the phase plane.
struct PhaseOverlay {
  bool safety_line = true;
  double safety_level = 0.75;  // horizontal line x2 = level
  bool ellipse = true;
  Eigen::Vector2d ellipse_center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d ellipse_weight = Eigen::Vector2d(0.25, 0.04).asDiagonal();  // (x-c)^T T (x-c) = 1
  std::string title;
};

/// Static SVG of x1 against x2 for each trajectory (states of dimension >= 2),
/// with the overlays. An empty list still renders axes and overlays. Output is a
/// pure function of the inputs.
std::string phase_plot_svg(const std::vector<Trace>& trajectories, const PhaseOverlay& overlay);

}  // namespace stldro
