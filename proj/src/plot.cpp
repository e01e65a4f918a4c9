#include "stldro/plot.hpp"

#include "stldro/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace stldro {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 56.0;
constexpr int kEllipseSegments = 180;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  bool empty() const { return !(x0 <= x1); }
};

double nice_step(double span) {
  const double raw = span / 8.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0}) {
    if (f * mag >= raw) return f * mag;
  }
  return 10.0 * mag;
}

/// Boundary points of (x-c)^T T (x-c) = 1 from the eigen-decomposition of T.
std::vector<Eigen::Vector2d> ellipse_points(const PhaseOverlay& o) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(o.ellipse_weight);
  const Eigen::Vector2d ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw std::invalid_argument("ellipse weight must be positive definite");
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i <= kEllipseSegments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / kEllipseSegments;
    const Eigen::Vector2d unit(std::cos(t) / std::sqrt(ev[0]), std::sin(t) / std::sqrt(ev[1]));
    pts.push_back(o.ellipse_center + eig.eigenvectors() * unit);
  }
  return pts;
}

}  // namespace

std::string phase_plot_svg(const std::vector<Trace>& trajectories, const PhaseOverlay& overlay) {
  for (const auto& tr : trajectories) {
    for (const auto& x : tr) {
      if (x.size() < 2) throw DimensionError("phase plot needs states of dimension >= 2");
    }
  }
  Bounds b;
  for (const auto& tr : trajectories) {
    for (const auto& x : tr) b.add(x[0], x[1]);
  }
  std::vector<Eigen::Vector2d> ellipse;
  if (overlay.ellipse) {
    ellipse = ellipse_points(overlay);
    for (const auto& p : ellipse) b.add(p[0], p[1]);
  }
  if (overlay.safety_line) b.add(b.empty() ? 0.0 : b.x0, overlay.safety_level);
  if (b.empty()) {
    b.add(-1.0, -1.0);
    b.add(1.0, 1.0);
  }
  // Pad 5% per side; degenerate spans get a unit window.
  const auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double p = span > 0.0 ? 0.05 * span : 0.5;
    lo -= p;
    hi += p;
  };
  pad(b.x0, b.x1);
  pad(b.y0, b.y1);

  const double pw = kWidth - 2.0 * kMargin;
  const double ph = kHeight - 2.0 * kMargin;
  const auto sx = [&](double x) { return kMargin + (x - b.x0) / (b.x1 - b.x0) * pw; };
  const auto sy = [&](double y) { return kHeight - kMargin - (y - b.y0) / (b.y1 - b.y0) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!overlay.title.empty()) {
    s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << xml_escape(overlay.title) << "</text>\n";
  }

  // Axes, grid and tick labels.
  s << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  const double xs = nice_step(b.x1 - b.x0);
  for (double x = std::ceil(b.x0 / xs) * xs; x <= b.x1; x += xs) {
    s << "<line x1=\"" << num(sx(x)) << "\" y1=\"" << num(sy(b.y0)) << "\" x2=\"" << num(sx(x))
      << "\" y2=\"" << num(sy(b.y1)) << "\" stroke=\"#e6e6e6\"/>";
    s << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(kHeight - kMargin + 16)
      << "\" text-anchor=\"middle\">" << tick_label(x) << "</text>\n";
  }
  const double ys = nice_step(b.y1 - b.y0);
  for (double y = std::ceil(b.y0 / ys) * ys; y <= b.y1; y += ys) {
    s << "<line x1=\"" << num(sx(b.x0)) << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << num(sx(b.x1))
      << "\" y2=\"" << num(sy(y)) << "\" stroke=\"#e6e6e6\"/>";
    s << "<text x=\"" << num(kMargin - 6) << "\" y=\"" << num(sy(y) + 4)
      << "\" text-anchor=\"end\">" << tick_label(y) << "</text>\n";
  }
  s << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">x1</text>\n";
  s << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << kHeight / 2 << ")\">x2</text>\n";
  s << "</g>\n";

  if (overlay.safety_line) {
    s << "<line id=\"safety\" x1=\"" << num(sx(b.x0)) << "\" y1=\"" << num(sy(overlay.safety_level))
      << "\" x2=\"" << num(sx(b.x1)) << "\" y2=\"" << num(sy(overlay.safety_level))
      << "\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
  }
  if (overlay.ellipse) {
    s << "<polyline id=\"target\" fill=\"none\" stroke=\"#27ae60\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ellipse.size(); ++i) {
      s << (i ? " " : "") << num(sx(ellipse[i][0])) << ',' << num(sy(ellipse[i][1]));
    }
    s << "\"/>\n";
  }

  s << "<g fill=\"none\" stroke-width=\"1\">\n";
  const double opacity = trajectories.size() > 10 ? 0.35 : 0.9;
  for (const auto& tr : trajectories) {
    s << "<polyline class=\"trajectory\" stroke=\"#1f4e8c\" stroke-opacity=\"" << opacity << "\" points=\"";
    for (std::size_t k = 0; k < tr.size(); ++k) {
      s << (k ? " " : "") << num(sx(tr[k][0])) << ',' << num(sy(tr[k][1]));
    }
    s << "\"/>\n";
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

}  // namespace stldro
