#include "stldro/probability.hpp"

#include "stldro/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace stldro {

double h_gaussian(double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("h: argument must be non-negative");
  constexpr double kPi2 = std::numbers::pi * std::numbers::pi;
  return std::min(2.0 * std::exp(-2.0 * t * t / kPi2), 1.0);
}

double invert_decreasing(const std::function<double(double)>& h, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("h_inverse: epsilon must lie in (0, 1]");
  if (h(0.0) <= eps) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (h(hi) > eps) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw std::runtime_error("h_inverse: h never falls below epsilon");
  }
  // Invariant: h(lo) > eps >= h(hi). Run until the bracket cannot shrink further.
  for (;;) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (h(mid) > eps ? lo : hi) = mid;
  }
  return hi;
}

namespace {

void require_symmetric_psd(const Eigen::MatrixXd& m, const char* what) {
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(what) + " must be symmetric");
  }
  if (m.size() > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
      throw std::invalid_argument(std::string(what) + " must be positive semidefinite");
    }
  }
}

}  // namespace

DisturbanceModel DisturbanceModel::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (mean.size() == 0) throw DimensionError("gaussian: empty mean");
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw DimensionError("gaussian: covariance must be " + std::to_string(mean.size()) + "x" +
                         std::to_string(mean.size()));
  }
  if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("gaussian: non-finite parameters");
  require_symmetric_psd(cov, "covariance");
  DisturbanceModel m;
  m.kind_ = Kind::Gaussian;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  m.factor_ = eig.eigenvectors() * root.asDiagonal();
  m.scale_ = root.maxCoeff();
  m.mean_ = std::move(mean);
  m.cov_ = std::move(cov);
  return m;
}

DisturbanceModel DisturbanceModel::uniform_box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() == 0 || lower.size() != upper.size()) {
    throw DimensionError("uniform box: bounds must be non-empty and equally sized");
  }
  if (!lower.allFinite() || !upper.allFinite() || (lower.array() > upper.array()).any()) {
    throw std::invalid_argument("uniform box: bounds must be finite with lower <= upper");
  }
  DisturbanceModel m;
  m.kind_ = Kind::UniformBox;
  m.mean_ = 0.5 * (lower + upper);
  const Eigen::ArrayXd width = (upper - lower).array();
  m.cov_ = (width.square() / 12.0).matrix().asDiagonal();
  m.scale_ = width.maxCoeff() / std::sqrt(2.0 * std::numbers::pi);
  m.lower_ = std::move(lower);
  m.upper_ = std::move(upper);
  return m;
}

DisturbanceModel DisturbanceModel::empirical(std::vector<Eigen::VectorXd> sequences, int dim,
                                             double scale, std::string source) {
  if (sequences.empty()) throw std::invalid_argument("empirical model: no samples");
  if (dim <= 0) throw DimensionError("empirical model: dimension must be positive");
  const Eigen::Index len = sequences.front().size();
  if (len == 0 || len % dim != 0) throw DimensionError("empirical model: sample length is not a multiple of dim");
  for (const auto& s : sequences) {
    if (s.size() != len) throw DimensionError("empirical model: ragged samples");
    if (!s.allFinite()) throw std::invalid_argument("empirical model: non-finite sample");
  }
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("empirical model: scale must be >= 0");
  DisturbanceModel m;
  m.kind_ = Kind::Empirical;
  const Eigen::Index steps = len / dim;
  m.mean_ = Eigen::VectorXd::Zero(dim);
  m.cov_ = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& s : sequences) {
    for (Eigen::Index k = 0; k < steps; ++k) m.mean_ += s.segment(k * dim, dim);
  }
  const double total = static_cast<double>(sequences.size() * steps);
  m.mean_ /= total;
  for (const auto& s : sequences) {
    for (Eigen::Index k = 0; k < steps; ++k) {
      const Eigen::VectorXd d = s.segment(k * dim, dim) - m.mean_;
      m.cov_ += d * d.transpose();
    }
  }
  m.cov_ /= total;
  m.scale_ = scale;
  m.sequences_ = std::move(sequences);
  m.source_ = std::move(source);
  return m;
}

void DisturbanceModel::set_tail(double a, double c) {
  if (!(a > 1.0) || !std::isfinite(a)) throw std::invalid_argument("tail exponent a must exceed 1");
  if (!(c >= 1.0) || !std::isfinite(c)) throw std::invalid_argument("tail constant C must be at least 1");
  tail_a_ = a;
  tail_c_ = c;
}

double DisturbanceModel::h(double t) const {
  if (!(t >= 0.0)) throw std::invalid_argument("h: argument must be non-negative");
  if (scale_ == 0.0) return t > 0.0 ? 0.0 : 1.0;
  return h_gaussian(t / scale_);
}

double DisturbanceModel::h_inverse(double eps) const {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("h_inverse: epsilon must lie in (0, 1]");
  if (scale_ == 0.0) return 0.0;
  return scale_ * invert_decreasing(h_gaussian, eps);
}

void DisturbanceModel::draw(CounterRng& rng, int steps, double* out) const {
  const int n = dim();
  switch (kind_) {
    case Kind::Gaussian: {
      Eigen::VectorXd z(n);
      for (int k = 0; k < steps; ++k) {
        for (int j = 0; j < n; ++j) z[j] = rng.normal();
        Eigen::Map<Eigen::VectorXd>(out + k * n, n) = mean_ + factor_ * z;
      }
      break;
    }
    case Kind::UniformBox:
      for (int k = 0; k < steps; ++k) {
        for (int j = 0; j < n; ++j) out[k * n + j] = rng.uniform(lower_[j], upper_[j]);
      }
      break;
    case Kind::Empirical: {
      const auto& first = sequences_.front();
      if (first.size() != static_cast<Eigen::Index>(steps) * n) {
        throw DimensionError("empirical model holds sequences of " + std::to_string(first.size() / n) +
                             " steps, " + std::to_string(steps) + " requested");
      }
      const auto pick = rng.next_u64() % sequences_.size();
      std::copy(sequences_[pick].data(), sequences_[pick].data() + first.size(), out);
      break;
    }
  }
}

void EmpiricalDistribution::validate() const {
  if (samples.empty()) throw DimensionError("empirical distribution has no samples");
  for (const auto& s : samples) {
    if (s.size() != samples.front().size()) throw DimensionError("empirical distribution is ragged");
  }
}

double EmpiricalDistribution::mean_norm_distance(const Eigen::VectorXd& w) const {
  double total = 0.0;
  for (const auto& s : samples) total += (w - s).norm();
  return total / static_cast<double>(samples.size());
}

bool AmbiguitySet::contains(const EmpiricalDistribution& q) const {
  return wasserstein_1(center, q) <= radius + 1e-12;
}

EmpiricalDistribution sample(const DisturbanceModel& model, int steps, int count,
                             std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample: need at least one sample");
  if (steps < 1) throw std::invalid_argument("sample: need at least one step");
  EmpiricalDistribution d;
  d.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    Eigen::VectorXd w(static_cast<Eigen::Index>(steps) * model.dim());
    model.draw(rng, steps, w.data());
    d.samples.push_back(std::move(w));
  }
  return d;
}

namespace {

// Successive shortest paths with Dijkstra on reduced costs (all original costs are
// non-negative, so zero initial potentials are valid).
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes) : adj_(nodes), potential_(nodes, 0.0) {}

  void add_edge(int from, int to, long long cap, double cost) {
    adj_[from].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({to, cap, cost});
    adj_[to].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({from, 0, -cost});
  }

  double run(int source, int sink, long long demand) {
    const int n = static_cast<int>(adj_.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double total = 0.0;
    std::vector<double> dist(n);
    std::vector<int> via(n);
    std::vector<char> done(n);
    while (demand > 0) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(via.begin(), via.end(), -1);
      std::fill(done.begin(), done.end(), 0);
      dist[source] = 0.0;
      // Dense Dijkstra: the graphs here are complete bipartite, so O(V^2) is optimal.
      for (;;) {
        int u = -1;
        for (int v = 0; v < n; ++v) {
          if (!done[v] && dist[v] < kInf && (u < 0 || dist[v] < dist[u])) u = v;
        }
        if (u < 0) break;
        done[u] = 1;
        for (int id : adj_[u]) {
          const Edge& e = edges_[id];
          if (e.cap <= 0) continue;
          const double reduced = std::max(0.0, e.cost + potential_[u] - potential_[e.to]);
          if (dist[u] + reduced < dist[e.to]) {
            dist[e.to] = dist[u] + reduced;
            via[e.to] = id;
          }
        }
      }
      if (via[sink] < 0) throw std::logic_error("transport problem is infeasible");
      for (int v = 0; v < n; ++v) {
        if (dist[v] < kInf) potential_[v] += dist[v];
      }
      long long push = demand;
      for (int v = sink; v != source; v = edges_[via[v] ^ 1].to) push = std::min(push, edges_[via[v]].cap);
      for (int v = sink; v != source; v = edges_[via[v] ^ 1].to) {
        edges_[via[v]].cap -= push;
        edges_[via[v] ^ 1].cap += push;
        total += static_cast<double>(push) * edges_[via[v]].cost;
      }
      demand -= push;
    }
    return total;
  }

 private:
  struct Edge {
    int to;
    long long cap;
    double cost;
  };
  std::vector<std::vector<int>> adj_;
  std::vector<Edge> edges_;
  std::vector<double> potential_;
};

}  // namespace

double wasserstein_1(const EmpiricalDistribution& p, const EmpiricalDistribution& q) {
  p.validate();
  q.validate();
  if (p.length() != q.length()) throw DimensionError("wasserstein_1: sample lengths differ");
  constexpr int kMaxSupport = 64;
  if (p.size() > kMaxSupport || q.size() > kMaxSupport) {
    throw std::invalid_argument("wasserstein_1: supports are limited to 64 points");
  }
  const int a = p.size();
  const int b = q.size();
  // Scale the uniform weights 1/a and 1/b to integers.
  const long long total = std::lcm(static_cast<long long>(a), static_cast<long long>(b));
  const int source = a + b;
  const int sink = a + b + 1;
  MinCostFlow flow(a + b + 2);
  for (int i = 0; i < a; ++i) flow.add_edge(source, i, total / a, 0.0);
  for (int j = 0; j < b; ++j) flow.add_edge(a + j, sink, total / b, 0.0);
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      flow.add_edge(i, a + j, total, (p.samples[i] - q.samples[j]).norm());
    }
  }
  return flow.run(source, sink, total) / static_cast<double>(total);
}

double radius_from_confidence(double beta, int count, double tail_a, int steps, double c1,
                              double c2, double s) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("radius rule: beta must lie in (0, 1)");
  if (count < 1) throw std::invalid_argument("radius rule: need at least one sample");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw std::invalid_argument("radius rule: c1 and c2 must be positive");
  if (!(tail_a > 1.0)) throw std::invalid_argument("radius rule: tail exponent a must exceed 1");
  if (!(s > 0.0) || steps < 1) throw std::invalid_argument("radius rule: N and s must be positive");
  const double log_term = std::log(c1 / beta);
  if (log_term <= 0.0) return 0.0;
  const double base = log_term / (c2 * count);
  const double exponent = count >= log_term / c2 ? 1.0 / std::max(steps * s, 2.0) : 1.0 / tail_a;
  return std::pow(base, exponent);
}

double radius_from_confidence(const RadiusRule& rule, int count, const DisturbanceModel& model,
                              int steps) {
  const double s = rule.s > 0.0 ? rule.s : static_cast<double>(model.dim());
  return radius_from_confidence(rule.beta, count, model.tail_a(), steps, rule.c1, rule.c2, s);
}

ConcentrationCurve concentration_check(const DisturbanceModel& model, int steps,
                                       const std::function<double(const Eigen::VectorXd&)>& f,
                                       int trials, std::uint64_t seed,
                                       const std::vector<double>& t_grid,
                                       const double* known_mean) {
  if (trials < 1) throw std::invalid_argument("concentration_check: need at least one trial");
  std::vector<double> values(trials);
  Eigen::VectorXd w(static_cast<Eigen::Index>(steps) * model.dim());
  for (int i = 0; i < trials; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    model.draw(rng, steps, w.data());
    values[i] = f(w);
  }
  ConcentrationCurve curve;
  curve.trials = trials;
  curve.mean = known_mean ? *known_mean
                          : std::accumulate(values.begin(), values.end(), 0.0) / trials;
  std::vector<double> dev(trials);
  for (int i = 0; i < trials; ++i) dev[i] = std::abs(values[i] - curve.mean);
  std::sort(dev.begin(), dev.end());
  for (double t : t_grid) {
    const auto inside = std::upper_bound(dev.begin(), dev.end(), t) - dev.begin();
    curve.t.push_back(t);
    curve.within.push_back(static_cast<double>(inside) / trials);
    curve.bound.push_back(1.0 - model.h(t));
  }
  return curve;
}

void write_samples_csv(std::ostream& out, const EmpiricalDistribution& d, int dim) {
  d.validate();
  if (dim <= 0 || d.length() % dim != 0) throw DimensionError("write_samples_csv: bad dimension");
  const int steps = d.length() / dim;
  for (int k = 0; k < steps; ++k) {
    for (int j = 0; j < dim; ++j) {
      out << (k + j == 0 ? "" : ",") << "w_" << k + 1 << '_' << j + 1;
    }
  }
  out << '\n';
  char buf[32];
  for (const auto& s : d.samples) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s[i]);
      out << (i == 0 ? "" : ",") << buf;
    }
    out << '\n';
  }
}

EmpiricalDistribution read_samples_csv(std::istream& in, int* dim) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("sample CSV is empty");
  int columns = 0;
  int max_coord = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      int k = 0;
      int j = 0;
      char tail = 0;
      if (std::sscanf(cell.c_str(), " w_%d_%d %c", &k, &j, &tail) != 2 || k < 1 || j < 1) {
        throw std::invalid_argument("sample CSV header: bad column name '" + cell + "'");
      }
      max_coord = std::max(max_coord, j);
      ++columns;
    }
  }
  if (columns == 0 || columns % max_coord != 0) throw std::invalid_argument("sample CSV header is inconsistent");
  EmpiricalDistribution d;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    Eigen::VectorXd w(columns);
    std::stringstream cells(line);
    std::string cell;
    int c = 0;
    while (std::getline(cells, cell, ',')) {
      if (c >= columns) throw std::invalid_argument("sample CSV row " + std::to_string(row) + " has too many columns");
      char* end = nullptr;
      w[c] = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw std::invalid_argument("sample CSV row " + std::to_string(row) + ": bad number");
      ++c;
    }
    if (c != columns) throw std::invalid_argument("sample CSV row " + std::to_string(row) + " has too few columns");
    d.samples.push_back(std::move(w));
  }
  if (dim) *dim = max_coord;
  d.validate();
  return d;
}

}  // namespace stldro
