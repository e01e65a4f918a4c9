#include "stldro/stl.hpp"

#include "stldro/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>
#include <sstream>

namespace stldro {

// ---------------------------------------------------------------------------
// Predicate

Predicate Predicate::affine(Eigen::VectorXd c, double d, std::string name) {
  Predicate p;
  p.kind = Kind::Affine;
  p.vector = std::move(c);
  p.level = d;
  p.name = std::move(name);
  return p;
}

Predicate Predicate::quadratic_cap(Eigen::VectorXd center, Eigen::MatrixXd q, double d,
                                   std::string name) {
  if (q.rows() != q.cols() || q.rows() != center.size()) {
    throw DimensionError("quadratic predicate: weight must be " + std::to_string(center.size()) +
                         "x" + std::to_string(center.size()));
  }
  if (q.size() > 0 && (q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + q.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("quadratic predicate: weight matrix is not symmetric");
  }
  if (q.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9) {
      throw std::invalid_argument("quadratic predicate: weight matrix is not positive semidefinite");
    }
  }
  Predicate p;
  p.kind = Kind::QuadraticCap;
  p.vector = std::move(center);
  p.weight = std::move(q);
  p.level = d;
  p.name = std::move(name);
  return p;
}

double Predicate::value(const Eigen::VectorXd& x) const {
  switch (kind) {
    case Kind::Affine:
      return vector.dot(x) + level;
    case Kind::QuadraticCap: {
      const Eigen::VectorXd e = x - vector;
      return level - e.dot(weight * e);
    }
    case Kind::QuadraticFloor: {
      const Eigen::VectorXd e = x - vector;
      return e.dot(weight * e) - level;
    }
  }
  return 0.0;
}

Eigen::VectorXd Predicate::gradient(const Eigen::VectorXd& x) const {
  switch (kind) {
    case Kind::Affine:
      return vector;
    case Kind::QuadraticCap:
      return -2.0 * (weight * (x - vector));
    case Kind::QuadraticFloor:
      return 2.0 * (weight * (x - vector));
  }
  return {};
}

Predicate Predicate::negated() const {
  Predicate p = *this;
  switch (kind) {
    case Kind::Affine:
      p.vector = -vector;
      p.level = -level;
      break;
    case Kind::QuadraticCap:
      p.kind = Kind::QuadraticFloor;
      break;
    case Kind::QuadraticFloor:
      p.kind = Kind::QuadraticCap;
      break;
  }
  if (!name.empty()) p.name = name.front() == '!' ? name.substr(1) : "!" + name;
  return p;
}

bool Predicate::operator==(const Predicate& other) const {
  return kind == other.kind && name == other.name && level == other.level &&
         vector.size() == other.vector.size() && vector == other.vector &&
         weight.rows() == other.weight.rows() && weight.cols() == other.weight.cols() &&
         weight == other.weight;
}

// ---------------------------------------------------------------------------
// Formula

struct Formula::Node {
  Op op = Op::True;
  Predicate pred;
  int lo = 0;
  int hi = 0;
  Formula left{nullptr};
  Formula right{nullptr};
};

namespace {

void check_interval(int lo, int hi) {
  if (lo < 0 || hi < lo) {
    throw std::invalid_argument("temporal interval [" + std::to_string(lo) + "," +
                                std::to_string(hi) + "] must satisfy 0 <= a <= b");
  }
}

}  // namespace

Formula Formula::truth() { return Formula(std::make_shared<const Node>()); }

Formula Formula::pred(Predicate p) {
  auto n = std::make_shared<Node>();
  n->op = Op::Pred;
  n->pred = std::move(p);
  return Formula(std::move(n));
}

Formula Formula::negation(Formula f) {
  auto n = std::make_shared<Node>();
  n->op = Op::Not;
  n->left = std::move(f);
  return Formula(std::move(n));
}

Formula Formula::conjunction(Formula lhs, Formula rhs) {
  auto n = std::make_shared<Node>();
  n->op = Op::And;
  n->left = std::move(lhs);
  n->right = std::move(rhs);
  return Formula(std::move(n));
}

Formula Formula::disjunction(Formula lhs, Formula rhs) {
  auto n = std::make_shared<Node>();
  n->op = Op::Or;
  n->left = std::move(lhs);
  n->right = std::move(rhs);
  return Formula(std::move(n));
}

Formula Formula::until(int lo, int hi, Formula lhs, Formula rhs) {
  check_interval(lo, hi);
  auto n = std::make_shared<Node>();
  n->op = Op::Until;
  n->lo = lo;
  n->hi = hi;
  n->left = std::move(lhs);
  n->right = std::move(rhs);
  return Formula(std::move(n));
}

Formula Formula::eventually(int lo, int hi, Formula f) {
  check_interval(lo, hi);
  auto n = std::make_shared<Node>();
  n->op = Op::Eventually;
  n->lo = lo;
  n->hi = hi;
  n->left = std::move(f);
  return Formula(std::move(n));
}

Formula Formula::always(int lo, int hi, Formula f) {
  check_interval(lo, hi);
  auto n = std::make_shared<Node>();
  n->op = Op::Always;
  n->lo = lo;
  n->hi = hi;
  n->left = std::move(f);
  return Formula(std::move(n));
}

Formula::Op Formula::op() const { return node_->op; }
const Predicate& Formula::predicate() const { return node_->pred; }
int Formula::lo() const { return node_->lo; }
int Formula::hi() const { return node_->hi; }

const Formula& Formula::lhs() const { return node_->left; }
const Formula& Formula::rhs() const { return node_->right; }

bool Formula::operator==(const Formula& other) const {
  if (node_ == other.node_) return true;
  if (op() != other.op()) return false;
  switch (op()) {
    case Op::True:
      return true;
    case Op::Pred:
      return predicate() == other.predicate();
    case Op::Not:
      return lhs() == other.lhs();
    case Op::And:
    case Op::Or:
      return lhs() == other.lhs() && rhs() == other.rhs();
    case Op::Until:
      return lo() == other.lo() && hi() == other.hi() && lhs() == other.lhs() &&
             rhs() == other.rhs();
    case Op::Eventually:
    case Op::Always:
      return lo() == other.lo() && hi() == other.hi() && lhs() == other.lhs();
  }
  return false;
}

// ---------------------------------------------------------------------------
// Smoothing configuration

SmoothingConfig SmoothingConfig::uniform(double c) {
  SmoothingConfig cfg;
  cfg.and_c = cfg.or_c = cfg.eventually_c = cfg.always_c = cfg.until_c = c;
  return cfg;
}

double SmoothingConfig::constant(Formula::Op op, int site) const {
  if (auto it = sites.find(site); it != sites.end()) return it->second;
  switch (op) {
    case Formula::Op::And:
      return and_c;
    case Formula::Op::Or:
      return or_c;
    case Formula::Op::Eventually:
      return eventually_c;
    case Formula::Op::Always:
      return always_c;
    case Formula::Op::Until:
      return until_c;
    default:
      return 0.0;
  }
}

void SmoothingConfig::validate() const {
  for (double c : {and_c, or_c, eventually_c, always_c, until_c}) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("smoothing constants must be positive and finite");
    }
  }
  for (const auto& [site, c] : sites) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("smoothing constant for site " + std::to_string(site) +
                                  " must be positive and finite");
    }
  }
}

// ---------------------------------------------------------------------------
// Structural queries

int horizon(const Formula& f) {
  switch (f.op()) {
    case Formula::Op::True:
    case Formula::Op::Pred:
      return 0;
    case Formula::Op::Not:
      return horizon(f.lhs());
    case Formula::Op::And:
    case Formula::Op::Or:
      return std::max(horizon(f.lhs()), horizon(f.rhs()));
    case Formula::Op::Until:
      return f.hi() + std::max(horizon(f.lhs()), horizon(f.rhs()));
    case Formula::Op::Eventually:
    case Formula::Op::Always:
      return f.hi() + horizon(f.lhs());
  }
  return 0;
}

namespace {

void require_length(const Formula& f, const Trace& trace, int k) {
  const int needed = k + horizon(f);
  if (k < 0 || needed >= static_cast<int>(trace.size())) {
    throw TraceTooShort("evaluation at k=" + std::to_string(k) + " needs states up to x_" +
                        std::to_string(needed) + " but the trace ends at x_" +
                        std::to_string(static_cast<int>(trace.size()) - 1));
  }
}

bool sat(const Formula& f, const Trace& xi, int k) {
  switch (f.op()) {
    case Formula::Op::True:
      return true;
    case Formula::Op::Pred:
      return f.predicate().value(xi[k]) >= 0.0;
    case Formula::Op::Not:
      return !sat(f.lhs(), xi, k);
    case Formula::Op::And:
      return sat(f.lhs(), xi, k) && sat(f.rhs(), xi, k);
    case Formula::Op::Or:
      return sat(f.lhs(), xi, k) || sat(f.rhs(), xi, k);
    case Formula::Op::Until:
      for (int j = f.lo(); j <= f.hi(); ++j) {
        if (!sat(f.rhs(), xi, k + j)) continue;
        bool holds = true;
        for (int t = k; t <= k + j && holds; ++t) holds = sat(f.lhs(), xi, t);
        if (holds) return true;
      }
      return false;
    case Formula::Op::Eventually:
      for (int j = f.lo(); j <= f.hi(); ++j) {
        if (sat(f.lhs(), xi, k + j)) return true;
      }
      return false;
    case Formula::Op::Always:
      for (int j = f.lo(); j <= f.hi(); ++j) {
        if (!sat(f.lhs(), xi, k + j)) return false;
      }
      return true;
  }
  return false;
}

double rho(const Formula& f, const Trace& xi, int k, double top) {
  switch (f.op()) {
    case Formula::Op::True:
      return top;
    case Formula::Op::Pred:
      return f.predicate().value(xi[k]);
    case Formula::Op::Not:
      return -rho(f.lhs(), xi, k, top);
    case Formula::Op::And:
      return std::min(rho(f.lhs(), xi, k, top), rho(f.rhs(), xi, k, top));
    case Formula::Op::Or:
      return std::max(rho(f.lhs(), xi, k, top), rho(f.rhs(), xi, k, top));
    case Formula::Op::Until: {
      double best = -std::numeric_limits<double>::infinity();
      double prefix = std::numeric_limits<double>::infinity();
      for (int t = k; t < k + f.lo(); ++t) prefix = std::min(prefix, rho(f.lhs(), xi, t, top));
      for (int j = f.lo(); j <= f.hi(); ++j) {
        prefix = std::min(prefix, rho(f.lhs(), xi, k + j, top));
        best = std::max(best, std::min(rho(f.rhs(), xi, k + j, top), prefix));
      }
      return best;
    }
    case Formula::Op::Eventually: {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = f.lo(); j <= f.hi(); ++j) best = std::max(best, rho(f.lhs(), xi, k + j, top));
      return best;
    }
    case Formula::Op::Always: {
      double worst = std::numeric_limits<double>::infinity();
      for (int j = f.lo(); j <= f.hi(); ++j) worst = std::min(worst, rho(f.lhs(), xi, k + j, top));
      return worst;
    }
  }
  return 0.0;
}

}  // namespace

bool eval_boolean(const Formula& f, const Trace& trace, int k) {
  require_length(f, trace, k);
  return sat(f, trace, k);
}

double robustness(const Formula& f, const Trace& trace, int k, double top) {
  require_length(f, trace, k);
  return rho(f, trace, k, top);
}

// ---------------------------------------------------------------------------
// Smooth semantics

double soft_min(const double* values, int count, double c, double* weights) {
  const double m = *std::min_element(values, values + count);
  double sum = 0.0;
  for (int i = 0; i < count; ++i) sum += std::exp(-c * (values[i] - m));
  if (weights != nullptr) {
    for (int i = 0; i < count; ++i) weights[i] = std::exp(-c * (values[i] - m)) / sum;
  }
  return m - std::log(sum) / c;
}

double soft_max(const double* values, int count, double c, double* weights) {
  const double m = *std::max_element(values, values + count);
  double z = 0.0;
  double acc = 0.0;
  for (int i = 0; i < count; ++i) {
    const double e = std::exp(c * (values[i] - m));
    z += e;
    acc += e * values[i];
  }
  const double s = acc / z;
  if (weights != nullptr) {
    for (int i = 0; i < count; ++i) {
      const double p = std::exp(c * (values[i] - m)) / z;
      weights[i] = p * (1.0 + c * (values[i] - s));
    }
  }
  return s;
}

namespace {

struct FlatNode {
  Formula::Op op;
  const Predicate* pred = nullptr;
  int lo = 0;
  int hi = 0;
  int left = -1;
  int right = -1;
  double c = 0.0;
  // Time range [first, last] at which this node is evaluated.
  int first = std::numeric_limits<int>::max();
  int last = std::numeric_limits<int>::min();
};

int flatten(const Formula& f, const SmoothingConfig& cfg, std::vector<FlatNode>& out) {
  const int index = static_cast<int>(out.size());
  out.push_back({f.op()});
  out[index].c = cfg.constant(f.op(), index);
  switch (f.op()) {
    case Formula::Op::True:
      break;
    case Formula::Op::Pred:
      out[index].pred = &f.predicate();
      break;
    case Formula::Op::Not:
    case Formula::Op::Eventually:
    case Formula::Op::Always: {
      const int child = flatten(f.lhs(), cfg, out);
      out[index].left = child;
      out[index].lo = f.lo();
      out[index].hi = f.hi();
      break;
    }
    case Formula::Op::And:
    case Formula::Op::Or:
    case Formula::Op::Until: {
      const int l = flatten(f.lhs(), cfg, out);
      const int r = flatten(f.rhs(), cfg, out);
      out[index].left = l;
      out[index].right = r;
      out[index].lo = f.lo();
      out[index].hi = f.hi();
      break;
    }
  }
  return index;
}

void widen(FlatNode& n, int first, int last) {
  n.first = std::min(n.first, first);
  n.last = std::max(n.last, last);
}

class SmoothEvaluator {
 public:
  SmoothEvaluator(const Formula& f, const Trace& xi, int k, const SmoothingConfig& cfg)
      : xi_(xi) {
    flatten(f, cfg, nodes_);
    nodes_[0].first = nodes_[0].last = k;
    // Parents precede children in pre-order, so ranges are final once visited.
    for (auto& n : nodes_) {
      switch (n.op) {
        case Formula::Op::Not:
        case Formula::Op::And:
        case Formula::Op::Or:
          widen(nodes_[n.left], n.first, n.last);
          if (n.right >= 0) widen(nodes_[n.right], n.first, n.last);
          break;
        case Formula::Op::Eventually:
        case Formula::Op::Always:
          widen(nodes_[n.left], n.first + n.lo, n.last + n.hi);
          break;
        case Formula::Op::Until:
          widen(nodes_[n.left], n.first, n.last + n.hi);
          widen(nodes_[n.right], n.first + n.lo, n.last + n.hi);
          break;
        default:
          break;
      }
    }
    values_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      values_[i].assign(nodes_[i].last - nodes_[i].first + 1, 0.0);
    }
  }

  double forward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const FlatNode& n = nodes_[i];
      for (int t = n.first; t <= n.last; ++t) values_[i][t - n.first] = eval_at(n, t);
    }
    return values_[0][0];
  }

  void backward(std::vector<Eigen::VectorXd>& grad) {
    grad.assign(xi_.size(), Eigen::VectorXd::Zero(xi_.front().size()));
    std::vector<std::vector<double>> adj(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) adj[i].assign(values_[i].size(), 0.0);
    adj[0][0] = 1.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const FlatNode& n = nodes_[i];
      for (int t = n.first; t <= n.last; ++t) {
        const double a = adj[i][t - n.first];
        if (a == 0.0) continue;
        push_adjoint(n, t, a, adj, grad);
      }
    }
  }

 private:
  double val(int node, int t) const { return values_[node][t - nodes_[node].first]; }

  double eval_at(const FlatNode& n, int t) {
    switch (n.op) {
      case Formula::Op::Pred:
        return n.pred->value(xi_[t]);
      case Formula::Op::Not:
        return -val(n.left, t);
      case Formula::Op::And: {
        const double a[2] = {val(n.left, t), val(n.right, t)};
        return soft_min(a, 2, n.c);
      }
      case Formula::Op::Or: {
        const double a[2] = {val(n.left, t), val(n.right, t)};
        return soft_max(a, 2, n.c);
      }
      case Formula::Op::Eventually:
      case Formula::Op::Always: {
        gather_window(n, t);
        const int m = static_cast<int>(buf_.size());
        return n.op == Formula::Op::Always ? soft_min(buf_.data(), m, n.c)
                                           : soft_max(buf_.data(), m, n.c);
      }
      case Formula::Op::Until: {
        std::vector<double> inner;
        for (int j = n.lo; j <= n.hi; ++j) {
          gather_until(n, t, j);
          inner.push_back(soft_min(buf_.data(), static_cast<int>(buf_.size()), n.c));
        }
        return soft_max(inner.data(), static_cast<int>(inner.size()), n.c);
      }
      case Formula::Op::True:
        break;
    }
    return 0.0;
  }

  void gather_window(const FlatNode& n, int t) {
    buf_.clear();
    for (int j = n.lo; j <= n.hi; ++j) buf_.push_back(val(n.left, t + j));
  }

  // Elements of the j-th Until term: psi(t+j) followed by phi(t..t+j).
  void gather_until(const FlatNode& n, int t, int j) {
    buf_.clear();
    buf_.push_back(val(n.right, t + j));
    for (int s = t; s <= t + j; ++s) buf_.push_back(val(n.left, s));
  }

  void push_adjoint(const FlatNode& n, int t, double a, std::vector<std::vector<double>>& adj,
                    std::vector<Eigen::VectorXd>& grad) {
    auto add = [&](int node, int time, double v) {
      adj[node][time - nodes_[node].first] += v;
    };
    switch (n.op) {
      case Formula::Op::Pred:
        grad[t] += a * n.pred->gradient(xi_[t]);
        break;
      case Formula::Op::Not:
        add(n.left, t, -a);
        break;
      case Formula::Op::And:
      case Formula::Op::Or: {
        const double v[2] = {val(n.left, t), val(n.right, t)};
        double w[2];
        if (n.op == Formula::Op::And) {
          soft_min(v, 2, n.c, w);
        } else {
          soft_max(v, 2, n.c, w);
        }
        add(n.left, t, a * w[0]);
        add(n.right, t, a * w[1]);
        break;
      }
      case Formula::Op::Eventually:
      case Formula::Op::Always: {
        gather_window(n, t);
        const int m = static_cast<int>(buf_.size());
        std::vector<double> w(m);
        if (n.op == Formula::Op::Always) {
          soft_min(buf_.data(), m, n.c, w.data());
        } else {
          soft_max(buf_.data(), m, n.c, w.data());
        }
        for (int j = 0; j < m; ++j) add(n.left, t + n.lo + j, a * w[j]);
        break;
      }
      case Formula::Op::Until: {
        const int terms = n.hi - n.lo + 1;
        std::vector<double> inner(terms);
        for (int j = n.lo; j <= n.hi; ++j) {
          gather_until(n, t, j);
          inner[j - n.lo] = soft_min(buf_.data(), static_cast<int>(buf_.size()), n.c);
        }
        std::vector<double> outer_w(terms);
        soft_max(inner.data(), terms, n.c, outer_w.data());
        for (int j = n.lo; j <= n.hi; ++j) {
          gather_until(n, t, j);
          std::vector<double> w(buf_.size());
          soft_min(buf_.data(), static_cast<int>(buf_.size()), n.c, w.data());
          const double scale = a * outer_w[j - n.lo];
          add(n.right, t + j, scale * w[0]);
          for (int s = t; s <= t + j; ++s) add(n.left, s, scale * w[1 + s - t]);
        }
        break;
      }
      case Formula::Op::True:
        break;
    }
  }

  const Trace& xi_;
  std::vector<FlatNode> nodes_;
  std::vector<std::vector<double>> values_;
  std::vector<double> buf_;
};

}  // namespace

double smooth_robustness(const Formula& f, const Trace& trace, int k, const SmoothingConfig& cfg,
                         std::vector<Eigen::VectorXd>* state_gradient) {
  if (!is_nnf(f)) {
    throw std::invalid_argument("smooth_robustness: formula is not in negation normal form");
  }
  if (contains_true(f)) {
    throw std::invalid_argument("smooth_robustness: formula contains the constant T");
  }
  require_length(f, trace, k);
  SmoothEvaluator eval(f, trace, k, cfg);
  const double v = eval.forward();
  if (state_gradient != nullptr) eval.backward(*state_gradient);
  return v;
}

// ---------------------------------------------------------------------------
// Negation normal form

namespace {

// phi U[a,b] psi  ==  OR_{j=a..b} ( G[0,j] phi  &  F[j,j] psi )
Formula unroll_until(const Formula& f) {
  std::optional<Formula> result;
  for (int j = f.lo(); j <= f.hi(); ++j) {
    Formula term = Formula::conjunction(Formula::always(0, j, f.lhs()),
                                        Formula::eventually(j, j, f.rhs()));
    result = result ? Formula::disjunction(*result, term) : term;
  }
  return *result;
}

Formula nnf(const Formula& f, bool negate) {
  switch (f.op()) {
    case Formula::Op::True:
      return negate ? Formula::negation(f) : f;
    case Formula::Op::Pred:
      return negate ? Formula::pred(f.predicate().negated()) : f;
    case Formula::Op::Not:
      return nnf(f.lhs(), !negate);
    case Formula::Op::And:
      return negate ? Formula::disjunction(nnf(f.lhs(), true), nnf(f.rhs(), true))
                    : Formula::conjunction(nnf(f.lhs(), false), nnf(f.rhs(), false));
    case Formula::Op::Or:
      return negate ? Formula::conjunction(nnf(f.lhs(), true), nnf(f.rhs(), true))
                    : Formula::disjunction(nnf(f.lhs(), false), nnf(f.rhs(), false));
    case Formula::Op::Until:
      // No release operator in the grammar; the negation goes through the unrolled form.
      return negate ? nnf(unroll_until(f), true)
                    : Formula::until(f.lo(), f.hi(), nnf(f.lhs(), false), nnf(f.rhs(), false));
    case Formula::Op::Eventually:
      return negate ? Formula::always(f.lo(), f.hi(), nnf(f.lhs(), true))
                    : Formula::eventually(f.lo(), f.hi(), nnf(f.lhs(), false));
    case Formula::Op::Always:
      return negate ? Formula::eventually(f.lo(), f.hi(), nnf(f.lhs(), true))
                    : Formula::always(f.lo(), f.hi(), nnf(f.lhs(), false));
  }
  return f;
}

}  // namespace

Formula to_nnf(const Formula& f) { return nnf(f, false); }

bool is_nnf(const Formula& f) {
  switch (f.op()) {
    case Formula::Op::True:
    case Formula::Op::Pred:
      return true;
    case Formula::Op::Not:
      return f.lhs().op() == Formula::Op::Pred || f.lhs().op() == Formula::Op::True;
    case Formula::Op::And:
    case Formula::Op::Or:
    case Formula::Op::Until:
      return is_nnf(f.lhs()) && is_nnf(f.rhs());
    case Formula::Op::Eventually:
    case Formula::Op::Always:
      return is_nnf(f.lhs());
  }
  return false;
}

bool contains_true(const Formula& f) {
  switch (f.op()) {
    case Formula::Op::True:
      return true;
    case Formula::Op::Pred:
      return false;
    case Formula::Op::Not:
    case Formula::Op::Eventually:
    case Formula::Op::Always:
      return contains_true(f.lhs());
    case Formula::Op::And:
    case Formula::Op::Or:
    case Formula::Op::Until:
      return contains_true(f.lhs()) || contains_true(f.rhs());
  }
  return false;
}

namespace {

void collect(const Formula& f, std::vector<Predicate>& out) {
  switch (f.op()) {
    case Formula::Op::True:
      return;
    case Formula::Op::Pred:
      out.push_back(f.predicate());
      return;
    case Formula::Op::Not:
    case Formula::Op::Eventually:
    case Formula::Op::Always:
      collect(f.lhs(), out);
      return;
    case Formula::Op::And:
    case Formula::Op::Or:
    case Formula::Op::Until:
      collect(f.lhs(), out);
      collect(f.rhs(), out);
      return;
  }
}

}  // namespace

std::vector<Predicate> predicates_of(const Formula& f) {
  std::vector<Predicate> out;
  collect(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest representation that round-trips.
  for (int precision = 1; precision <= 17; ++precision) {
    char trial[32];
    std::snprintf(trial, sizeof trial, "%.*g", precision, v);
    if (std::strtod(trial, nullptr) == v) return trial;
  }
  return buf;
}

std::string affine_text(const Predicate& p) {
  std::string out;
  for (int i = 0; i < p.dim(); ++i) {
    const double c = p.vector[i];
    if (c == 0.0) continue;
    const std::string term = number(std::abs(c)) + "*x" + std::to_string(i + 1);
    if (out.empty()) {
      out = (c < 0 ? "-" : "") + term;
    } else {
      out += (c < 0 ? " - " : " + ") + term;
    }
  }
  if (out.empty()) {
    out = number(p.level);
  } else if (p.level != 0.0) {
    out += (p.level < 0 ? " - " : " + ") + number(std::abs(p.level));
  }
  return "(" + out + " >= 0)";
}

void print(const Formula& f, std::string& out) {
  switch (f.op()) {
    case Formula::Op::True:
      out += "T";
      return;
    case Formula::Op::Pred: {
      const Predicate& p = f.predicate();
      if (!p.name.empty()) {
        out += p.name;
      } else if (p.kind == Predicate::Kind::Affine) {
        out += affine_text(p);
      } else {
        throw std::invalid_argument("to_string: unnamed quadratic predicate has no text form");
      }
      return;
    }
    case Formula::Op::Not:
      out += "!";
      print(f.lhs(), out);
      return;
    case Formula::Op::And:
    case Formula::Op::Or:
      out += "(";
      print(f.lhs(), out);
      out += f.op() == Formula::Op::And ? " & " : " | ";
      print(f.rhs(), out);
      out += ")";
      return;
    case Formula::Op::Until:
      out += "(";
      print(f.lhs(), out);
      out += " U[" + std::to_string(f.lo()) + "," + std::to_string(f.hi()) + "] ";
      print(f.rhs(), out);
      out += ")";
      return;
    case Formula::Op::Eventually:
    case Formula::Op::Always:
      out += f.op() == Formula::Op::Eventually ? "F[" : "G[";
      out += std::to_string(f.lo()) + "," + std::to_string(f.hi()) + "] ";
      print(f.lhs(), out);
      return;
  }
}

}  // namespace

std::string to_string(const Formula& f) {
  std::string out;
  print(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

enum class Tok {
  Ident, Number, LBrack, RBrack, Comma, LParen, RParen, Bang, Amp, Pipe, Plus, Minus, Star,
  Ge, Le, End
};

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
      if (s[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < s.size()) {
    const char ch = s[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      advance(1);
      continue;
    }
    const int l = line;
    const int c = col;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Tok::Ident, std::string(s.substr(i, j - i)), l, c});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      out.push_back({Tok::Number, std::string(s.substr(i, j - i)), l, c});
      advance(j - i);
      continue;
    }
    if (ch == '>' || ch == '<') {
      if (i + 1 < s.size() && s[i + 1] == '=') {
        out.push_back({ch == '>' ? Tok::Ge : Tok::Le, std::string(s.substr(i, 2)), l, c});
        advance(2);
        continue;
      }
      throw ParseError(std::string("expected '") + ch + "='", l, c);
    }
    Tok kind;
    switch (ch) {
      case '[': kind = Tok::LBrack; break;
      case ']': kind = Tok::RBrack; break;
      case ',': kind = Tok::Comma; break;
      case '(': kind = Tok::LParen; break;
      case ')': kind = Tok::RParen; break;
      case '!': kind = Tok::Bang; break;
      case '&': kind = Tok::Amp; break;
      case '|': kind = Tok::Pipe; break;
      case '+': kind = Tok::Plus; break;
      case '-': kind = Tok::Minus; break;
      case '*': kind = Tok::Star; break;
      default:
        throw ParseError(std::string("unexpected character '") + ch + "'", l, c);
    }
    out.push_back({kind, std::string(1, ch), l, c});
    advance(1);
  }
  out.push_back({Tok::End, "", line, col});
  return out;
}

bool is_state_variable(const std::string& s) {
  return s.size() >= 2 && s[0] == 'x' &&
         std::all_of(s.begin() + 1, s.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
}

class Parser {
 public:
  Parser(std::string_view text, const PredicateRegistry& registry, int dim)
      : toks_(tokenize(text)), registry_(registry), dim_(dim) {}

  Formula parse_all() {
    Formula f = parse_or();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
    return f;
  }

 private:
  const Token& peek(int ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  const Token& take() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  [[noreturn]] void fail(const std::string& msg, const Token* at = nullptr) const {
    const Token& t = at ? *at : peek();
    throw ParseError(msg, t.line, t.column);
  }
  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail(std::string("expected ") + what);
    return take();
  }

  bool at_temporal(const char* name) const {
    return peek().kind == Tok::Ident && peek().text == name && peek(1).kind == Tok::LBrack;
  }

  Formula parse_or() {
    Formula f = parse_and();
    while (peek().kind == Tok::Pipe) {
      take();
      f = Formula::disjunction(f, parse_and());
    }
    return f;
  }

  Formula parse_and() {
    Formula f = parse_until();
    while (peek().kind == Tok::Amp) {
      take();
      f = Formula::conjunction(f, parse_until());
    }
    return f;
  }

  Formula parse_until() {
    Formula f = parse_unary();
    while (at_temporal("U")) {
      take();
      auto [a, b] = parse_interval();
      f = Formula::until(a, b, f, parse_unary());
    }
    return f;
  }

  std::pair<int, int> parse_interval() {
    expect(Tok::LBrack, "'['");
    const Token& lo_tok = peek();
    const int a = parse_int();
    expect(Tok::Comma, "','");
    const int b = parse_int();
    expect(Tok::RBrack, "']'");
    if (b < a) {
      fail("interval upper bound " + std::to_string(b) + " is below lower bound " +
               std::to_string(a),
           &lo_tok);
    }
    return {a, b};
  }

  int parse_int() {
    const Token& t = peek();
    if (t.kind != Tok::Number) fail("expected a non-negative integer time bound");
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
      fail("time bound '" + t.text + "' is not an integer");
    }
    take();
    return v;
  }

  Formula parse_unary() {
    if (peek().kind == Tok::Bang) {
      take();
      return Formula::negation(parse_unary());
    }
    if (at_temporal("G") || at_temporal("F")) {
      const bool always = take().text == "G";
      auto [a, b] = parse_interval();
      Formula body = parse_unary();
      return always ? Formula::always(a, b, body) : Formula::eventually(a, b, body);
    }
    return parse_primary();
  }

  Formula parse_primary() {
    const Token& t = peek();
    if (t.kind == Tok::LParen) {
      take();
      Formula f = parse_or();
      expect(Tok::RParen, "')'");
      return f;
    }
    if (t.kind == Tok::Ident && !is_state_variable(t.text)) {
      if (t.text == "T") {
        take();
        return Formula::truth();
      }
      auto it = registry_.find(t.text);
      if (it == registry_.end()) fail("unknown predicate name '" + t.text + "'");
      take();
      if (it->second.dim() != dim_) {
        fail("predicate '" + t.text + "' has dimension " + std::to_string(it->second.dim()) +
                 ", expected " + std::to_string(dim_),
             &t);
      }
      Predicate p = it->second;
      p.name = t.text;
      return Formula::pred(std::move(p));
    }
    if (t.kind == Tok::Ident || t.kind == Tok::Number || t.kind == Tok::Plus ||
        t.kind == Tok::Minus) {
      return parse_comparison();
    }
    fail(t.kind == Tok::End ? "unexpected end of formula" : "unexpected '" + t.text + "'");
  }

  // Accumulates sign * expression into (c, d).
  void parse_linear(double sign, Eigen::VectorXd& c, double& d) {
    bool first = true;
    while (true) {
      double term_sign = sign;
      if (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
        if (take().kind == Tok::Minus) term_sign = -term_sign;
      } else if (!first) {
        break;
      }
      first = false;
      const Token& t = peek();
      if (t.kind == Tok::Number) {
        take();
        const double v = parse_double(t);
        if (peek().kind == Tok::Star) {
          take();
          const int idx = parse_variable();
          c[idx] += term_sign * v;
        } else {
          d += term_sign * v;
        }
      } else if (t.kind == Tok::Ident) {
        c[parse_variable()] += term_sign;
      } else {
        fail("expected a number or state variable");
      }
    }
  }

  double parse_double(const Token& t) const {
    char* end = nullptr;
    const double v = std::strtod(t.text.c_str(), &end);
    if (end != t.text.c_str() + t.text.size()) fail("malformed number '" + t.text + "'", &t);
    return v;
  }

  int parse_variable() {
    const Token& t = peek();
    if (t.kind != Tok::Ident || !is_state_variable(t.text)) fail("expected a state variable x<i>");
    const int idx = std::stoi(t.text.substr(1));
    if (idx < 1 || idx > dim_) {
      fail("state variable " + t.text + " out of range for state dimension " +
           std::to_string(dim_));
    }
    take();
    return idx - 1;
  }

  Formula parse_comparison() {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim_);
    double d = 0.0;
    Eigen::VectorXd c_rhs = Eigen::VectorXd::Zero(dim_);
    double d_rhs = 0.0;
    parse_linear(1.0, c, d);
    const Token& op = peek();
    if (op.kind != Tok::Ge && op.kind != Tok::Le) fail("expected '>=' or '<='");
    take();
    parse_linear(1.0, c_rhs, d_rhs);
    // lhs >= rhs  ->  lhs - rhs >= 0 ;  lhs <= rhs  ->  rhs - lhs >= 0
    const double s = op.kind == Tok::Ge ? 1.0 : -1.0;
    Eigen::VectorXd coeff = s * (c - c_rhs);
    double level = s * (d - d_rhs);
    coeff = coeff.unaryExpr([](double v) { return v == 0.0 ? 0.0 : v; });
    if (level == 0.0) level = 0.0;
    return Formula::pred(Predicate::affine(std::move(coeff), level));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const PredicateRegistry& registry_;
  int dim_;
};

}  // namespace

Formula parse(std::string_view text, const PredicateRegistry& registry, int state_dim) {
  Parser p(text, registry, state_dim);
  return p.parse_all();
}

}  // namespace stldro
