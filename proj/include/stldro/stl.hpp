#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace stldro {

/// Sequence of states x_0 ... x_N.
using Trace = std::vector<Eigen::VectorXd>;

/// Robustness assigned to the constant-true formula. Finite so arithmetic on
/// robustness values never produces inf - inf.
inline constexpr double kTrueRobustness = 1e12;

/// Atomic proposition {x : alpha(x) >= 0}.
///
/// Affine:          alpha(x) = c^T x + d
/// QuadraticCap:    alpha(x) = d - (x - p)^T Q (x - p)
/// QuadraticFloor:  alpha(x) = (x - p)^T Q (x - p) - d   (negation of a cap)
struct Predicate {
  enum class Kind { Affine, QuadraticCap, QuadraticFloor };

  Kind kind = Kind::Affine;
  Eigen::VectorXd vector;  // c for affine, centre p for quadratic kinds
  Eigen::MatrixXd weight;  // Q, quadratic kinds only
  double level = 0.0;      // d
  std::string name;        // empty for inline comparisons

  static Predicate affine(Eigen::VectorXd c, double d, std::string name = {});
  /// Throws std::invalid_argument unless Q is symmetric PSD (eigenvalues >= -1e-9).
  static Predicate quadratic_cap(Eigen::VectorXd center, Eigen::MatrixXd q, double d,
                                 std::string name = {});

  int dim() const { return static_cast<int>(vector.size()); }
  double value(const Eigen::VectorXd& x) const;
  /// d alpha / dx at x.
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  /// Predicate whose value is exactly -value(x).
  Predicate negated() const;

  bool operator==(const Predicate& other) const;
};

using PredicateRegistry = std::map<std::string, Predicate, std::less<>>;

/// Immutable STL abstract syntax tree. Copies share structure.
class Formula {
 public:
  enum class Op { True, Pred, Not, And, Or, Until, Eventually, Always };

  static Formula truth();
  static Formula pred(Predicate p);
  static Formula negation(Formula f);
  static Formula conjunction(Formula lhs, Formula rhs);
  static Formula disjunction(Formula lhs, Formula rhs);
  /// Throws std::invalid_argument unless 0 <= lo <= hi.
  static Formula until(int lo, int hi, Formula lhs, Formula rhs);
  static Formula eventually(int lo, int hi, Formula f);
  static Formula always(int lo, int hi, Formula f);

  Op op() const;
  const Predicate& predicate() const;
  int lo() const;
  int hi() const;
  /// Operand of unary nodes, left operand of binary nodes.
  const Formula& lhs() const;
  const Formula& rhs() const;

  bool operator==(const Formula& other) const;

 private:
  struct Node;
  explicit Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Smoothing constants for the soft min/max under-approximations.
///
/// Sites are numbered by pre-order traversal of the formula (root = 0). A site
/// override takes precedence over the per-operator default.
struct SmoothingConfig {
  double and_c = 10.0;
  double or_c = 10.0;
  double eventually_c = 10.0;
  double always_c = 10.0;
  double until_c = 10.0;
  std::map<int, double> sites;

  /// Same constant for every operator.
  static SmoothingConfig uniform(double c);

  double constant(Formula::Op op, int site) const;
  /// Throws std::invalid_argument if any constant is not strictly positive.
  void validate() const;
};

/// Number of steps beyond k the trace must extend to evaluate f at k.
int horizon(const Formula& f);

bool eval_boolean(const Formula& f, const Trace& trace, int k = 0);

/// Exact quantitative semantics. True evaluates to `top`.
double robustness(const Formula& f, const Trace& trace, int k = 0,
                  double top = kTrueRobustness);

/// Soft-min / weighted soft-max under-approximation of robustness().
///
/// Requires f in negation normal form and free of True; throws
/// std::invalid_argument otherwise. When `state_gradient` is non-null it is
/// resized to trace.size() and receives d(value)/d(x_t) for every t.
double smooth_robustness(const Formula& f, const Trace& trace, int k,
                         const SmoothingConfig& cfg,
                         std::vector<Eigen::VectorXd>* state_gradient = nullptr);

/// -(1/C) log sum exp(-C a_i). `weights`, if non-null, receives d/da_i.
double soft_min(const double* values, int count, double c, double* weights = nullptr);
/// sum a_i e^{C a_i} / sum e^{C a_i}. `weights`, if non-null, receives d/da_i.
double soft_max(const double* values, int count, double c, double* weights = nullptr);

/// Pushes negations to the leaves; negated predicates are absorbed into the leaf.
Formula to_nnf(const Formula& f);
bool is_nnf(const Formula& f);
bool contains_true(const Formula& f);

/// Predicate leaves in pre-order (duplicates kept).
std::vector<Predicate> predicates_of(const Formula& f);

/// Canonical text form; parse(to_string(f)) == f for parsed formulas.
std::string to_string(const Formula& f);

/// Parses the textual grammar
///
///   formula := "T" | pred | "!" formula | formula "&" formula | formula "|" formula
///            | "G[" int "," int "]" formula | "F[" int "," int "]" formula
///            | formula "U[" int "," int "]" formula | "(" formula ")"
///   pred    := registered name | linear-expr (">=" | "<=") linear-expr
///
/// where linear expressions are sums of terms `c*xi`, `xi` and constants over the
/// state coordinates x1..xn. Precedence from tightest: unary (! G F), U, &, |.
/// Binary operators associate to the left. Throws ParseError.
Formula parse(std::string_view text, const PredicateRegistry& registry, int state_dim);

}  // namespace stldro
