#pragma once

// Expression trees over a finite operator basis.
//
// A tree is stored as a flat vector of nodes in prefix (pre-order) order, so a
// subtree is always a contiguous range and structural equality is a vector
// comparison. Trees are immutable once constructed; every structural cache is
// computed by the constructor.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bsr {

enum class Op : std::uint8_t { Add, Sub, Mul, Div, Pow, Exp, Log, Sin, Cos, Sqrt, Abs, Neg };

inline constexpr std::size_t kOpCount = 12;

int arity(Op op) noexcept;
std::string_view symbol(Op op) noexcept;
std::optional<Op> op_from_symbol(std::string_view text) noexcept;
const std::array<Op, kOpCount>& all_ops() noexcept;

// Scalar semantics shared by every evaluator. Domain violations (log of a
// non-positive value, division by zero, 0^negative, sqrt of a negative) yield
// NaN; overflow yields an infinity. Both count as non-finite.
inline double apply_op(Op op, double a, double b = 0.0) noexcept {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return b == 0.0 ? nan : a / b;
    case Op::Pow: return (a == 0.0 && b < 0.0) ? nan : std::pow(a, b);
    case Op::Exp: return std::exp(a);
    case Op::Log: return a <= 0.0 ? nan : std::log(a);
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Sqrt: return a < 0.0 ? nan : std::sqrt(a);
    case Op::Abs: return std::fabs(a);
    case Op::Neg: return -a;
  }
  return nan;
}

using OpCounts = std::array<int, kOpCount>;

// The set of operators a run may use. Fixed for the duration of a run.
class OperatorBasis {
 public:
  OperatorBasis() = default;
  explicit OperatorBasis(std::vector<Op> ops);

  // {+, -, *, /, pow, exp, log, sin, cos, sqrt}
  static OperatorBasis defaults();
  static OperatorBasis from_symbols(const std::vector<std::string>& symbols);

  bool contains(Op op) const noexcept;
  bool empty() const noexcept { return ops_.empty(); }
  std::size_t size() const noexcept { return ops_.size(); }
  std::span<const Op> ops() const noexcept { return ops_; }
  std::span<const Op> of_arity(int a) const noexcept { return a == 1 ? unary_ : binary_; }
  std::vector<std::string> symbols() const;

 private:
  std::vector<Op> ops_;
  std::vector<Op> unary_;
  std::vector<Op> binary_;
};

enum class NodeKind : std::uint8_t { Operator, Variable, Parameter, Constant };

struct Node {
  NodeKind kind = NodeKind::Parameter;
  Op op = Op::Add;
  std::uint32_t index = 0;  // feature column (Variable) or parameter id (Parameter)
  double value = 0.0;       // Constant only

  static Node operation(Op o) { return {NodeKind::Operator, o, 0, 0.0}; }
  static Node variable(std::uint32_t column) { return {NodeKind::Variable, Op::Add, column, 0.0}; }
  static Node parameter(std::uint32_t id) { return {NodeKind::Parameter, Op::Add, id, 0.0}; }
  static Node constant(double v) { return {NodeKind::Constant, Op::Add, 0, v}; }

  bool is_leaf() const noexcept { return kind != NodeKind::Operator; }
  int child_count() const noexcept { return kind == NodeKind::Operator ? arity(op) : 0; }

  friend bool operator==(const Node&, const Node&) = default;
};

// Parameter id 7 is spelled "th7".
std::string parameter_name(std::uint32_t id);

class ExprTree {
 public:
  // Throws ValidationError unless `prefix` encodes exactly one complete tree.
  explicit ExprTree(std::vector<Node> prefix);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // k: number of distinct parameter names.
  std::size_t param_count() const noexcept { return param_ids_.size(); }
  // Distinct parameter ids in order of first (left-to-right) appearance.
  const std::vector<std::uint32_t>& parameter_ids() const noexcept { return param_ids_; }
  std::size_t parameter_leaf_count() const noexcept { return param_leaves_; }

  const OpCounts& operator_counts() const noexcept { return op_counts_; }
  int operator_count(Op op) const noexcept { return op_counts_[static_cast<std::size_t>(op)]; }
  int total_operators() const noexcept;

  // Edges on the longest root-to-leaf path; a single leaf has depth 0.
  int depth() const noexcept { return depth_; }
  // Highest variable column referenced, or -1.
  int max_variable() const noexcept { return max_variable_; }
  bool has_constants() const noexcept { return has_constants_; }

  // One past the last node of the subtree rooted at `i`.
  std::size_t subtree_end(std::size_t i) const;
  ExprTree subtree(std::size_t i) const;
  ExprTree replace_subtree(std::size_t i, const ExprTree& replacement) const;
  // Depth of every node measured from the root.
  std::vector<int> node_depths() const;
  // Start index of each child of node `i`.
  std::vector<std::size_t> children(std::size_t i) const;

  friend bool operator==(const ExprTree& a, const ExprTree& b) { return a.nodes_ == b.nodes_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_ids_;
  std::size_t param_leaves_ = 0;
  OpCounts op_counts_{};
  int depth_ = 0;
  int max_variable_ = -1;
  bool has_constants_ = false;
};

// theta_i together with the noise scale sigma (profiled, never a tree leaf).
struct ParamVector {
  std::map<std::string, double> values;
  double sigma = 0.0;
};

// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ident '(' expr [',' expr] ')' | '(' expr ')' | atom
//   atom   := 'x' digits | 'th' digits | decimal-literal
// pow is written pow(a, b). A '-' immediately followed by a digit in factor
// position is a signed literal. Literals are frozen constants.
ExprTree parse_expression(std::string_view text, std::size_t n_features);

// Canonical fully-parenthesized form; parse_expression inverts it exactly.
std::string print_expression(const ExprTree& tree);

// Throws ValidationError for a missing parameter or a short feature row.
double evaluate(const ExprTree& tree, const ParamVector& params, std::span<const double> x);

// Renames distinct parameters th0, th1, ... in left-to-right order.
ExprTree normalize_parameters(const ExprTree& tree);

// Identical for trees that differ only by parameter naming.
std::string structure_signature(const ExprTree& tree);

// Nodes [a_begin, subtree end) and [b_begin, ...) have the same shape and
// labels, treating every parameter leaf as interchangeable.
bool same_shape(const ExprTree& a, std::size_t a_begin, const ExprTree& b, std::size_t b_begin);

}  // namespace bsr
