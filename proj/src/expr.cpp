#include "bsr/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "bsr/error.hpp"

namespace bsr {

namespace {

struct OpInfo {
  Op op;
  std::string_view symbol;
  int arity;
};

constexpr std::array<OpInfo, kOpCount> kOpTable = {{
    {Op::Add, "+", 2},
    {Op::Sub, "-", 2},
    {Op::Mul, "*", 2},
    {Op::Div, "/", 2},
    {Op::Pow, "pow", 2},
    {Op::Exp, "exp", 1},
    {Op::Log, "log", 1},
    {Op::Sin, "sin", 1},
    {Op::Cos, "cos", 1},
    {Op::Sqrt, "sqrt", 1},
    {Op::Abs, "abs", 1},
    {Op::Neg, "neg", 1},
}};

constexpr std::array<Op, kOpCount> kAllOps = {Op::Add, Op::Sub,  Op::Mul, Op::Div,
                                              Op::Pow, Op::Exp,  Op::Log, Op::Sin,
                                              Op::Cos, Op::Sqrt, Op::Abs, Op::Neg};

bool is_infix(Op op) { return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div; }

std::string format_constant(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

class Parser {
 public:
  Parser(std::string_view text, std::size_t n_features) : text_(text), n_features_(n_features) {}

  std::vector<Node> run() {
    parse_expr();
    skip_ws();
    if (pos_ < text_.size()) fail("unexpected trailing input");
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_ + 1); }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                   text_[pos_] == '\r'))
      ++pos_;
  }

  // Accepts ASCII '-' and U+2212 MINUS SIGN.
  bool at_minus() const {
    if (pos_ < text_.size() && text_[pos_] == '-') return true;
    return text_.substr(pos_, 3) == "\xE2\x88\x92";
  }
  void eat_minus() { pos_ += text_[pos_] == '-' ? 1 : 3; }

  bool at_digit(std::size_t p) const {
    return p < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[p])) || text_[p] == '.');
  }

  // Each precedence level collects its operands and operators, then writes
  // them out as a left-associated prefix sequence.
  void parse_expr() { parse_chain(/*additive=*/true); }

  void parse_chain(bool additive) {
    std::vector<std::vector<Node>> operands;
    std::vector<Op> ops;
    auto operand = [&] {
      std::vector<Node> saved;
      std::swap(saved, out_);
      if (additive)
        parse_chain(false);
      else
        parse_factor();
      std::swap(saved, out_);
      operands.push_back(std::move(saved));
    };
    operand();
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) break;
      if (additive) {
        if (text_[pos_] == '+') {
          ++pos_;
          ops.push_back(Op::Add);
        } else if (at_minus()) {
          eat_minus();
          ops.push_back(Op::Sub);
        } else {
          break;
        }
      } else {
        if (text_[pos_] == '*') {
          ++pos_;
          ops.push_back(Op::Mul);
        } else if (text_.substr(pos_, 2) == "\xC3\x97") {
          pos_ += 2;
          ops.push_back(Op::Mul);
        } else if (text_[pos_] == '/') {
          ++pos_;
          ops.push_back(Op::Div);
        } else {
          break;
        }
      }
      operand();
    }
    // (((a o1 b) o2 c) o3 d) in prefix order is o3 o2 o1 a b c d.
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) out_.push_back(Node::operation(*it));
    for (std::size_t i = 0; i < operands.size(); ++i) {
      out_.insert(out_.end(), operands[i].begin(), operands[i].end());
    }
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void parse_factor() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      expect(')');
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      parse_identifier();
      return;
    }
    if (at_digit(pos_) || (at_minus() && at_digit(pos_ + (text_[pos_] == '-' ? 1 : 3)))) {
      parse_literal();
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void parse_literal() {
    const std::size_t start = pos_;
    bool negative = false;
    if (at_minus()) {
      eat_minus();
      negative = true;
    }
    const std::size_t digits = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        pos_ = p;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    const char* first = text_.data() + digits;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      pos_ = start;
      fail("malformed number");
    }
    out_.push_back(Node::constant(negative ? -value : value));
  }

  static bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) {
      return std::isdigit(static_cast<unsigned char>(ch)) != 0;
    });
  }

  static std::uint32_t to_index(std::string_view digits, std::size_t where) {
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc()) throw ParseError("index out of range", where);
    return value;
  }

  void parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    const std::string_view ident = text_.substr(start, pos_ - start);

    if (ident.size() > 1 && ident[0] == 'x' && all_digits(ident.substr(1))) {
      const std::uint32_t column = to_index(ident.substr(1), start + 1);
      if (column >= n_features_) {
        throw ParseError("variable " + std::string(ident) + " out of range (" +
                             std::to_string(n_features_) + " feature columns)",
                         start + 1);
      }
      out_.push_back(Node::variable(column));
      return;
    }
    if (ident.size() > 2 && ident.substr(0, 2) == "th" && all_digits(ident.substr(2))) {
      out_.push_back(Node::parameter(to_index(ident.substr(2), start + 1)));
      return;
    }

    const auto op = op_from_symbol(ident);
    if (!op || is_infix(*op)) {
      pos_ = start;
      fail("unknown operator '" + std::string(ident) + "'");
    }
    skip_ws();
    expect('(');
    out_.push_back(Node::operation(*op));
    parse_expr();
    if (arity(*op) == 2) {
      expect(',');
      parse_expr();
    }
    expect(')');
  }

  std::string_view text_;
  std::size_t n_features_;
  std::size_t pos_ = 0;
  std::vector<Node> out_;
};

void print_into(const ExprTree& tree, std::size_t i, std::string& out) {
  const Node& n = tree.node(i);
  switch (n.kind) {
    case NodeKind::Variable:
      out += 'x';
      out += std::to_string(n.index);
      return;
    case NodeKind::Parameter:
      out += parameter_name(n.index);
      return;
    case NodeKind::Constant:
      out += format_constant(n.value);
      return;
    case NodeKind::Operator:
      break;
  }
  const auto kids = tree.children(i);
  if (is_infix(n.op)) {
    out += '(';
    print_into(tree, kids[0], out);
    out += ' ';
    out += symbol(n.op);
    out += ' ';
    print_into(tree, kids[1], out);
    out += ')';
  } else {
    out += symbol(n.op);
    out += '(';
    print_into(tree, kids[0], out);
    if (kids.size() == 2) {
      out += ", ";
      print_into(tree, kids[1], out);
    }
    out += ')';
  }
}

}  // namespace

int arity(Op op) noexcept { return kOpTable[static_cast<std::size_t>(op)].arity; }

std::string_view symbol(Op op) noexcept { return kOpTable[static_cast<std::size_t>(op)].symbol; }

std::optional<Op> op_from_symbol(std::string_view text) noexcept {
  for (const auto& info : kOpTable)
    if (info.symbol == text) return info.op;
  if (text == "\xE2\x88\x92") return Op::Sub;
  if (text == "\xC3\x97") return Op::Mul;
  return std::nullopt;
}

const std::array<Op, kOpCount>& all_ops() noexcept { return kAllOps; }

// ---------------------------------------------------------------------------
// OperatorBasis

OperatorBasis::OperatorBasis(std::vector<Op> ops) {
  for (Op op : ops) {
    if (std::find(ops_.begin(), ops_.end(), op) != ops_.end())
      throw ValidationError("operator '" + std::string(symbol(op)) + "' listed twice in basis");
    ops_.push_back(op);
    (arity(op) == 1 ? unary_ : binary_).push_back(op);
  }
}

OperatorBasis OperatorBasis::defaults() {
  return OperatorBasis({Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow, Op::Exp, Op::Log, Op::Sin,
                        Op::Cos, Op::Sqrt});
}

OperatorBasis OperatorBasis::from_symbols(const std::vector<std::string>& symbols) {
  std::vector<Op> ops;
  for (const auto& s : symbols) {
    const auto op = op_from_symbol(s);
    if (!op) throw ValidationError("unknown operator '" + s + "' in basis");
    ops.push_back(*op);
  }
  return OperatorBasis(std::move(ops));
}

bool OperatorBasis::contains(Op op) const noexcept {
  return std::find(ops_.begin(), ops_.end(), op) != ops_.end();
}

std::vector<std::string> OperatorBasis::symbols() const {
  std::vector<std::string> out;
  for (Op op : ops_) out.emplace_back(symbol(op));
  return out;
}

// ---------------------------------------------------------------------------
// ExprTree

std::string parameter_name(std::uint32_t id) { return "th" + std::to_string(id); }

ExprTree::ExprTree(std::vector<Node> prefix) : nodes_(std::move(prefix)) {
  if (nodes_.empty()) throw ValidationError("empty expression tree");
  std::size_t open = 1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (open == 0) throw ValidationError("prefix sequence has trailing nodes");
    const Node& n = nodes_[i];
    --open;
    open += static_cast<std::size_t>(n.child_count());
    switch (n.kind) {
      case NodeKind::Operator:
        ++op_counts_[static_cast<std::size_t>(n.op)];
        break;
      case NodeKind::Variable:
        max_variable_ = std::max(max_variable_, static_cast<int>(n.index));
        break;
      case NodeKind::Parameter:
        ++param_leaves_;
        if (std::find(param_ids_.begin(), param_ids_.end(), n.index) == param_ids_.end())
          param_ids_.push_back(n.index);
        break;
      case NodeKind::Constant:
        has_constants_ = true;
        break;
    }
  }
  if (open != 0) throw ValidationError("prefix sequence is missing operands");

  std::vector<int> stack;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    int d = 0;
    for (int c = 0; c < it->child_count(); ++c) {
      d = std::max(d, stack.back() + 1);
      stack.pop_back();
    }
    stack.push_back(d);
  }
  depth_ = stack.back();
}

int ExprTree::total_operators() const noexcept {
  int total = 0;
  for (int c : op_counts_) total += c;
  return total;
}

std::size_t ExprTree::subtree_end(std::size_t i) const {
  std::size_t open = 1;
  std::size_t j = i;
  while (open > 0) {
    open = open - 1 + static_cast<std::size_t>(nodes_.at(j).child_count());
    ++j;
  }
  return j;
}

ExprTree ExprTree::subtree(std::size_t i) const {
  const auto end = subtree_end(i);
  return ExprTree(std::vector<Node>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                    nodes_.begin() + static_cast<std::ptrdiff_t>(end)));
}

ExprTree ExprTree::replace_subtree(std::size_t i, const ExprTree& replacement) const {
  const auto end = subtree_end(i);
  std::vector<Node> out;
  out.reserve(nodes_.size() - (end - i) + replacement.size());
  out.insert(out.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
  out.insert(out.end(), replacement.nodes_.begin(), replacement.nodes_.end());
  out.insert(out.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
  return ExprTree(std::move(out));
}

std::vector<int> ExprTree::node_depths() const {
  std::vector<int> depths(nodes_.size());
  // Stack of (depth of pending child slots, remaining slots).
  std::vector<std::pair<int, int>> open;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const int d = open.empty() ? 0 : open.back().first;
    depths[i] = d;
    if (!open.empty() && --open.back().second == 0) open.pop_back();
    if (nodes_[i].child_count() > 0) open.emplace_back(d + 1, nodes_[i].child_count());
  }
  return depths;
}

std::vector<std::size_t> ExprTree::children(std::size_t i) const {
  std::vector<std::size_t> kids;
  std::size_t c = i + 1;
  for (int k = 0; k < nodes_.at(i).child_count(); ++k) {
    kids.push_back(c);
    c = subtree_end(c);
  }
  return kids;
}

// ---------------------------------------------------------------------------

ExprTree parse_expression(std::string_view text, std::size_t n_features) {
  return ExprTree(Parser(text, n_features).run());
}

std::string print_expression(const ExprTree& tree) {
  std::string out;
  print_into(tree, 0, out);
  return out;
}

double evaluate(const ExprTree& tree, const ParamVector& params, std::span<const double> x) {
  if (tree.max_variable() >= 0 && x.size() <= static_cast<std::size_t>(tree.max_variable()))
    throw ValidationError("feature row has " + std::to_string(x.size()) + " entries, tree needs " +
                          std::to_string(tree.max_variable() + 1));
  std::unordered_map<std::uint32_t, double> theta;
  for (auto id : tree.parameter_ids()) {
    const auto it = params.values.find(parameter_name(id));
    if (it == params.values.end()) throw ValidationError("missing parameter " + parameter_name(id));
    theta[id] = it->second;
  }
  std::vector<double> stack;
  const auto& nodes = tree.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    switch (it->kind) {
      case NodeKind::Variable: stack.push_back(x[it->index]); break;
      case NodeKind::Parameter: stack.push_back(theta[it->index]); break;
      case NodeKind::Constant: stack.push_back(it->value); break;
      case NodeKind::Operator: {
        const double a = stack.back();
        stack.pop_back();
        if (arity(it->op) == 1) {
          stack.push_back(apply_op(it->op, a));
        } else {
          const double b = stack.back();
          stack.pop_back();
          stack.push_back(apply_op(it->op, a, b));
        }
        break;
      }
    }
  }
  return stack.back();
}

ExprTree normalize_parameters(const ExprTree& tree) {
  std::vector<Node> nodes = tree.nodes();
  const auto& ids = tree.parameter_ids();
  bool identity = true;
  for (std::size_t i = 0; i < ids.size(); ++i) identity = identity && ids[i] == i;
  if (identity) return tree;
  for (auto& n : nodes) {
    if (n.kind != NodeKind::Parameter) continue;
    const auto pos = std::find(ids.begin(), ids.end(), n.index) - ids.begin();
    n.index = static_cast<std::uint32_t>(pos);
  }
  return ExprTree(std::move(nodes));
}

std::string structure_signature(const ExprTree& tree) {
  return print_expression(normalize_parameters(tree));
}

bool same_shape(const ExprTree& a, std::size_t a_begin, const ExprTree& b, std::size_t b_begin) {
  const std::size_t a_end = a.subtree_end(a_begin);
  const std::size_t b_end = b.subtree_end(b_begin);
  if (a_end - a_begin != b_end - b_begin) return false;
  for (std::size_t i = 0; i < a_end - a_begin; ++i) {
    const Node& x = a.node(a_begin + i);
    const Node& y = b.node(b_begin + i);
    if (x.kind != y.kind) return false;
    switch (x.kind) {
      case NodeKind::Operator:
        if (x.op != y.op) return false;
        break;
      case NodeKind::Variable:
        if (x.index != y.index) return false;
        break;
      case NodeKind::Constant:
        if (x.value != y.value) return false;
        break;
      case NodeKind::Parameter:
        break;
    }
  }
  return true;
}

}  // namespace bsr
