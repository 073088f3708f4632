#pragma once

// Shared generators and reference computations for the unit tests. Nothing
// here calls into the library's own tree growth or evaluation code.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"
#include "bsr/random.hpp"

namespace testing {

using bsr::Node;
using bsr::NodeKind;
using bsr::Op;

struct TreeGen {
  std::vector<Op> ops;
  std::size_t n_features = 1;
  int max_depth = 3;
  double op_prob = 0.6;
  double const_prob = 0.0;
  bool share_params = false;  // reuse earlier parameter ids at random
};

inline void gen_nodes(const TreeGen& g, int depth_left, std::mt19937_64& rng, std::vector<Node>& out,
                      std::uint32_t& next_param) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (depth_left > 0 && !g.ops.empty() && u(rng) < g.op_prob) {
    const Op op = g.ops[rng() % g.ops.size()];
    out.push_back(Node::operation(op));
    for (int c = 0; c < bsr::arity(op); ++c) gen_nodes(g, depth_left - 1, rng, out, next_param);
    return;
  }
  const double r = u(rng);
  if (r < g.const_prob) {
    // Short decimals keep printing exact; include negatives.
    const double v = std::round(std::uniform_real_distribution<double>(-20.0, 20.0)(rng) * 8.0) / 8.0;
    out.push_back(Node::constant(v));
  } else if (r < g.const_prob + (1.0 - g.const_prob) / 2.0) {
    out.push_back(Node::variable(static_cast<std::uint32_t>(rng() % g.n_features)));
  } else if (g.share_params && next_param > 0 && u(rng) < 0.3) {
    out.push_back(Node::parameter(static_cast<std::uint32_t>(rng() % next_param)));
  } else {
    out.push_back(Node::parameter(next_param++));
  }
}

inline bsr::ExprTree random_tree(const TreeGen& g, std::mt19937_64& rng) {
  std::vector<Node> nodes;
  std::uint32_t next = 0;
  gen_nodes(g, g.max_depth, rng, nodes, next);
  return bsr::ExprTree(std::move(nodes));
}

// Straightforward recursive evaluation with its own operator semantics.
inline double ref_eval(const std::vector<Node>& nodes, std::size_t& i, const std::map<std::uint32_t, double>& theta,
                       const std::vector<double>& x) {
  const Node n = nodes[i++];
  const double nan = std::nan("");
  switch (n.kind) {
    case NodeKind::Variable: return x[n.index];
    case NodeKind::Parameter: return theta.at(n.index);
    case NodeKind::Constant: return n.value;
    case NodeKind::Operator: break;
  }
  const double a = ref_eval(nodes, i, theta, x);
  if (bsr::arity(n.op) == 1) {
    switch (n.op) {
      case Op::Exp: return std::exp(a);
      case Op::Log: return a > 0 ? std::log(a) : nan;
      case Op::Sin: return std::sin(a);
      case Op::Cos: return std::cos(a);
      case Op::Sqrt: return a >= 0 ? std::sqrt(a) : nan;
      case Op::Abs: return std::fabs(a);
      case Op::Neg: return -a;
      default: return nan;
    }
  }
  const double b = ref_eval(nodes, i, theta, x);
  switch (n.op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return b != 0 ? a / b : nan;
    case Op::Pow: return (a == 0 && b < 0) ? nan : std::pow(a, b);
    default: return nan;
  }
}

inline double ref_eval(const bsr::ExprTree& t, const std::map<std::uint32_t, double>& theta,
                       const std::vector<double>& x) {
  std::size_t i = 0;
  return ref_eval(t.nodes(), i, theta, x);
}

// y = a + b x + sigma * noise with x uniform on [-5, 5).
inline bsr::Dataset line_data(std::size_t n, double a, double b, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> x(n), y(n);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = bsr::uniform(rng, -5.0, 5.0);
    y[k] = a + b * x[k] + sigma * bsr::standard_normal(rng);
  }
  return bsr::Dataset::from_xy(std::move(x), std::move(y));
}

inline bsr::ParamVector params(std::map<std::string, double> v) {
  bsr::ParamVector p;
  p.values = std::move(v);
  return p;
}

// Every tree of the grammar up to `depth`, with distinct normalized
// parameters, keyed by signature.
inline std::map<std::string, bsr::ExprTree> all_trees(const bsr::OperatorBasis& basis, int depth) {
  std::vector<std::vector<Node>> level = {{Node::variable(0)}, {Node::parameter(0)}};
  for (int d = 1; d <= depth; ++d) {
    std::vector<std::vector<Node>> next = {{Node::variable(0)}, {Node::parameter(0)}};
    for (Op op : basis.of_arity(1))
      for (const auto& a : level) {
        std::vector<Node> t{Node::operation(op)};
        t.insert(t.end(), a.begin(), a.end());
        next.push_back(t);
      }
    for (Op op : basis.of_arity(2))
      for (const auto& a : level)
        for (const auto& b : level) {
          std::vector<Node> t{Node::operation(op)};
          t.insert(t.end(), a.begin(), a.end());
          t.insert(t.end(), b.begin(), b.end());
          next.push_back(t);
        }
    level = next;
  }
  std::map<std::string, bsr::ExprTree> out;
  for (auto nodes : level) {
    std::uint32_t id = 0;
    for (auto& n : nodes)
      if (n.kind == NodeKind::Parameter) n.index = id++;
    bsr::ExprTree t(std::move(nodes));
    out.emplace(bsr::structure_signature(t), t);
  }
  return out;
}

}  // namespace testing
