#include "bsr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <thread>

#include "bsr/error.hpp"
#include "bsr/random.hpp"
#include "bsr/serialize.hpp"

namespace bsr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Ids handed to freshly grown parameters before renormalization; far above
// any id a normalized tree can hold.
constexpr std::uint32_t kFreshParamBase = 1u << 30;

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool same_label(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Operator: return a.op == b.op;
    case NodeKind::Variable: return a.index == b.index;
    case NodeKind::Constant: return a.value == b.value;
    case NodeKind::Parameter: return true;
  }
  return false;
}

void grow_nodes(const GrammarConfig& g, int depth_limit, Rng& rng, std::vector<Node>& out,
                std::uint32_t& next_id) {
  if (depth_limit > 0 && uniform01(rng) < g.grow_operator_prob) {
    const Op op = g.basis.ops()[pick(rng, g.basis.size())];
    out.push_back(Node::operation(op));
    for (int c = 0; c < arity(op); ++c) grow_nodes(g, depth_limit - 1, rng, out, next_id);
    return;
  }
  if (g.n_features > 0 && uniform01(rng) < g.grow_variable_prob) {
    out.push_back(Node::variable(static_cast<std::uint32_t>(pick(rng, g.n_features))));
  } else {
    out.push_back(Node::parameter(next_id++));
  }
}

double grow_lp(const ExprTree& t, std::size_t& i, const GrammarConfig& g, int depth_limit) {
  const Node& n = t.node(i++);
  const double p_op = g.grow_operator_prob;
  switch (n.kind) {
    case NodeKind::Operator: {
      if (depth_limit <= 0 || !g.basis.contains(n.op)) return kNegInf;
      double lp = std::log(p_op) - std::log(static_cast<double>(g.basis.size()));
      for (int c = 0; c < arity(n.op); ++c) {
        const double child = grow_lp(t, i, g, depth_limit - 1);
        if (child == kNegInf) return kNegInf;  // i is no longer meaningful
        lp += child;
      }
      return lp;
    }
    case NodeKind::Variable: {
      if (g.n_features == 0 || n.index >= g.n_features) return kNegInf;
      const double leaf = depth_limit > 0 ? std::log1p(-p_op) : 0.0;
      return leaf + std::log(g.grow_variable_prob) - std::log(static_cast<double>(g.n_features));
    }
    case NodeKind::Parameter: {
      const double leaf = depth_limit > 0 ? std::log1p(-p_op) : 0.0;
      return leaf + (g.n_features > 0 ? std::log1p(-g.grow_variable_prob) : 0.0);
    }
    case NodeKind::Constant:
      return kNegInf;
  }
  return kNegInf;
}

// Positions (root first) of the chain from the root down to the lowest node
// whose subtree contains every difference between a and b. Empty when the
// trees have the same shape. Ancestors of that node sit at the same prefix
// index in both trees, since everything before them in prefix order agrees.
std::vector<std::size_t> difference_path(const ExprTree& a, const ExprTree& b) {
  std::vector<std::size_t> path;
  if (same_shape(a, 0, b, 0)) return path;
  std::size_t i = 0;
  for (;;) {
    path.push_back(i);
    const Node& na = a.node(i);
    const Node& nb = b.node(i);
    if (!same_label(na, nb) || na.is_leaf()) return path;
    const auto ka = a.children(i);
    const auto kb = b.children(i);
    std::size_t differing = 0;
    std::size_t which = 0;
    for (std::size_t c = 0; c < ka.size(); ++c) {
      if (!same_shape(a, ka[c], b, kb[c])) {
        ++differing;
        which = c;
      }
    }
    if (differing != 1) return path;
    i = ka[which];
  }
}

// Single differing node between same-size trees, or nullopt if the trees
// differ elsewhere too (or not at all).
std::optional<std::size_t> single_difference(const ExprTree& a, const ExprTree& b) {
  if (a.size() != b.size()) return std::nullopt;
  std::optional<std::size_t> where;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (same_label(a.node(i), b.node(i))) continue;
    if (where) return std::nullopt;
    where = i;
  }
  if (!where) return std::nullopt;
  // Equal sizes plus a single relabelled node keeps the shape only when the
  // arity matches.
  if (a.node(*where).child_count() != b.node(*where).child_count()) return std::nullopt;
  return where;
}

std::size_t swappable_leaves(const ExprTree& t) {
  std::size_t n = 0;
  for (const auto& node : t.nodes())
    if (node.kind == NodeKind::Variable || node.kind == NodeKind::Parameter) ++n;
  return n;
}

ExprTree finalize(std::vector<Node> nodes) { return normalize_parameters(ExprTree(std::move(nodes))); }

ExprTree grown_subtree(const GrammarConfig& g, int depth_limit, Rng& rng) {
  std::vector<Node> nodes;
  std::uint32_t next = kFreshParamBase;
  grow_nodes(g, depth_limit, rng, nodes, next);
  return ExprTree(std::move(nodes));
}

void check_initial_tree(const ExprTree& t, const GrammarConfig& g) {
  if (t.depth() > g.max_depth) throw ValidationError("initial expression exceeds sampler.max_depth");
  if (t.has_constants()) throw ValidationError("initial expression may not contain literal constants");
  if (t.parameter_leaf_count() != t.param_count())
    throw ValidationError("initial expression may not share parameters");
  for (Op op : all_ops())
    if (t.operator_count(op) > 0 && !g.basis.contains(op))
      throw ValidationError("initial expression uses operator '" + std::string(symbol(op)) +
                            "' outside the basis");
}

TraceRecord make_record(std::size_t step, const ChainState& s) {
  TraceRecord r;
  r.step = step;
  r.chain = s.replica;
  r.beta = s.beta;
  r.tree = s.tree;
  r.energy = s.eval->energy;
  if (s.eval->model) {
    r.fit = s.eval->model->fit;
    r.score = s.eval->model->score;
  }
  return r;
}

}  // namespace

const char* to_string(MoveType m) noexcept {
  switch (m) {
    case MoveType::Relabel: return "relabel";
    case MoveType::PruneGraft: return "prune_graft";
    case MoveType::RootFlip: return "root_flip";
    case MoveType::LeafSwap: return "leaf_swap";
  }
  return "?";
}

void GrammarConfig::validate() const {
  if (basis.empty()) throw ValidationError("operator basis is empty");
  if (max_depth < 0) throw ValidationError("sampler.max_depth must be non-negative");
  if (!(grow_operator_prob >= 0.0 && grow_operator_prob < 1.0))
    throw ValidationError("sampler.grow_operator_prob must be in [0, 1)");
  if (!(grow_variable_prob >= 0.0 && grow_variable_prob <= 1.0))
    throw ValidationError("sampler.grow_variable_prob must be in [0, 1]");
}

std::vector<double> SamplerConfig::geometric_ladder(int n, double ratio) {
  std::vector<double> betas;
  double b = 1.0;
  for (int t = 0; t < n; ++t) {
    betas.push_back(b);
    b /= ratio;
  }
  return betas;
}

void SamplerConfig::validate() const {
  grammar.validate();
  if (betas.empty() || betas.front() != 1.0) throw ValidationError("temperature ladder must start at beta = 1");
  for (std::size_t t = 1; t < betas.size(); ++t)
    if (!(betas[t] < betas[t - 1] && betas[t] > 0.0))
      throw ValidationError("temperature ladder must be strictly decreasing and positive");
  if (steps < 0 || burn_in < 0) throw ValidationError("sampler.steps and sampler.burn_in must be non-negative");
  if (thinning < 1) throw ValidationError("sampler.thinning must be at least 1");
  if (swap_period < 0) throw ValidationError("sampler.swap_period must be non-negative");
  if (threads < 1) throw ValidationError("sampler.threads must be at least 1");
  const auto p = moves.as_array();
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError("move probabilities must be non-negative");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("move probabilities must sum to 1");
}

// ---------------------------------------------------------------------------

ExprTree grow_tree(const GrammarConfig& g, int depth_limit, Rng& rng) {
  std::vector<Node> nodes;
  std::uint32_t next = 0;
  grow_nodes(g, depth_limit, rng, nodes, next);
  return ExprTree(std::move(nodes));
}

double grow_log_probability(const ExprTree& tree, std::size_t begin, const GrammarConfig& g, int depth_limit) {
  std::size_t i = begin;
  return grow_lp(tree, i, g, depth_limit);
}

double relabel_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g) {
  const auto where = single_difference(from, to);
  if (!where) return kNegInf;
  const Node& a = from.node(*where);
  const Node& b = to.node(*where);
  if (a.kind != NodeKind::Operator || b.kind != NodeKind::Operator) return kNegInf;
  if (!g.basis.contains(b.op)) return kNegInf;
  const auto group = g.basis.of_arity(arity(a.op));
  const std::size_t alternatives = group.size() - (g.basis.contains(a.op) ? 1 : 0);
  if (alternatives == 0) return kNegInf;
  return -std::log(static_cast<double>(from.total_operators())) - std::log(static_cast<double>(alternatives));
}

double graft_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g) {
  const double log_n = std::log(static_cast<double>(from.size()));
  double lq = kNegInf;
  auto path = difference_path(from, to);
  if (path.empty()) {
    // Identical shapes: any position can regrow its own subtree.
    const auto depths = from.node_depths();
    for (std::size_t p = 0; p < from.size(); ++p)
      lq = log_sum_exp(lq, grow_log_probability(to, p, g, g.max_depth - depths[p]) - log_n);
    return lq;
  }
  for (std::size_t d = 0; d < path.size(); ++d) {
    const double lp = grow_log_probability(to, path[d], g, g.max_depth - static_cast<int>(d));
    lq = log_sum_exp(lq, lp - log_n);
  }
  return lq;
}

double root_flip_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g) {
  double q = 0.0;
  const double n_ops = static_cast<double>(g.basis.size());
  // wrap: `to` is an operator applied to `from` (plus a grown sibling)
  const Node& top = to.node(0);
  if (top.kind == NodeKind::Operator && g.basis.contains(top.op) && from.depth() + 1 <= g.max_depth) {
    const auto kids = to.children(0);
    if (kids.size() == 1) {
      if (same_shape(to, kids[0], from, 0)) q += 0.5 / n_ops;
    } else {
      if (same_shape(to, kids[0], from, 0))
        q += 0.5 / n_ops * 0.5 * std::exp(grow_log_probability(to, kids[1], g, g.max_depth - 1));
      if (same_shape(to, kids[1], from, 0))
        q += 0.5 / n_ops * 0.5 * std::exp(grow_log_probability(to, kids[0], g, g.max_depth - 1));
    }
  }
  // strip: `to` is one of the root's children
  if (from.node(0).kind == NodeKind::Operator) {
    const auto kids = from.children(0);
    const double share = 0.5 / static_cast<double>(kids.size());
    for (auto c : kids)
      if (same_shape(from, c, to, 0)) q += share;
  }
  return q > 0.0 ? std::log(q) : kNegInf;
}

double leaf_swap_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g) {
  if (from.size() != to.size()) return kNegInf;
  std::optional<std::size_t> where;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (same_label(from.node(i), to.node(i))) continue;
    if (where) return kNegInf;
    where = i;
  }
  if (!where) return kNegInf;
  const Node& a = from.node(*where);
  const Node& b = to.node(*where);
  const double lq = -std::log(static_cast<double>(swappable_leaves(from)));
  if (a.kind == NodeKind::Variable && b.kind == NodeKind::Parameter) return lq;
  if (a.kind == NodeKind::Parameter && b.kind == NodeKind::Variable && b.index < g.n_features)
    return lq - std::log(static_cast<double>(g.n_features));
  return kNegInf;
}

std::optional<Proposal> propose(const ExprTree& tree, MoveType move, const GrammarConfig& g, Rng& rng) {
  std::optional<ExprTree> candidate;
  double (*log_q)(const ExprTree&, const ExprTree&, const GrammarConfig&) = nullptr;

  switch (move) {
    case MoveType::Relabel: {
      log_q = &relabel_log_q;
      std::vector<std::size_t> ops;
      for (std::size_t i = 0; i < tree.size(); ++i)
        if (tree.node(i).kind == NodeKind::Operator) ops.push_back(i);
      if (ops.empty()) return std::nullopt;
      const std::size_t pos = ops[pick(rng, ops.size())];
      const Op current = tree.node(pos).op;
      std::vector<Op> alternatives;
      for (Op o : g.basis.of_arity(arity(current)))
        if (o != current) alternatives.push_back(o);
      if (alternatives.empty()) return std::nullopt;
      std::vector<Node> nodes = tree.nodes();
      nodes[pos].op = alternatives[pick(rng, alternatives.size())];
      candidate = finalize(std::move(nodes));
      break;
    }
    case MoveType::PruneGraft: {
      log_q = &graft_log_q;
      const std::size_t pos = pick(rng, tree.size());
      const int budget = g.max_depth - tree.node_depths()[pos];
      if (budget < 0) return std::nullopt;
      candidate = normalize_parameters(tree.replace_subtree(pos, grown_subtree(g, budget, rng)));
      break;
    }
    case MoveType::RootFlip: {
      log_q = &root_flip_log_q;
      if (uniform01(rng) < 0.5) {
        if (tree.depth() + 1 > g.max_depth) return std::nullopt;
        const Op op = g.basis.ops()[pick(rng, g.basis.size())];
        std::vector<Node> nodes{Node::operation(op)};
        if (arity(op) == 1) {
          nodes.insert(nodes.end(), tree.nodes().begin(), tree.nodes().end());
        } else {
          const ExprTree sibling = grown_subtree(g, g.max_depth - 1, rng);
          if (pick(rng, 2) == 0) {
            nodes.insert(nodes.end(), tree.nodes().begin(), tree.nodes().end());
            nodes.insert(nodes.end(), sibling.nodes().begin(), sibling.nodes().end());
          } else {
            nodes.insert(nodes.end(), sibling.nodes().begin(), sibling.nodes().end());
            nodes.insert(nodes.end(), tree.nodes().begin(), tree.nodes().end());
          }
        }
        candidate = finalize(std::move(nodes));
      } else {
        if (tree.node(0).is_leaf()) return std::nullopt;
        const auto kids = tree.children(0);
        const std::size_t keep = kids.size() == 1 ? kids[0] : kids[pick(rng, 2)];
        candidate = normalize_parameters(tree.subtree(keep));
      }
      break;
    }
    case MoveType::LeafSwap: {
      log_q = &leaf_swap_log_q;
      std::vector<std::size_t> leaves;
      for (std::size_t i = 0; i < tree.size(); ++i) {
        const auto k = tree.node(i).kind;
        if (k == NodeKind::Variable || k == NodeKind::Parameter) leaves.push_back(i);
      }
      if (leaves.empty()) return std::nullopt;
      const std::size_t pos = leaves[pick(rng, leaves.size())];
      std::vector<Node> nodes = tree.nodes();
      if (nodes[pos].kind == NodeKind::Variable) {
        nodes[pos] = Node::parameter(kFreshParamBase);
      } else {
        if (g.n_features == 0) return std::nullopt;
        nodes[pos] = Node::variable(static_cast<std::uint32_t>(pick(rng, g.n_features)));
      }
      candidate = finalize(std::move(nodes));
      break;
    }
  }

  const double forward = log_q(tree, *candidate, g);
  const double backward = log_q(*candidate, tree, g);
  if (forward == kNegInf || backward == kNegInf) {
    // Only reachable for trees outside the grammar (e.g. user-supplied
    // operators missing from the basis); such moves are not reversible.
    return std::nullopt;
  }
  return Proposal{std::move(*candidate), backward - forward};
}

// ---------------------------------------------------------------------------
// Energies

PosteriorEnergy::PosteriorEnergy(const Dataset& data, PriorHyperparams hp, ScoreConfig cfg)
    : data_(data), hp_(std::move(hp)), cfg_(std::move(cfg)) {}

std::shared_ptr<const Evaluation> PosteriorEnergy::evaluate(const ExprTree& tree) {
  const std::string sig = structure_signature(tree);
  {
    std::lock_guard lock(mutex_);
    const auto it = cache_.find(sig);
    if (it != cache_.end()) return it->second;
  }
  auto eval = std::make_shared<Evaluation>();
  ScoreConfig cfg = cfg_;
  cfg.fit.seed = mix_seed(cfg_.fit.seed, fnv1a(sig));
  try {
    eval->model = score_model(normalize_parameters(tree), data_, hp_, cfg);
    eval->energy = eval->model->score.description_length;
    if (!std::isfinite(eval->energy)) eval->energy = kInf;
  } catch (const Error&) {
    eval->model.reset();
    eval->energy = kInf;
  }
  std::lock_guard lock(mutex_);
  return cache_.emplace(sig, std::move(eval)).first->second;
}

std::size_t PosteriorEnergy::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::shared_ptr<const Evaluation> PriorEnergy::evaluate(const ExprTree& tree) {
  auto eval = std::make_shared<Evaluation>();
  try {
    eval->energy = -log_prior(tree, hp_);
  } catch (const Error&) {
    eval->energy = kInf;
  }
  return eval;
}

std::shared_ptr<const Evaluation> TableEnergy::evaluate(const ExprTree& tree) {
  auto eval = std::make_shared<Evaluation>();
  const auto it = table_.find(structure_signature(tree));
  eval->energy = it == table_.end() ? kInf : it->second;
  return eval;
}

// ---------------------------------------------------------------------------
// Chains

void MoveStats::merge(const MoveStats& other) {
  for (std::size_t m = 0; m < kMoveTypes; ++m) {
    proposed[m] += other.proposed[m];
    invalid[m] += other.invalid[m];
    accepted[m] += other.accepted[m];
  }
}

bool metropolis_accept(double delta_energy, double log_proposal_ratio, double beta, Rng& rng) {
  const double u = uniform01(rng);
  const double log_a = -beta * delta_energy + log_proposal_ratio;
  if (std::isnan(log_a)) return false;
  return std::log(u) < log_a;
}

bool mh_step(ChainState& state, EnergyFunction& energy, const SamplerConfig& cfg, Rng& rng, MoveStats& stats) {
  const auto probs = cfg.moves.as_array();
  const double u = uniform01(rng);
  std::size_t m = 0;
  double cumulative = probs[0];
  while (m + 1 < kMoveTypes && u >= cumulative) cumulative += probs[++m];
  // Skip trailing zero-probability moves that rounding could select.
  while (probs[m] == 0.0 && m > 0) --m;

  const auto move = static_cast<MoveType>(m);
  ++stats.proposed[m];
  auto proposal = propose(state.tree, move, cfg.grammar, rng);
  if (!proposal) {
    ++stats.invalid[m];
    return false;
  }
  auto candidate = energy.evaluate(proposal->tree);
  const double delta = candidate->energy - state.eval->energy;
  if (!metropolis_accept(delta, proposal->log_proposal_ratio, state.beta, rng)) return false;
  state.tree = std::move(proposal->tree);
  state.eval = std::move(candidate);
  ++stats.accepted[m];
  return true;
}

bool swap_step(std::vector<ChainState>& chains, std::size_t t, Rng& rng, SwapStats& stats) {
  if (chains.size() < 2 || t + 1 >= chains.size()) return false;
  if (stats.attempted.size() < chains.size() - 1) {
    stats.attempted.resize(chains.size() - 1, 0);
    stats.accepted.resize(chains.size() - 1, 0);
  }
  ++stats.attempted[t];
  ChainState& a = chains[t];
  ChainState& b = chains[t + 1];
  const double log_a = (a.beta - b.beta) * (a.energy() - b.energy());
  const double u = uniform01(rng);
  if (std::isnan(log_a) || !(std::log(u) < log_a)) return false;
  std::swap(a.tree, b.tree);
  std::swap(a.eval, b.eval);
  std::swap(a.replica, b.replica);
  ++stats.accepted[t];
  return true;
}

SamplerTrace run_chains(EnergyFunction& energy, const SamplerConfig& cfg) {
  cfg.validate();
  const ExprTree start =
      normalize_parameters(parse_expression(cfg.initial_expression, cfg.grammar.n_features));
  check_initial_tree(start, cfg.grammar);
  auto start_eval = energy.evaluate(start);
  if (!std::isfinite(start_eval->energy))
    throw NumericalError("initial expression '" + cfg.initial_expression + "' has infinite energy");

  const std::size_t n_chains = cfg.betas.size();
  std::vector<ChainState> chains;
  std::vector<Rng> rngs;
  std::vector<MoveStats> stats(n_chains);
  for (std::size_t t = 0; t < n_chains; ++t) {
    chains.push_back(ChainState{start, start_eval, cfg.betas[t], t});
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(t + 1)};
    rngs.emplace_back(seq);
  }
  std::seed_seq swap_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0u};
  Rng swap_rng(swap_seq);

  SamplerTrace trace;
  trace.n_features = cfg.grammar.n_features;
  trace.swaps.attempted.assign(n_chains > 0 ? n_chains - 1 : 0, 0);
  trace.swaps.accepted.assign(n_chains > 0 ? n_chains - 1 : 0, 0);

  const std::size_t total = static_cast<std::size_t>(cfg.burn_in) + static_cast<std::size_t>(cfg.steps);
  const std::size_t burn_in = static_cast<std::size_t>(cfg.burn_in);
  const std::size_t thinning = static_cast<std::size_t>(cfg.thinning);
  const std::size_t segment = cfg.swap_period > 0 && n_chains > 1 ? static_cast<std::size_t>(cfg.swap_period)
                                                                   : std::max<std::size_t>(total, 1);

  // Chains only interact at swap barriers, so each segment can run the chains
  // in any order (or concurrently) with identical results.
  auto run_segment = [&](std::size_t t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      mh_step(chains[t], energy, cfg, rngs[t], stats[t]);
      if (t == 0 && s >= burn_in && (s - burn_in) % thinning == 0)
        trace.records.push_back(make_record(s, chains[0]));
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), n_chains);
  for (std::size_t begin = 0; begin < total; begin += segment) {
    const std::size_t end = std::min(total, begin + segment);
    if (n_threads <= 1) {
      for (std::size_t t = 0; t < n_chains; ++t) run_segment(t, begin, end);
    } else {
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
          for (std::size_t t = w; t < n_chains; t += n_threads) run_segment(t, begin, end);
        });
      }
      for (auto& th : workers) th.join();
    }
    if (end % segment == 0 && cfg.swap_period > 0)
      for (std::size_t t = 0; t + 1 < n_chains; ++t) swap_step(chains, t, swap_rng, trace.swaps);
  }
  for (const auto& s : stats) trace.moves.merge(s);
  return trace;
}

SamplerTrace sample_posterior(const Dataset& data, const PriorHyperparams& hp, const ScoreConfig& score_cfg,
                              const SamplerConfig& cfg) {
  hp.validate(cfg.grammar.basis);
  if (cfg.grammar.n_features != data.n_features())
    throw ValidationError("sampler grammar has " + std::to_string(cfg.grammar.n_features) +
                          " features but the dataset has " + std::to_string(data.n_features()));
  ScoreConfig sc = score_cfg;
  sc.fit.clamp_zero_sse = true;
  PosteriorEnergy energy(data, hp, sc);
  return run_chains(energy, cfg);
}

const TraceRecord& map_model(const SamplerTrace& trace) {
  if (trace.records.empty()) throw ValidationError("trace is empty");
  const TraceRecord* best = &trace.records.front();
  for (const auto& r : trace.records)
    if (r.energy < best->energy) best = &r;
  return *best;
}

// ---------------------------------------------------------------------------
// Trace files

void write_trace(std::ostream& out, const SamplerTrace& trace) {
  for (const auto& r : trace.records) {
    nlohmann::json j = {{"step", r.step},
                        {"chain", r.chain},
                        {"beta", r.beta},
                        {"expr", print_expression(r.tree)},
                        {"n_features", trace.n_features},
                        {"energy", real_to_json(r.energy)}};
    if (r.fit) j["fit"] = to_json(*r.fit);
    if (r.score) j["score"] = to_json(*r.score);
    out << j.dump() << '\n';
  }
}

SamplerTrace read_trace(std::istream& in) {
  SamplerTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.step = j.at("step").get<std::size_t>();
      r.chain = j.at("chain").get<std::size_t>();
      r.beta = j.at("beta").get<double>();
      const auto nf = j.at("n_features").get<std::size_t>();
      if (first) trace.n_features = nf;
      first = false;
      r.tree = parse_expression(j.at("expr").get<std::string>(), nf);
      r.energy = real_from_json(j.at("energy"));
      if (j.contains("fit")) r.fit = fit_result_from_json(j.at("fit"));
      if (j.contains("score")) r.score = score_breakdown_from_json(j.at("score"));
      trace.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace bsr
