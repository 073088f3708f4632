#pragma once

// Metropolis sampling over expression trees with parallel tempering.
//
// Target at inverse temperature beta: exp(-beta * E(m)), where E is the
// description length for posterior sampling or -log p(m) for prior sampling.
// Four move types are mixed with state-independent probabilities; each move
// computes its exact Hastings ratio, summing over every way the proposal
// could have produced the candidate, so each move type is reversible on its
// own and the mixture is too.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"
#include "bsr/score.hpp"

namespace bsr {

using Rng = std::mt19937_64;

enum class MoveType : std::uint8_t { Relabel = 0, PruneGraft = 1, RootFlip = 2, LeafSwap = 3 };
inline constexpr std::size_t kMoveTypes = 4;
const char* to_string(MoveType m) noexcept;

struct MoveProbabilities {
  double relabel = 0.25;
  double prune_graft = 0.35;
  double root_flip = 0.15;
  double leaf_swap = 0.25;

  std::array<double, kMoveTypes> as_array() const { return {relabel, prune_graft, root_flip, leaf_swap}; }
};

// The bounded model space and the random-subtree growth process.
struct GrammarConfig {
  OperatorBasis basis = OperatorBasis::defaults();
  std::size_t n_features = 1;
  int max_depth = 2;
  // Probability that a grown node with depth budget left is an operator.
  double grow_operator_prob = 0.3;
  // Probability that a grown leaf is a variable rather than a parameter.
  double grow_variable_prob = 0.5;

  void validate() const;
};

struct SamplerConfig {
  std::vector<double> betas = geometric_ladder(6, 1.5);
  int steps = 20000;
  int burn_in = 3000;
  int thinning = 10;
  int swap_period = 10;  // 0 disables swaps
  MoveProbabilities moves;
  GrammarConfig grammar;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string initial_expression = "th0";

  // beta_t = ratio^-(t-1), t = 1..n
  static std::vector<double> geometric_ladder(int n, double ratio);
  void validate() const;
};

// ---------------------------------------------------------------------------
// Tree growth and proposals

// Random tree within `depth_limit`; parameters get fresh distinct ids.
ExprTree grow_tree(const GrammarConfig& g, int depth_limit, Rng& rng);
// log probability that grow_tree(depth_limit) emits the subtree at `begin`.
// Parameter ids are ignored; constants and foreign operators give -inf.
double grow_log_probability(const ExprTree& tree, std::size_t begin, const GrammarConfig& g, int depth_limit);

struct Proposal {
  ExprTree tree{{Node::parameter(0)}};
  double log_proposal_ratio = 0.0;  // log q(new -> old) - log q(old -> new)
};

// Trees returned have normalized parameter names. nullopt means the move
// cannot be applied to this tree (counted as a rejected step).
std::optional<Proposal> propose(const ExprTree& tree, MoveType move, const GrammarConfig& g, Rng& rng);

// Exact proposal log-probabilities for each move type, used by propose() and
// exposed for testing. -inf when `to` is unreachable from `from`.
double relabel_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g);
double graft_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g);
double root_flip_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g);
double leaf_swap_log_q(const ExprTree& from, const ExprTree& to, const GrammarConfig& g);

// ---------------------------------------------------------------------------
// Energies

struct Evaluation {
  double energy = 0.0;  // +inf for invalid models
  std::optional<ScoredModel> model;
};

class EnergyFunction {
 public:
  virtual ~EnergyFunction() = default;
  // Must be deterministic in the tree structure; may be called concurrently.
  virtual std::shared_ptr<const Evaluation> evaluate(const ExprTree& tree) = 0;
};

// Description length with fits cached by structure signature. Each structure
// is fitted with a seed derived from (cfg.fit.seed, signature), so cache hits
// and misses give identical results.
class PosteriorEnergy final : public EnergyFunction {
 public:
  PosteriorEnergy(const Dataset& data, PriorHyperparams hp, ScoreConfig cfg);
  std::shared_ptr<const Evaluation> evaluate(const ExprTree& tree) override;
  std::size_t cache_size() const;

 private:
  const Dataset& data_;
  PriorHyperparams hp_;
  ScoreConfig cfg_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<const Evaluation>> cache_;
};

// -log p(m) only.
class PriorEnergy final : public EnergyFunction {
 public:
  explicit PriorEnergy(PriorHyperparams hp) : hp_(std::move(hp)) {}
  std::shared_ptr<const Evaluation> evaluate(const ExprTree& tree) override;

 private:
  PriorHyperparams hp_;
};

// Energy looked up by structure signature; unknown structures get +inf.
class TableEnergy final : public EnergyFunction {
 public:
  explicit TableEnergy(std::unordered_map<std::string, double> table) : table_(std::move(table)) {}
  std::shared_ptr<const Evaluation> evaluate(const ExprTree& tree) override;

 private:
  std::unordered_map<std::string, double> table_;
};

// ---------------------------------------------------------------------------
// Chains

struct ChainState {
  ExprTree tree{{Node::parameter(0)}};
  std::shared_ptr<const Evaluation> eval;
  double beta = 1.0;
  std::size_t replica = 0;  // follows the state through swaps

  double energy() const { return eval->energy; }
};

struct MoveStats {
  std::array<std::uint64_t, kMoveTypes> proposed{};
  std::array<std::uint64_t, kMoveTypes> invalid{};
  std::array<std::uint64_t, kMoveTypes> accepted{};

  void merge(const MoveStats& other);
};

struct SwapStats {
  std::vector<std::uint64_t> attempted;  // per adjacent pair (t, t+1)
  std::vector<std::uint64_t> accepted;
};

// Draws u ~ U(0,1) and accepts iff log u < -beta * delta + log_ratio.
bool metropolis_accept(double delta_energy, double log_proposal_ratio, double beta, Rng& rng);

// One Metropolis-Hastings update at state.beta. Returns true if accepted.
bool mh_step(ChainState& state, EnergyFunction& energy, const SamplerConfig& cfg, Rng& rng, MoveStats& stats);

// Attempts to exchange the states of temperature slots t and t+1. A ladder
// with one temperature makes this a no-op.
bool swap_step(std::vector<ChainState>& chains, std::size_t t, Rng& rng, SwapStats& stats);

// ---------------------------------------------------------------------------
// Traces

struct TraceRecord {
  std::size_t step = 0;
  std::size_t chain = 0;
  double beta = 1.0;
  ExprTree tree{{Node::parameter(0)}};
  std::optional<FitResult> fit;
  std::optional<ScoreBreakdown> score;
  double energy = 0.0;
};

struct SamplerTrace {
  std::vector<TraceRecord> records;  // beta = 1 chain only
  MoveStats moves;
  SwapStats swaps;
  std::size_t n_features = 1;
};

// Runs every temperature chain; records the beta = 1 slot every `thinning`
// steps after burn-in. Deterministic in cfg.seed regardless of cfg.threads.
SamplerTrace run_chains(EnergyFunction& energy, const SamplerConfig& cfg);

SamplerTrace sample_posterior(const Dataset& data, const PriorHyperparams& hp, const ScoreConfig& score_cfg,
                              const SamplerConfig& cfg);

// Minimum description length record; ties go to the earliest.
const TraceRecord& map_model(const SamplerTrace& trace);

// One JSON object per line.
void write_trace(std::ostream& out, const SamplerTrace& trace);
SamplerTrace read_trace(std::istream& in);

}  // namespace bsr
