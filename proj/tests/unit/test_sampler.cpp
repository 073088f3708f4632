#include <doctest.h>

#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "bsr/error.hpp"
#include "bsr/experiments.hpp"
#include "bsr/sampler.hpp"
#include "support.hpp"

using namespace bsr;

namespace {

GrammarConfig restricted_grammar() {
  GrammarConfig g;
  g.basis = OperatorBasis({Op::Add});
  g.max_depth = 2;
  return g;
}

double log_q(MoveType m, const ExprTree& a, const ExprTree& b, const GrammarConfig& g) {
  switch (m) {
    case MoveType::Relabel: return relabel_log_q(a, b, g);
    case MoveType::PruneGraft: return graft_log_q(a, b, g);
    case MoveType::RootFlip: return root_flip_log_q(a, b, g);
    case MoveType::LeafSwap: return leaf_swap_log_q(a, b, g);
  }
  return 0.0;
}

std::shared_ptr<const Evaluation> fixed_energy(double e) {
  auto ev = std::make_shared<Evaluation>();
  ev->energy = e;
  return ev;
}

// Data for the restricted-grammar checks: noisy enough that several models
// carry visible posterior mass.
Dataset restricted_data() { return testing::line_data(20, 1.0, 0.3, 3.0, 5); }

struct Exact {
  std::map<std::string, double> p;
};

Exact exact_posterior(EnergyFunction& energy, const GrammarConfig& g) {
  Exact ex;
  double lo = std::numeric_limits<double>::infinity();
  std::map<std::string, double> e;
  for (const auto& [sig, t] : testing::all_trees(g.basis, g.max_depth)) {
    e[sig] = energy.evaluate(t)->energy;
    lo = std::min(lo, e[sig]);
  }
  double z = 0.0;
  for (auto& [sig, v] : e) z += std::exp(-(v - lo));
  for (auto& [sig, v] : e) ex.p[sig] = std::exp(-(v - lo)) / z;
  return ex;
}

double total_variation(const Exact& ex, const SamplerTrace& trace) {
  std::map<std::string, double> freq;
  for (const auto& r : trace.records) freq[structure_signature(r.tree)] += 1.0 / static_cast<double>(trace.records.size());
  double tv = 0.0;
  for (const auto& [sig, p] : ex.p) tv += std::fabs(p - (freq.count(sig) ? freq[sig] : 0.0));
  for (const auto& [sig, f] : freq)
    if (!ex.p.count(sig)) tv += f;
  return tv / 2.0;
}

}  // namespace

TEST_CASE("relabel swaps an operator symmetrically") {
  GrammarConfig g;
  g.basis = OperatorBasis({Op::Add, Op::Mul});
  Rng rng(1);
  const auto t = parse_expression("th0 + x0", 1);
  const auto p = propose(t, MoveType::Relabel, g, rng);
  REQUIRE(p.has_value());
  CHECK(print_expression(p->tree) == "(th0 * x0)");
  CHECK(p->log_proposal_ratio == 0.0);
}

TEST_CASE("relabel is unavailable with a single symbol per arity") {
  GrammarConfig g;
  g.basis = OperatorBasis({Op::Add});
  Rng rng(1);
  CHECK_FALSE(propose(parse_expression("th0 + x0", 1), MoveType::Relabel, g, rng).has_value());
  CHECK_FALSE(propose(parse_expression("th0", 1), MoveType::Relabel, g, rng).has_value());
}

TEST_CASE("root strip of a unary root") {
  GrammarConfig g;  // default basis of ten operators
  const auto from = parse_expression("exp(x0)", 1);
  const auto to = parse_expression("x0", 1);
  // strip: choose strip (1/2), one child. wrap back: choose wrap (1/2), pick exp (1/10).
  CHECK(std::fabs(root_flip_log_q(from, to, g) - std::log(0.5)) < 1e-12);
  CHECK(std::fabs(root_flip_log_q(to, from, g) - std::log(0.05)) < 1e-12);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto p = propose(from, MoveType::RootFlip, g, rng);
    if (!p || !(p->tree == to)) continue;
    CHECK(std::fabs(p->log_proposal_ratio + std::log(10.0)) < 1e-12);
    return;
  }
  FAIL("strip never proposed");
}

TEST_CASE("regrowing an identical subtree has ratio zero") {
  const auto g = restricted_grammar();
  Rng rng(4);
  const auto t = parse_expression("x0 + th0", 1);
  int seen = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto p = propose(t, MoveType::PruneGraft, g, rng);
    if (p && p->tree == t) {
      CHECK(p->log_proposal_ratio == 0.0);
      ++seen;
    }
  }
  CHECK(seen > 0);
}

TEST_CASE("property: proposal frequencies match the exact proposal probabilities") {
  GrammarConfig g;
  g.basis = OperatorBasis({Op::Add, Op::Mul, Op::Exp});
  g.max_depth = 2;
  const std::vector<std::string> starts = {"th0", "x0", "exp(x0)", "th0 + x0", "exp(th0) * x0",
                                           "(x0 + th0) * exp(th1)", "x0 * x0"};
  const int draws = 100000;
  for (const auto& s : starts) {
    const auto from = parse_expression(s, 1);
    for (MoveType m : {MoveType::Relabel, MoveType::PruneGraft, MoveType::RootFlip, MoveType::LeafSwap}) {
      Rng rng(7);
      std::map<std::string, std::pair<int, ExprTree>> counts;
      for (int i = 0; i < draws; ++i) {
        const auto p = propose(from, m, g, rng);
        if (!p) continue;
        CHECK(p->tree.depth() <= g.max_depth);
        auto [it, fresh] = counts.try_emplace(structure_signature(p->tree), 0, p->tree);
        ++it->second.first;
        if (fresh) {
          // The reported ratio uses the same functions checked below.
          const double want = log_q(m, p->tree, from, g) - log_q(m, from, p->tree, g);
          CHECK(std::fabs(p->log_proposal_ratio - want) < 1e-12);
        }
      }
      for (const auto& [sig, entry] : counts) {
        const double q = std::exp(log_q(m, from, entry.second, g));
        const double f = static_cast<double>(entry.first) / draws;
        const double se = std::sqrt(q * (1.0 - q) / draws);
        INFO(s << " " << to_string(m) << " -> " << print_expression(entry.second) << " q=" << q << " f=" << f);
        CHECK(std::fabs(f - q) <= 5.0 * se + 1e-4);
      }
    }
  }
}

TEST_CASE("property: every move has a reverse and the grammar is irreducible") {
  GrammarConfig g;
  g.basis = OperatorBasis({Op::Add, Op::Mul, Op::Exp});
  g.max_depth = 2;
  const auto trees = testing::all_trees(g.basis, 2);
  REQUIRE(trees.size() == 302);
  std::vector<const ExprTree*> list;
  std::map<std::string, std::size_t> index;
  for (const auto& [sig, t] : trees) {
    index[sig] = list.size();
    list.push_back(&t);
  }
  std::vector<std::vector<std::size_t>> adj(list.size());
  for (std::size_t i = 0; i < list.size(); ++i)
    for (std::size_t j = 0; j < list.size(); ++j) {
      if (i == j) continue;
      bool any = false;
      for (MoveType m : {MoveType::Relabel, MoveType::PruneGraft, MoveType::RootFlip, MoveType::LeafSwap}) {
        const bool fwd = std::isfinite(log_q(m, *list[i], *list[j], g));
        const bool back = std::isfinite(log_q(m, *list[j], *list[i], g));
        CHECK(fwd == back);
        any = any || fwd;
      }
      if (any) adj[i].push_back(j);
    }
  std::vector<bool> seen(list.size(), false);
  std::queue<std::size_t> q;
  q.push(index.at(structure_signature(parse_expression("th0", 1))));
  seen[q.front()] = true;
  while (!q.empty()) {
    const auto i = q.front();
    q.pop();
    for (auto j : adj[i])
      if (!seen[j]) {
        seen[j] = true;
        q.push(j);
      }
  }
  CHECK(std::count(seen.begin(), seen.end(), true) == static_cast<long>(list.size()));
}

TEST_CASE("Metropolis acceptance rates") {
  Rng rng(8);
  int accepted = 0;
  for (int i = 0; i < 10000; ++i) accepted += metropolis_accept(std::log(2.0), 0.0, 1.0, rng);
  CHECK(std::fabs(accepted / 10000.0 - 0.5) < 0.02);
  for (int i = 0; i < 1000; ++i) CHECK(metropolis_accept(0.0, 0.0, 1.0, rng));
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(metropolis_accept(std::numeric_limits<double>::infinity(), 0.0, 1.0, rng));
}

TEST_CASE("mh_step on a fixed energy table") {
  SamplerConfig cfg;
  cfg.grammar.basis = OperatorBasis({Op::Add, Op::Mul});
  cfg.moves = {1.0, 0.0, 0.0, 0.0};
  const auto a = parse_expression("th0 + x0", 1);
  const auto b = parse_expression("th0 * x0", 1);

  SUBCASE("uphill by log 2 is accepted half the time") {
    TableEnergy energy({{structure_signature(a), 1.0}, {structure_signature(b), 1.0 + std::log(2.0)}});
    Rng rng(9);
    MoveStats stats;
    int accepted = 0;
    for (int i = 0; i < 10000; ++i) {
      ChainState s{a, energy.evaluate(a), 1.0, 0};
      if (mh_step(s, energy, cfg, rng, stats)) {
        ++accepted;
        CHECK(s.tree == b);
      } else {
        CHECK(s.tree == a);
      }
    }
    CHECK(std::fabs(accepted / 10000.0 - 0.5) < 0.02);
    CHECK(stats.proposed[0] == 10000);
    CHECK(stats.accepted[0] == static_cast<std::uint64_t>(accepted));
  }
  SUBCASE("flat and infinite energies") {
    TableEnergy flat({{structure_signature(a), 2.0}, {structure_signature(b), 2.0}});
    TableEnergy wall({{structure_signature(a), 2.0}});
    Rng rng(10);
    MoveStats stats;
    for (int i = 0; i < 200; ++i) {
      ChainState s{a, flat.evaluate(a), 1.0, 0};
      CHECK(mh_step(s, flat, cfg, rng, stats));
      ChainState w{a, wall.evaluate(a), 1.0, 0};
      CHECK_FALSE(mh_step(w, wall, cfg, rng, stats));
      CHECK(w.tree == a);
    }
  }
}

TEST_CASE("replica swaps") {
  const auto t = parse_expression("th0", 1);
  SUBCASE("Bernoulli rate with exponent -log 4") {
    Rng rng(12);
    SwapStats stats;
    int accepted = 0;
    for (int i = 0; i < 10000; ++i) {
      std::vector<ChainState> chains{{t, fixed_energy(1.0), 1.0, 0}, {t, fixed_energy(1.0 + 2.0 * std::log(4.0)), 0.5, 1}};
      if (swap_step(chains, 0, rng, stats)) {
        ++accepted;
        CHECK(chains[0].replica == 1);
        CHECK(chains[0].beta == 1.0);
        CHECK(chains[0].energy() > chains[1].energy());
      }
    }
    CHECK(std::fabs(accepted / 10000.0 - 0.25) < 0.02);
    CHECK(stats.attempted[0] == 10000);
  }
  SUBCASE("equal energies always swap") {
    Rng rng(13);
    SwapStats stats;
    std::vector<ChainState> chains{{t, fixed_energy(3.0), 1.0, 0}, {t, fixed_energy(3.0), 0.5, 1}};
    for (int i = 0; i < 100; ++i) CHECK(swap_step(chains, 0, rng, stats));
  }
  SUBCASE("single temperature is a no-op") {
    Rng rng(14);
    SwapStats stats;
    std::vector<ChainState> chains{{t, fixed_energy(3.0), 1.0, 0}};
    CHECK_FALSE(swap_step(chains, 0, rng, stats));
    CHECK(chains[0].replica == 0);
  }
}

TEST_CASE("map_model picks the first minimum") {
  SamplerTrace trace;
  for (double e : {5.0, 3.0, 4.0}) {
    TraceRecord r;
    r.energy = e;
    trace.records.push_back(r);
  }
  CHECK(&map_model(trace) == &trace.records[1]);
  for (auto& r : trace.records) r.energy = 2.0;
  CHECK(&map_model(trace) == &trace.records[0]);
  CHECK_THROWS(map_model(SamplerTrace{}));
}

TEST_CASE("sampler configuration is validated") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.betas = {0.9, 0.5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.betas = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.moves.relabel = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.thinning = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.initial_expression = "exp(exp(exp(x0)))";
  PriorEnergy prior(PriorHyperparams::surrogate(bad.grammar.basis));
  CHECK_THROWS_AS(run_chains(prior, bad), ValidationError);
}

TEST_CASE("restricted grammar: stationarity and detailed balance") {
  const auto g = restricted_grammar();
  REQUIRE(testing::all_trees(g.basis, 2).size() == 38);
  const auto data = restricted_data();
  ScoreConfig sc;
  sc.fit.clamp_zero_sse = true;
  PosteriorEnergy energy(data, PriorHyperparams::uniform(g.basis, 1.0, 0.0), sc);
  const auto exact = exact_posterior(energy, g);

  SamplerConfig cfg;
  cfg.grammar = g;
  cfg.betas = {1.0};
  cfg.burn_in = 5000;
  cfg.steps = 1000000;
  cfg.thinning = 1;
  cfg.seed = 17;
  const auto trace = run_chains(energy, cfg);
  CHECK(total_variation(exact, trace) < 0.05);

  std::map<std::pair<std::string, std::string>, double> flow;
  for (std::size_t i = 1; i < trace.records.size(); ++i) {
    const auto a = structure_signature(trace.records[i - 1].tree);
    const auto b = structure_signature(trace.records[i].tree);
    if (a != b) flow[{a, b}] += 1.0;
  }
  int pairs = 0;
  for (const auto& [key, n] : flow) {
    const auto rev = flow.find({key.second, key.first});
    const double m = rev == flow.end() ? 0.0 : rev->second;
    if (rev != flow.end() && key.first > key.second) continue;
    INFO(key.first << " <-> " << key.second << " " << n << " vs " << m);
    CHECK(std::fabs(n - m) <= 3.0 * std::max(1.0, std::sqrt(n + m)));
    ++pairs;
  }
  CHECK(pairs > 20);
}

TEST_CASE("restricted grammar: swaps leave the stationary distribution alone") {
  const auto g = restricted_grammar();
  const auto data = restricted_data();
  ScoreConfig sc;
  sc.fit.clamp_zero_sse = true;
  PosteriorEnergy energy(data, PriorHyperparams::uniform(g.basis, 1.0, 0.0), sc);
  const auto exact = exact_posterior(energy, g);

  SamplerConfig cfg;
  cfg.grammar = g;
  cfg.burn_in = 2000;
  cfg.steps = 100000;
  cfg.thinning = 1;
  cfg.seed = 23;
  cfg.betas = {1.0};
  const auto single = run_chains(energy, cfg);
  cfg.betas = SamplerConfig::geometric_ladder(4, 1.5);
  const auto tempered = run_chains(energy, cfg);
  CHECK(total_variation(exact, single) < 0.07);
  CHECK(total_variation(exact, tempered) < 0.07);
  CHECK(tempered.swaps.attempted.size() == 3);
  CHECK(tempered.swaps.accepted[0] > 0);
}

TEST_CASE("chains are deterministic and respect the depth cap") {
  const auto data = testing::line_data(30, -2.3, 4.1, 0.5, 31);
  SamplerConfig cfg;
  cfg.steps = 1500;
  cfg.burn_in = 200;
  cfg.thinning = 5;
  cfg.betas = SamplerConfig::geometric_ladder(3, 1.5);
  cfg.seed = 99;
  const auto hp = PriorHyperparams::surrogate(cfg.grammar.basis);
  const auto a = sample_posterior(data, hp, {}, cfg);
  const auto b = sample_posterior(data, hp, {}, cfg);
  cfg.threads = 3;
  const auto c = sample_posterior(data, hp, {}, cfg);
  std::ostringstream sa, sb, sc;
  write_trace(sa, a);
  write_trace(sb, b);
  write_trace(sc, c);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str() == sc.str());
  CHECK(a.records.size() == 300);
  for (const auto& r : a.records) {
    CHECK(r.tree.depth() <= cfg.grammar.max_depth);
    CHECK(r.beta == 1.0);
    CHECK(r.step >= 200);
    CHECK((r.step - 200) % 5 == 0);
  }

  std::istringstream in(sa.str());
  const auto back = read_trace(in);
  REQUIRE(back.records.size() == a.records.size());
  std::ostringstream again;
  write_trace(again, back);
  CHECK(again.str() == sa.str());
}

TEST_CASE("posterior sampling identifies the generating model") {
  SamplerConfig cfg;
  cfg.steps = 6000;
  cfg.burn_in = 1000;
  cfg.betas = SamplerConfig::geometric_ladder(4, 1.5);
  cfg.seed = 5;
  const auto hp = PriorHyperparams::surrogate(cfg.grammar.basis);

  SUBCASE("constant process") {
    GeneratorSpec spec;
    spec.model = "th0";
    spec.theta = {{"th0", 31.0}};
    spec.sigma = 0.05;
    spec.n = 1000;
    spec.seed = 2;
    const auto trace = sample_posterior(generate(spec), hp, {}, cfg);
    const auto& best = map_model(trace);
    CHECK(structure_signature(best.tree) == structure_signature(parse_expression("th0", 1)));
  }
  SUBCASE("linear process") {
    GeneratorSpec spec;
    spec.model = "th0 + th1 * x0";
    spec.theta = {{"th0", -2.3}, {"th1", 4.1}};
    spec.sigma = 0.05;
    spec.n = 1000;
    spec.seed = 3;
    const auto data = generate(spec);
    const auto trace = sample_posterior(data, hp, {}, cfg);
    const auto& best = map_model(trace);
    REQUIRE(best.fit.has_value());
    CHECK(same_family(best.tree, best.fit->theta_hat, spec.tree(), spec.params(), -5.0, 5.0));
  }
}
