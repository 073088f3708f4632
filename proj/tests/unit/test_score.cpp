#include <doctest.h>

#include <cmath>

#include "bsr/error.hpp"
#include "bsr/score.hpp"
#include "support.hpp"

using namespace bsr;

namespace {

// Reference values from tests/oracle/derive.py.
constexpr double kNegLogLik = 3.648617937451771;
constexpr double kBic1 = 9.494460452239762;
constexpr double kDl = 4.747230226119881;

Dataset y123() { return Dataset::from_xy({0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}); }

PriorHyperparams zero_prior() { return PriorHyperparams::uniform(OperatorBasis::defaults(), 0.0, 0.0); }

bool close_rel(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::fabs(b); }

}  // namespace

TEST_CASE("log prior examples") {
  PriorHyperparams hp = PriorHyperparams::uniform(OperatorBasis({Op::Add}), 3.0, 0.1);
  CHECK(log_prior(parse_expression("th0", 1), hp) == 0.0);
  CHECK(std::fabs(log_prior(parse_expression("th0 + x0", 1), hp) + 3.1) < 1e-12);
  CHECK(std::fabs(log_prior(parse_expression("th0 + x0 + th1", 1), hp) + 6.4) < 1e-12);
  CHECK_THROWS_AS(log_prior(parse_expression("th0 * x0", 1), hp), ValidationError);
}

TEST_CASE("prior tables are validated against the basis") {
  const OperatorBasis basis({Op::Add, Op::Exp});
  PriorHyperparams hp = PriorHyperparams::surrogate(basis);
  CHECK_NOTHROW(hp.validate(basis));
  CHECK(hp.alpha.at(Op::Add) == 3.0);
  CHECK(hp.beta.at(Op::Exp) == 0.2);
  hp.beta[Op::Add] = -1.0;
  CHECK_THROWS_AS(hp.validate(basis), ValidationError);
  hp.beta.erase(Op::Add);
  CHECK_THROWS_AS(hp.validate(basis), ValidationError);
}

TEST_CASE("bic1 examples") {
  CHECK(std::fabs(bic1(-kNegLogLik, 1, 3) - kBic1) < 1e-9);
  CHECK(bic1(0.0, 0, 1) == 0.0);
  for (std::size_t k : {0u, 1u, 4u})
    CHECK(std::fabs(bic1(-10.0, k, 200) - bic1(-10.0, k, 100) - static_cast<double>(k + 1) * std::log(2.0)) < 1e-12);
}

TEST_CASE("description length examples") {
  const auto d = y123();
  const auto s = description_length(parse_expression("th0", 1), d, zero_prior(), {});
  CHECK(std::fabs(s.neg_log_likelihood_mle - kNegLogLik) < 1e-9);
  CHECK(std::fabs(s.bic1 - kBic1) < 1e-9);
  CHECK(std::fabs(s.description_length - kDl) < 1e-9);
  CHECK(s.variant_used == BicVariant::B1);
  CHECK_FALSE(s.bic2.has_value());
  CHECK_FALSE(s.fisher_log_det.has_value());

  // A shared parameter fits the same mean while carrying one '+' priced at 1.
  const auto hp = PriorHyperparams::uniform(OperatorBasis({Op::Add}), 1.0, 0.0);
  const auto with_prior = description_length(parse_expression("th0 + th0", 1), d, hp, {});
  CHECK(with_prior.k == 1);
  CHECK(std::fabs(with_prior.neg_log_prior - 1.0) < 1e-12);
  CHECK(std::fabs(with_prior.description_length - (kDl + 1.0)) < 1e-9);
}

TEST_CASE("posterior weights") {
  const std::vector<double> equal{2.0, 2.0};
  CHECK(posterior_weights(equal) == std::vector<double>{0.5, 0.5});
  const std::vector<double> three{0.0, std::log(3.0)};
  const auto w = posterior_weights(three);
  CHECK(std::fabs(w[0] - 0.75) < 1e-12);
  CHECK(std::fabs(w[1] - 0.25) < 1e-12);
  const std::vector<double> one{123.0};
  CHECK(posterior_weights(one) == std::vector<double>{1.0});
  const std::vector<double> huge{1e6, 1e6 + std::log(3.0)};
  CHECK(std::fabs(posterior_weights(huge)[0] - 0.75) < 1e-9);
}

TEST_CASE("Fisher term: constant model closed form") {
  const auto d = Dataset::from_xy({0, 1, 2, 3, 4}, {1.0, 2.0, 3.0, 5.0, 8.0});
  const auto tree = parse_expression("th0", 1);
  const auto fit = fit_params(tree, d, {});
  const double s2 = fit.sse / 5.0;
  const auto got = fisher_log_det(tree, fit, d);
  REQUIRE(got.has_value());
  CHECK(close_rel(*got, std::log(2.0 / (s2 * s2)), 1e-4));
}

TEST_CASE("Fisher term: linear model closed form") {
  std::vector<double> x{-3, -2, -1, 0, 1, 2, 3};
  double var = 0;
  for (double v : x) var += v * v;
  var /= static_cast<double>(x.size());
  for (auto& v : x) v /= std::sqrt(var);
  const std::vector<double> y{0.3, -1.0, 2.2, 0.1, 1.9, 0.4, 3.0};
  const auto d = Dataset::from_xy(x, y);
  const auto tree = parse_expression("th0 + th1 * x0", 1);
  const auto fit = fit_params(tree, d, {});
  const double s2 = fit.sse / static_cast<double>(x.size());
  const auto got = fisher_log_det(tree, fit, d);
  REQUIRE(got.has_value());
  CHECK(close_rel(*got, std::log(2.0 / (s2 * s2 * s2)), 1e-4));
}

TEST_CASE("Fisher term is absent on a flat direction and B1 is used") {
  const auto d = Dataset::from_xy({0, 1, 2, 3}, {1.0, 2.0, 3.0, 5.0});
  const auto tree = parse_expression("th0 + th1", 1);
  const auto fit = fit_params(tree, d, {});
  CHECK_FALSE(fisher_log_det(tree, fit, d).has_value());
  ScoreConfig cfg;
  cfg.use_fisher = true;
  const auto s = score_fit(tree, fit, d, zero_prior(), cfg);
  CHECK(s.variant_used == BicVariant::B1);
  CHECK_FALSE(s.bic2.has_value());
}

TEST_CASE("B2 adds the Fisher term") {
  const auto d = Dataset::from_xy({0, 1, 2, 3, 4}, {1.0, 2.0, 3.0, 5.0, 8.0});
  ScoreConfig cfg;
  cfg.use_fisher = true;
  const auto s = description_length(parse_expression("th0", 1), d, zero_prior(), cfg);
  REQUIRE(s.bic2.has_value());
  CHECK(s.variant_used == BicVariant::B2);
  CHECK(*s.bic2 == s.bic1 + *s.fisher_log_det);
  CHECK(s.description_length == *s.bic2 / 2.0 + s.neg_log_prior);
  CHECK(s.fisher_normalization == "per-datum");
}

TEST_CASE("exact fits raise unless clamped") {
  const auto d = y123();
  const auto tree = parse_expression("th0 + th1 * x0", 1);
  CHECK_THROWS_AS(description_length(tree, d, zero_prior(), {}), DegenerateFitError);
  ScoreConfig cfg;
  cfg.fit.clamp_zero_sse = true;
  CHECK(std::isfinite(description_length(tree, d, zero_prior(), cfg).description_length));
}

TEST_CASE("property: score identities hold on random fitted models") {
  std::mt19937_64 rng(51);
  testing::TreeGen g;
  g.ops = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Exp, Op::Log, Op::Sin, Op::Cos, Op::Sqrt};
  g.max_depth = 2;
  const auto basis = OperatorBasis(g.ops);
  const auto hp = PriorHyperparams::surrogate(basis);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto d = testing::line_data(15, 1.0, -0.5, 0.7, 1000 + static_cast<std::uint64_t>(i));
    const auto tree = testing::random_tree(g, rng);
    ScoredModel m;
    try {
      m = score_model(tree, d, hp, {});
    } catch (const NumericalError&) {
      continue;
    }
    const auto& s = m.score;
    const double b1 = 2.0 * s.neg_log_likelihood_mle + static_cast<double>(s.k + 1) * std::log(15.0);
    CHECK(std::fabs(s.bic1 - b1) <= 1e-12 * std::fabs(b1));
    const double dl = s.bic1 / 2.0 + s.neg_log_prior;
    CHECK(std::fabs(s.description_length - dl) <= 1e-12 * std::fabs(dl));
    CHECK(s.k == tree.param_count());
    CHECK(std::fabs(s.neg_log_prior + log_prior(tree, hp)) < 1e-12);
    ++checked;
  }
  CHECK(checked > 800);
}

TEST_CASE("property: smaller SSE gives smaller description length") {
  const auto d = testing::line_data(25, 0.0, 1.0, 1.0, 61);
  const auto tree = parse_expression("th0 * exp(th1 * x0)", 1);
  const auto hp = PriorHyperparams::surrogate(OperatorBasis::defaults());
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    FitResult a, b;
    a.sse = u(rng);
    b.sse = u(rng);
    if (a.sse == b.sse) continue;
    a.log_likelihood = log_likelihood_mle(25, a.sse);
    b.log_likelihood = log_likelihood_mle(25, b.sse);
    const double la = score_fit(tree, a, d, hp, {}).description_length;
    const double lb = score_fit(tree, b, d, hp, {}).description_length;
    CHECK((a.sse < b.sse) == (la < lb));
  }
}

TEST_CASE("property: shifting every alpha keeps rankings within an operator count") {
  const std::vector<Op> ops{Op::Add, Op::Mul, Op::Exp};
  const OperatorBasis basis(ops);
  std::vector<std::vector<Node>> shapes = {{Node::variable(0)}, {Node::parameter(0)}};
  for (int depth = 1; depth <= 2; ++depth) {
    std::vector<std::vector<Node>> next = {{Node::variable(0)}, {Node::parameter(0)}};
    for (const auto& a : shapes) {
      std::vector<Node> t{Node::operation(Op::Exp)};
      t.insert(t.end(), a.begin(), a.end());
      next.push_back(t);
    }
    for (Op op : {Op::Add, Op::Mul})
      for (const auto& a : shapes)
        for (const auto& b : shapes) {
          std::vector<Node> t{Node::operation(op)};
          t.insert(t.end(), a.begin(), a.end());
          t.insert(t.end(), b.begin(), b.end());
          next.push_back(t);
        }
    shapes = next;
  }
  REQUIRE(shapes.size() == 302);

  const auto d = testing::line_data(20, 0.5, 1.5, 1.0, 71);
  const auto hp = PriorHyperparams::surrogate(basis);
  auto shifted = hp;
  for (auto& [op, a] : shifted.alpha) a += 2.5;
  ScoreConfig cfg;
  cfg.fit.clamp_zero_sse = true;

  struct Entry {
    int ops;
    double base;
    double moved;
  };
  std::vector<Entry> entries;
  for (auto nodes : shapes) {
    std::uint32_t id = 0;
    for (auto& n : nodes)
      if (n.kind == NodeKind::Parameter) n.index = id++;
    const ExprTree tree(std::move(nodes));
    FitResult fit;
    try {
      fit = fit_params(tree, d, cfg.fit);
    } catch (const NumericalError&) {
      continue;
    }
    entries.push_back({tree.total_operators(), score_fit(tree, fit, d, hp, cfg).description_length,
                       score_fit(tree, fit, d, shifted, cfg).description_length});
  }
  REQUIRE(entries.size() > 250);
  int compared = 0;
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      if (entries[i].ops != entries[j].ops) continue;
      const double before = entries[i].base - entries[j].base;
      const double after = entries[i].moved - entries[j].moved;
      if (std::fabs(before) < 1e-9) continue;
      CHECK((before < 0) == (after < 0));
      ++compared;
    }
  CHECK(compared > 1000);
}
