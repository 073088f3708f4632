#include "bsr/prior.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>

#include "bsr/error.hpp"
#include "bsr/random.hpp"

namespace bsr {

namespace {

struct Draw {
  std::vector<ExprTree> trees;
  std::string last;  // final chain state, to continue from
};

Draw draw_prior(const PriorHyperparams& hp, const GrammarConfig& grammar, std::size_t count, std::uint64_t seed,
                int burn_in, int thinning, const std::string& start) {
  SamplerConfig cfg;
  cfg.betas = {1.0};
  cfg.swap_period = 0;
  cfg.grammar = grammar;
  cfg.seed = seed;
  cfg.burn_in = burn_in;
  cfg.thinning = thinning;
  cfg.steps = static_cast<int>(count) * thinning;
  cfg.initial_expression = start;
  PriorEnergy energy(hp);
  SamplerTrace trace = run_chains(energy, cfg);
  Draw d;
  d.trees.reserve(trace.records.size());
  for (auto& r : trace.records) d.trees.push_back(std::move(r.tree));
  if (d.trees.size() > count) d.trees.erase(d.trees.begin() + static_cast<std::ptrdiff_t>(count), d.trees.end());
  d.last = print_expression(d.trees.back());
  return d;
}

// max over operators of the error on the mean and on the mean square.
double max_error(const std::map<Op, OperatorMoments>& achieved, const TargetMoments& t, const PriorFitConfig& cfg,
                 std::map<Op, double>* per_op) {
  double worst = 0.0;
  for (const auto& [op, target] : t.targets) {
    const auto& a = achieved.at(op);
    const double e_mean = moment_error(a.mean, target.mean, cfg.tol, cfg.abs_floor);
    const double e_sq = moment_error(a.mean_square, target.mean_square, cfg.tol, cfg.abs_floor);
    if (per_op) (*per_op)[op] = e_mean;
    worst = std::max({worst, e_mean, e_sq});
  }
  return worst;
}

std::string leaf_start(const GrammarConfig& g) { return g.n_features > 0 ? "x0" : "th0"; }

constexpr int kCheckEvery = 10;

// The moments respond to (alpha, beta) through minus the covariance of the
// statistics (n_o, n_o^2), which is close to singular because n and n^2 move
// together. Solving against that covariance gives a Newton step for the
// moment equations; plain gradient steps crawl along the weak direction.
Eigen::VectorXd newton_step(const std::vector<ExprTree>& trees, const std::map<Op, OperatorMoments>& est,
                            const TargetMoments& targets) {
  const auto dim = static_cast<Eigen::Index>(2 * targets.targets.size());
  Eigen::VectorXd mean(dim), gap(dim);
  Eigen::Index j = 0;
  for (const auto& [op, target] : targets.targets) {
    mean[j] = est.at(op).mean;
    mean[j + 1] = est.at(op).mean_square;
    gap[j] = est.at(op).mean - target.mean;
    gap[j + 1] = est.at(op).mean_square - target.mean_square;
    j += 2;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd v(dim);
  for (const auto& t : trees) {
    j = 0;
    for (const auto& [op, target] : targets.targets) {
      const double n = t.operator_count(op);
      v[j] = n;
      v[j + 1] = n * n;
      j += 2;
    }
    v -= mean;
    cov.noalias() += v * v.transpose();
  }
  cov /= static_cast<double>(std::max<std::size_t>(trees.size() - 1, 1));
  for (Eigen::Index i = 0; i < dim; ++i) cov(i, i) += 1e-3 * cov(i, i) + 1e-4;
  Eigen::VectorXd step = cov.ldlt().solve(gap);
  if (!step.allFinite()) step = gap;
  return step.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace

void TargetMoments::validate() const {
  if (targets.empty()) throw ValidationError("target moments are empty");
  for (const auto& [op, m] : targets) {
    if (!(m.mean >= 0.0) || !std::isfinite(m.mean))
      throw ValidationError("target mean for '" + std::string(symbol(op)) + "' must be finite and non-negative");
    if (!std::isfinite(m.mean_square) || m.mean_square < m.mean * m.mean)
      throw ValidationError("target mean_square for '" + std::string(symbol(op)) +
                            "' is below mean^2 (negative variance)");
  }
}

OperatorBasis TargetMoments::basis() const {
  std::vector<Op> ops;
  for (const auto& [op, m] : targets) ops.push_back(op);
  return OperatorBasis(std::move(ops));
}

void PriorFitConfig::validate() const {
  if (!(eta0 > 0.0) || !(tau > 0.0)) throw ValidationError("prior.eta0 and prior.tau must be positive");
  if (max_iters < 1) throw ValidationError("prior.max_iters must be at least 1");
  if (!(tol > 0.0) || !(abs_floor >= 0.0)) throw ValidationError("prior.tol must be positive");
  if (samples < 1 || iter_samples < 1) throw ValidationError("prior sample counts must be positive");
  if (burn_in < 0 || thinning < 1) throw ValidationError("prior.burn_in >= 0 and prior.thinning >= 1 required");
}

std::vector<ExprTree> sample_prior_models(const PriorHyperparams& hp, const GrammarConfig& grammar, std::size_t count,
                                          std::uint64_t seed, int burn_in, int thinning) {
  if (count < 1) throw ValidationError("sample count must be at least 1");
  hp.validate(grammar.basis);
  return draw_prior(hp, grammar, count, seed, burn_in, thinning, leaf_start(grammar)).trees;
}

std::map<Op, OperatorMoments> operator_moments(const std::vector<ExprTree>& trees, const OperatorBasis& basis) {
  std::map<Op, OperatorMoments> m;
  for (Op op : basis.ops()) m[op] = {};
  if (trees.empty()) return m;
  for (const auto& t : trees) {
    for (Op op : basis.ops()) {
      const double n = t.operator_count(op);
      m[op].mean += n;
      m[op].mean_square += n * n;
    }
  }
  const double k = static_cast<double>(trees.size());
  for (auto& [op, v] : m) {
    v.mean /= k;
    v.mean_square /= k;
  }
  return m;
}

double moment_error(double achieved, double target, double tol, double abs_floor) {
  return std::fabs(achieved - target) / std::max(target, abs_floor / tol);
}

PriorFitReport fit_prior_hyperparams(const TargetMoments& targets, const GrammarConfig& grammar,
                                     const PriorFitConfig& cfg, std::optional<PriorHyperparams> start) {
  targets.validate();
  cfg.validate();
  GrammarConfig g = grammar;
  g.basis = targets.basis();
  g.validate();

  PriorFitReport report;
  report.hp = start ? *start : PriorHyperparams::uniform(g.basis, 1.0, 0.0);
  report.hp.validate(g.basis);

  std::string state = leaf_start(g);
  int burn_in = cfg.burn_in;
  // Iterates are noisy at iter_samples draws, so convergence is judged on
  // the average of the trailing half of the iterates.
  std::vector<PriorHyperparams> history;
  auto trailing_average = [&] {
    const std::size_t from = history.size() / 2;
    PriorHyperparams avg = history.back();
    for (auto& [op, a] : avg.alpha) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t i = from; i < history.size(); ++i) {
        sa += history[i].alpha.at(op);
        sb += history[i].beta.at(op);
      }
      a = sa / static_cast<double>(history.size() - from);
      avg.beta[op] = sb / static_cast<double>(history.size() - from);
    }
    return avg;
  };
  // Each check draws a fresh verification sample; the best checked point
  // is kept in case later averages drift.
  std::optional<PriorFitReport> best;
  auto verify = [&](const PriorHyperparams& hp, std::uint64_t salt) {
    const Draw check = draw_prior(hp, g, static_cast<std::size_t>(cfg.samples), mix_seed(cfg.seed, salt),
                                  cfg.burn_in, cfg.thinning, state);
    report.hp = hp;
    report.achieved = operator_moments(check.trees, g.basis);
    report.mean_error.clear();
    report.max_error = max_error(report.achieved, targets, cfg, &report.mean_error);
    report.converged = report.max_error < cfg.tol;
    if (!best || report.max_error < best->max_error) best = report;
    return report.converged;
  };

  PriorHyperparams current = report.hp;
  for (int t = 0; t < cfg.max_iters; ++t) {
    const Draw d = draw_prior(current, g, static_cast<std::size_t>(cfg.iter_samples), mix_seed(cfg.seed, 2 * t + 1),
                              burn_in, cfg.thinning, state);
    state = d.last;
    burn_in = 0;  // the chain is already warm
    const auto est = operator_moments(d.trees, g.basis);
    report.iterations = t + 1;

    const double eta = cfg.eta0 / (1.0 + t / cfg.tau);
    const Eigen::VectorXd step = newton_step(d.trees, est, targets);
    std::size_t j = 0;
    for (const auto& [op, target] : targets.targets) {
      current.alpha[op] += eta * step[static_cast<Eigen::Index>(j)];
      current.beta[op] = std::max(0.0, current.beta[op] + eta * step[static_cast<Eigen::Index>(j + 1)]);
      j += 2;
    }
    report.alpha_history.push_back(current.alpha);
    history.push_back(current);

    if ((t + 1) % kCheckEvery == 0 && verify(trailing_average(), 2 * static_cast<std::uint64_t>(t) + 2))
      return report;
  }

  if (!history.empty() && cfg.max_iters % kCheckEvery != 0)
    verify(trailing_average(), 2 * static_cast<std::uint64_t>(cfg.max_iters) + 2);
  if (!best) {
    verify(current, 1);
    return report;
  }
  const int iterations = report.iterations;
  auto alphas = std::move(report.alpha_history);
  report = *best;
  report.iterations = iterations;
  report.alpha_history = std::move(alphas);
  return report;
}

}  // namespace bsr
