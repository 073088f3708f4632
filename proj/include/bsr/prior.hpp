#pragma once

// Fitting the operator prior p(m) ~ exp(-sum_o alpha_o n_o + beta_o n_o^2)
// so that expected counts and squared counts under p(m) match targets.

#include <cstdint>
#include <map>
#include <vector>

#include "bsr/expr.hpp"
#include "bsr/sampler.hpp"
#include "bsr/score.hpp"

namespace bsr {

struct OperatorMoments {
  double mean = 0.0;         // E[n_o]
  double mean_square = 0.0;  // E[n_o^2], a raw second moment
};

struct TargetMoments {
  std::map<Op, OperatorMoments> targets;

  // mean >= 0 and mean_square >= mean^2 for every operator.
  void validate() const;
  OperatorBasis basis() const;
};

struct PriorFitConfig {
  double eta0 = 0.5;  // step size eta_t = eta0 / (1 + t / tau)
  double tau = 20.0;
  int max_iters = 200;
  double tol = 0.05;          // relative moment error
  double abs_floor = 0.02;    // absolute tolerance for near-zero targets
  int samples = 20000;        // draws behind the reported moments
  int iter_samples = 2000;    // draws per update
  int burn_in = 1000;
  int thinning = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PriorFitReport {
  PriorHyperparams hp;
  std::map<Op, OperatorMoments> achieved;
  std::map<Op, double> mean_error;  // per-operator error on the mean
  int iterations = 0;
  bool converged = false;
  double max_error = 0.0;
  std::vector<std::map<Op, double>> alpha_history;  // alpha after each update
};

// K trees from p(m) under the grammar, via the sampler at beta = 1 with the
// likelihood switched off. One record every `thinning` steps after burn-in.
std::vector<ExprTree> sample_prior_models(const PriorHyperparams& hp, const GrammarConfig& grammar, std::size_t count,
                                          std::uint64_t seed, int burn_in = 1000, int thinning = 5);

std::map<Op, OperatorMoments> operator_moments(const std::vector<ExprTree>& trees, const OperatorBasis& basis);

// Error of an achieved mean against its target: |achieved - target| divided
// by max(target, abs_floor / tol), so targets near zero are held to abs_floor
// in absolute terms.
double moment_error(double achieved, double target, double tol, double abs_floor);

// Stochastic approximation on (alpha, beta); non-convergence is reported in
// the result, not thrown.
PriorFitReport fit_prior_hyperparams(const TargetMoments& targets, const GrammarConfig& grammar,
                                     const PriorFitConfig& cfg,
                                     std::optional<PriorHyperparams> start = std::nullopt);

}  // namespace bsr
