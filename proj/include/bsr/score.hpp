#pragma once

// Description length of a model: BIC/2 (Laplace approximation of the marginal
// likelihood) plus the negative log of the operator prior.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"
#include "bsr/likelihood.hpp"

namespace bsr {

// log p(m) = -sum_o (alpha_o n_o + beta_o n_o^2), unnormalized.
struct PriorHyperparams {
  std::map<Op, double> alpha;
  std::map<Op, double> beta;

  // Surrogate defaults: alpha = 3, beta = 0.1 for binary operators and
  // alpha = 5, beta = 0.2 for unary ones.
  static PriorHyperparams surrogate(const OperatorBasis& basis);
  static PriorHyperparams uniform(const OperatorBasis& basis, double alpha, double beta);

  bool covers(Op op) const { return alpha.count(op) > 0 && beta.count(op) > 0; }
  // Every operator of `basis` must have both coefficients and beta >= 0.
  void validate(const OperatorBasis& basis) const;
};

// Throws ValidationError if the tree uses an operator absent from `hp`.
double log_prior(const ExprTree& tree, const PriorHyperparams& hp);

// B1 = -2 log L + (k + 1) log N
double bic1(double log_likelihood, std::size_t k, std::size_t n);
double bic1(const FitResult& fit, std::size_t k, std::size_t n);

// log det of the per-datum observed information in (theta, sigma), from a
// central-difference Hessian of the negative log-likelihood at the MLE.
// Absent when the Hessian is not positive definite. `step` scales the
// per-coordinate difference step h_j = step * (1 + |z_j|).
std::optional<double> fisher_log_det(const ExprTree& tree, const FitResult& fit, const Dataset& data,
                                     double step = 1e-4);

struct ScoreConfig {
  FitConfig fit;
  bool use_fisher = false;
  double hessian_step = 1e-4;
};

enum class BicVariant { B1, B2 };

const char* to_string(BicVariant v) noexcept;

struct ScoreBreakdown {
  double neg_log_likelihood_mle = 0.0;
  std::size_t k = 0;
  std::size_t n = 0;
  double bic1 = 0.0;
  std::optional<double> fisher_log_det;
  std::optional<double> bic2;
  double neg_log_prior = 0.0;
  double description_length = 0.0;
  BicVariant variant_used = BicVariant::B1;
  // The Fisher term uses the Hessian divided by N.
  std::string fisher_normalization = "per-datum";
};

struct ScoredModel {
  FitResult fit;
  ScoreBreakdown score;
};

// Assembles the breakdown from an existing fit. Throws DegenerateFitError for
// SSE == 0 unless cfg.fit.clamp_zero_sse is set.
ScoreBreakdown score_fit(const ExprTree& tree, const FitResult& fit, const Dataset& data,
                         const PriorHyperparams& hp, const ScoreConfig& cfg);

// Fits, then scores. Propagates fitting errors.
ScoredModel score_model(const ExprTree& tree, const Dataset& data, const PriorHyperparams& hp,
                        const ScoreConfig& cfg);

ScoreBreakdown description_length(const ExprTree& tree, const Dataset& data, const PriorHyperparams& hp,
                                  const ScoreConfig& cfg);

// softmax(-L) with max subtraction.
std::vector<double> posterior_weights(std::span<const double> description_lengths);
std::vector<double> posterior_weights(std::span<const ScoreBreakdown> scores);

}  // namespace bsr
