#pragma once

// Predictions and diagnostics computed from posterior traces.

#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"
#include "bsr/sampler.hpp"
#include "bsr/score.hpp"

namespace bsr {

// nullopt when the model is not finite at x.
std::optional<double> predict_map(const ExprTree& model, const ParamVector& theta_hat, std::span<const double> x);

struct EnsembleConfig {
  // Treat each record as a Gaussian N(prediction, sigma_hat^2) rather than a
  // point mass.
  bool include_noise = false;
};

struct PredictivePosterior {
  std::vector<double> x;
  std::vector<double> values;   // finite per-record predictions
  std::vector<double> weights;  // sum to 1
  std::vector<double> sigmas;   // per-record sigma_hat, used with include_noise
  double mean = 0.0;
  double variance = 0.0;
  double median = 0.0;
  double q05 = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
  std::size_t dropped = 0;  // records not finite at x
};

// Equal-weight average over the trace records (each record a thinned beta = 1
// sample). Quantiles interpolate the weighted empirical CDF linearly between
// sample midpoints; with include_noise they come from the Gaussian mixture.
PredictivePosterior predict_ensemble(const SamplerTrace& trace, std::span<const double> x,
                                     const EnsembleConfig& cfg = {});

// Quantile of a weighted point set (values need not be sorted).
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

struct RashomonMember {
  std::string signature;
  std::string expression;  // representative: the first record at the best energy
  double best_dl = 0.0;
  double mass = 0.0;  // share of trace records
  std::size_t count = 0;
};

struct RashomonSet {
  double delta = 0.0;
  double min_dl = 0.0;
  std::vector<RashomonMember> members;  // ascending best_dl, then signature
};

RashomonSet rashomon_set(const SamplerTrace& trace, double delta);

struct GapConfig {
  ScoreConfig score;
  // The trivial model: the zero-operator tree preferred by the prior.
  std::string trivial_model = "th0";
};

struct LearnabilityGap {
  double gap = 0.0;  // dl(m*) - dl(m0)
  ScoreBreakdown truth;
  ScoreBreakdown trivial;
};

LearnabilityGap learnability_gap(const ExprTree& m_star, const Dataset& data, const PriorHyperparams& hp,
                                 const GapConfig& cfg = {});

// TSV: feature columns, mean, median, q05, q25, q75, q95.
void write_predictions(std::ostream& out, const std::vector<std::string>& feature_names,
                       const std::vector<PredictivePosterior>& predictions);

void write_rashomon(std::ostream& out, const RashomonSet& set);

}  // namespace bsr
