#pragma once

// Maximum-likelihood fitting under i.i.d. Gaussian noise. The noise scale is
// profiled out analytically (sigma^2 = SSE / N), so fitting reduces to least
// squares on the tree's own parameters.

#include <cstdint>
#include <span>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"

namespace bsr {

// A tree compiled for evaluation over whole dataset columns. Parameters are
// passed densely in the order of ExprTree::parameter_ids(). Holds scratch
// buffers, so a single instance must not be shared across threads.
class CompiledModel {
 public:
  explicit CompiledModel(const ExprTree& tree);

  std::size_t param_count() const noexcept { return param_count_; }

  // out.size() must equal data.size().
  void predict(std::span<const double> theta, const Dataset& data, std::span<double> out);
  // Sum of squared residuals, +inf if any prediction is non-finite.
  double sse(std::span<const double> theta, const Dataset& data);

 private:
  struct Instr {
    NodeKind kind;
    Op op;
    std::uint32_t slot;  // column for variables, dense slot for parameters
    double value;
  };
  std::vector<Instr> program_;  // reverse prefix order
  std::size_t param_count_ = 0;
  std::size_t max_stack_ = 0;
  std::vector<std::vector<double>> buffers_;
  std::vector<double> prediction_;
};

struct FitConfig {
  int restarts = 10;
  int max_iters = 2000;
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
  // Clamp SSE to N * 1e-12 before the log-likelihood, so exact fits score
  // finitely instead of raising DegenerateFitError.
  bool clamp_zero_sse = false;
};

inline constexpr double kZeroSseVariance = 1e-12;

struct FitResult {
  ParamVector theta_hat;  // includes sigma_hat = sqrt(sse / N)
  double sse = 0.0;
  double log_likelihood = 0.0;  // +inf when sse == 0 and clamping is off
  bool converged = false;
  int restarts_used = 0;
};

double sse(const ExprTree& tree, const ParamVector& params, const Dataset& data);

// Multi-start least squares. Restart r draws its initial point from a
// Student-t(3) stream seeded by (cfg.seed, r), so the first R restarts of a
// larger run are exactly the R restarts of a smaller one.
// Throws OverParameterizedError when k > N and UnfittableModelError when no
// restart reaches a finite SSE.
FitResult fit_params(const ExprTree& tree, const Dataset& data, const FitConfig& cfg);

// -(N/2) [log 2pi + log(SSE/N) + 1]
// Throws DegenerateFitError for SSE == 0 unless clamp is set; returns -inf
// for SSE == +inf.
double log_likelihood_mle(std::size_t n, double sse, bool clamp = false);
double log_likelihood_mle(const ExprTree& tree, const FitResult& fit, const Dataset& data,
                          bool clamp = false);

// Dense parameter vector of `fit` in the order of tree.parameter_ids().
std::vector<double> dense_parameters(const ExprTree& tree, const ParamVector& params);
ParamVector named_parameters(const ExprTree& tree, std::span<const double> theta, double sigma);

}  // namespace bsr
