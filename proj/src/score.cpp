#include "bsr/score.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "bsr/error.hpp"

namespace bsr {

PriorHyperparams PriorHyperparams::surrogate(const OperatorBasis& basis) {
  PriorHyperparams hp;
  for (Op op : basis.ops()) {
    hp.alpha[op] = arity(op) == 2 ? 3.0 : 5.0;
    hp.beta[op] = arity(op) == 2 ? 0.1 : 0.2;
  }
  return hp;
}

PriorHyperparams PriorHyperparams::uniform(const OperatorBasis& basis, double alpha, double beta) {
  PriorHyperparams hp;
  for (Op op : basis.ops()) {
    hp.alpha[op] = alpha;
    hp.beta[op] = beta;
  }
  return hp;
}

void PriorHyperparams::validate(const OperatorBasis& basis) const {
  for (Op op : basis.ops()) {
    if (!covers(op))
      throw ValidationError("prior hyperparameters missing for operator '" + std::string(symbol(op)) + "'");
    if (!(beta.at(op) >= 0.0))
      throw ValidationError("prior beta for '" + std::string(symbol(op)) + "' must be non-negative");
    if (!std::isfinite(alpha.at(op))) throw ValidationError("prior alpha must be finite");
  }
}

double log_prior(const ExprTree& tree, const PriorHyperparams& hp) {
  double total = 0.0;
  for (Op op : all_ops()) {
    const int n = tree.operator_count(op);
    if (n == 0) continue;
    if (!hp.covers(op))
      throw ValidationError("no prior hyperparameters for operator '" + std::string(symbol(op)) + "'");
    total += hp.alpha.at(op) * n + hp.beta.at(op) * n * n;
  }
  return -total;
}

double bic1(double log_likelihood, std::size_t k, std::size_t n) {
  return -2.0 * log_likelihood + static_cast<double>(k + 1) * std::log(static_cast<double>(n));
}

double bic1(const FitResult& fit, std::size_t k, std::size_t n) { return bic1(fit.log_likelihood, k, n); }

std::optional<double> fisher_log_det(const ExprTree& tree, const FitResult& fit, const Dataset& data,
                                     double step) {
  if (!(fit.sse > 0.0) || !std::isfinite(fit.sse)) return std::nullopt;
  const std::size_t k = tree.param_count();
  const double n = static_cast<double>(data.size());
  CompiledModel model(tree);

  // z = (theta, sigma)
  std::vector<double> z = dense_parameters(tree, fit.theta_hat);
  z.push_back(fit.theta_hat.sigma);
  const std::size_t dim = k + 1;

  auto nll = [&](const std::vector<double>& at) {
    const std::span<const double> theta(at.data(), k);
    const double s = model.sse(theta, data);
    const double sigma = at[k];
    if (!(sigma > 0.0)) return std::numeric_limits<double>::infinity();
    return 0.5 * n * std::log(2.0 * std::numbers::pi) + n * std::log(sigma) + s / (2.0 * sigma * sigma);
  };

  std::vector<double> h(dim);
  for (std::size_t j = 0; j < dim; ++j) h[j] = step * (1.0 + std::fabs(z[j]));

  const double f0 = nll(z);
  Eigen::MatrixXd hess(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  std::vector<double> p = z;
  for (std::size_t i = 0; i < dim; ++i) {
    p[i] = z[i] + h[i];
    const double fp = nll(p);
    p[i] = z[i] - h[i];
    const double fm = nll(p);
    p[i] = z[i];
    hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (std::size_t j = 0; j < i; ++j) {
      auto at = [&](double si, double sj) {
        p[i] = z[i] + si * h[i];
        p[j] = z[j] + sj * h[j];
        const double v = nll(p);
        p[i] = z[i];
        p[j] = z[j];
        return v;
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
      hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      hess(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  if (!hess.allFinite()) return std::nullopt;
  hess /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const auto& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  // Central differences leave noise near 1e-9 of the largest eigenvalue, so
  // anything below 1e-6 of it counts as a flat direction.
  if (!(ev.minCoeff() > 1e-6 * largest)) return std::nullopt;
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) log_det += std::log(ev[i]);
  return log_det;
}

const char* to_string(BicVariant v) noexcept { return v == BicVariant::B1 ? "B1" : "B2"; }

ScoreBreakdown score_fit(const ExprTree& tree, const FitResult& fit, const Dataset& data,
                         const PriorHyperparams& hp, const ScoreConfig& cfg) {
  ScoreBreakdown s;
  s.k = tree.param_count();
  s.n = data.size();
  s.neg_log_likelihood_mle = -log_likelihood_mle(data.size(), fit.sse, cfg.fit.clamp_zero_sse);
  s.bic1 = bic1(-s.neg_log_likelihood_mle, s.k, s.n);
  s.neg_log_prior = -log_prior(tree, hp);
  double bic = s.bic1;
  if (cfg.use_fisher) {
    s.fisher_log_det = fisher_log_det(tree, fit, data, cfg.hessian_step);
    if (s.fisher_log_det) {
      s.bic2 = s.bic1 + *s.fisher_log_det;
      s.variant_used = BicVariant::B2;
      bic = *s.bic2;
    }
  }
  s.description_length = bic / 2.0 + s.neg_log_prior;
  return s;
}

ScoredModel score_model(const ExprTree& tree, const Dataset& data, const PriorHyperparams& hp,
                        const ScoreConfig& cfg) {
  // Validate the prior before paying for the fit.
  (void)log_prior(tree, hp);
  ScoredModel m;
  m.fit = fit_params(tree, data, cfg.fit);
  m.score = score_fit(tree, m.fit, data, hp, cfg);
  return m;
}

ScoreBreakdown description_length(const ExprTree& tree, const Dataset& data, const PriorHyperparams& hp,
                                  const ScoreConfig& cfg) {
  return score_model(tree, data, hp, cfg).score;
}

std::vector<double> posterior_weights(std::span<const double> dl) {
  if (dl.empty()) throw ValidationError("posterior_weights needs at least one model");
  for (double v : dl)
    if (!std::isfinite(v)) throw ValidationError("posterior_weights needs finite description lengths");
  const double lo = *std::min_element(dl.begin(), dl.end());
  std::vector<double> w(dl.size());
  double total = 0.0;
  for (std::size_t i = 0; i < dl.size(); ++i) {
    w[i] = std::exp(-(dl[i] - lo));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

std::vector<double> posterior_weights(std::span<const ScoreBreakdown> scores) {
  std::vector<double> dl;
  dl.reserve(scores.size());
  for (const auto& s : scores) dl.push_back(s.description_length);
  return posterior_weights(dl);
}

}  // namespace bsr
