#include "bsr/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "bsr/error.hpp"

namespace bsr {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double mixture_cdf(const PredictivePosterior& p, double y) {
  double c = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double s = p.sigmas[i];
    c += p.weights[i] * (s > 0.0 ? normal_cdf((y - p.values[i]) / s) : (y >= p.values[i] ? 1.0 : 0.0));
  }
  return c;
}

double mixture_quantile(const PredictivePosterior& p, double q) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    lo = std::min(lo, p.values[i] - 10.0 * p.sigmas[i]);
    hi = std::max(hi, p.values[i] + 10.0 * p.sigmas[i]);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::fabs(lo) + std::fabs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mixture_cdf(p, mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void write_real(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

std::optional<double> predict_map(const ExprTree& model, const ParamVector& theta_hat, std::span<const double> x) {
  const double v = evaluate(model, theta_hat, x);
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (values.empty() || values.size() != weights.size()) throw ValidationError("weighted_quantile needs matching, non-empty inputs");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  // Plotting position of each sorted point: cumulative weight up to its middle.
  std::vector<double> pos(order.size());
  double c = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double w = weights[order[i]] / total;
    pos[i] = c + 0.5 * w;
    c += w;
  }
  if (q <= pos.front()) return values[order.front()];
  if (q >= pos.back()) return values[order.back()];
  const auto it = std::upper_bound(pos.begin(), pos.end(), q);
  const std::size_t hi = static_cast<std::size_t>(it - pos.begin());
  const std::size_t lo = hi - 1;
  const double span = pos[hi] - pos[lo];
  const double f = span > 0.0 ? (q - pos[lo]) / span : 1.0;
  return values[order[lo]] + f * (values[order[hi]] - values[order[lo]]);
}

PredictivePosterior predict_ensemble(const SamplerTrace& trace, std::span<const double> x, const EnsembleConfig& cfg) {
  if (trace.records.empty()) throw ValidationError("trace is empty");
  PredictivePosterior p;
  p.x.assign(x.begin(), x.end());
  for (const auto& r : trace.records) {
    if (!r.fit) throw ValidationError("trace record at step " + std::to_string(r.step) + " has no fitted parameters");
    const auto v = predict_map(r.tree, r.fit->theta_hat, x);
    if (!v) {
      ++p.dropped;
      continue;
    }
    p.values.push_back(*v);
    p.sigmas.push_back(r.fit->theta_hat.sigma);
  }
  if (p.values.empty()) throw NumericalError("no trace record gives a finite prediction at this point");
  const double w = 1.0 / static_cast<double>(p.values.size());
  p.weights.assign(p.values.size(), w);

  double mean = 0.0;
  for (double v : p.values) mean += w * v;
  double var = 0.0;
  for (double v : p.values) var += w * (v - mean) * (v - mean);
  p.mean = mean;
  p.variance = var;
  if (cfg.include_noise) {
    for (double s : p.sigmas) p.variance += w * s * s;
    p.median = mixture_quantile(p, 0.5);
    p.q05 = mixture_quantile(p, 0.05);
    p.q25 = mixture_quantile(p, 0.25);
    p.q75 = mixture_quantile(p, 0.75);
    p.q95 = mixture_quantile(p, 0.95);
  } else {
    p.median = weighted_quantile(p.values, p.weights, 0.5);
    p.q05 = weighted_quantile(p.values, p.weights, 0.05);
    p.q25 = weighted_quantile(p.values, p.weights, 0.25);
    p.q75 = weighted_quantile(p.values, p.weights, 0.75);
    p.q95 = weighted_quantile(p.values, p.weights, 0.95);
  }
  return p;
}

RashomonSet rashomon_set(const SamplerTrace& trace, double delta) {
  if (trace.records.empty()) throw ValidationError("trace is empty");
  if (!(delta >= 0.0)) throw ValidationError("Rashomon threshold must be non-negative");
  std::map<std::string, RashomonMember> groups;
  for (const auto& r : trace.records) {
    const std::string sig = structure_signature(r.tree);
    auto [it, fresh] = groups.try_emplace(sig);
    RashomonMember& m = it->second;
    if (fresh || r.energy < m.best_dl) {
      m.signature = sig;
      m.expression = print_expression(r.tree);
      m.best_dl = r.energy;
    }
    ++m.count;
  }
  RashomonSet set;
  set.delta = delta;
  set.min_dl = std::numeric_limits<double>::infinity();
  for (const auto& [sig, m] : groups) set.min_dl = std::min(set.min_dl, m.best_dl);
  const double total = static_cast<double>(trace.records.size());
  for (auto& [sig, m] : groups) {
    if (!(m.best_dl <= set.min_dl + delta)) continue;
    m.mass = static_cast<double>(m.count) / total;
    set.members.push_back(m);
  }
  std::stable_sort(set.members.begin(), set.members.end(),
                   [](const RashomonMember& a, const RashomonMember& b) { return a.best_dl < b.best_dl; });
  return set;
}

LearnabilityGap learnability_gap(const ExprTree& m_star, const Dataset& data, const PriorHyperparams& hp,
                                 const GapConfig& cfg) {
  const ExprTree trivial = parse_expression(cfg.trivial_model, data.n_features());
  LearnabilityGap g;
  g.truth = score_model(m_star, data, hp, cfg.score).score;
  g.trivial = score_model(trivial, data, hp, cfg.score).score;
  g.gap = g.truth.description_length - g.trivial.description_length;
  return g;
}

void write_predictions(std::ostream& out, const std::vector<std::string>& feature_names,
                       const std::vector<PredictivePosterior>& predictions) {
  for (const auto& name : feature_names) out << name << '\t';
  out << "mean\tmedian\tq05\tq25\tq75\tq95\n";
  for (const auto& p : predictions) {
    for (double v : p.x) {
      write_real(out, v);
      out << '\t';
    }
    const double cols[] = {p.mean, p.median, p.q05, p.q25, p.q75, p.q95};
    for (std::size_t i = 0; i < 6; ++i) {
      write_real(out, cols[i]);
      out << (i + 1 < 6 ? '\t' : '\n');
    }
  }
}

void write_rashomon(std::ostream& out, const RashomonSet& set) {
  out << "signature\texpression\tbest_dl\tmass\n";
  for (const auto& m : set.members) {
    out << m.signature << '\t' << m.expression << '\t';
    write_real(out, m.best_dl);
    out << '\t';
    write_real(out, m.mass);
    out << '\n';
  }
}

}  // namespace bsr
