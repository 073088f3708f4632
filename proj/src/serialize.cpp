#include "bsr/serialize.hpp"

#include <cmath>
#include <limits>

#include "bsr/error.hpp"

namespace bsr {

using nlohmann::json;

json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a real number, got " + j.dump());
}

json to_json(const ParamVector& p) {
  json values = json::object();
  for (const auto& [name, v] : p.values) values[name] = real_to_json(v);
  return values;
}

ParamVector param_vector_from_json(const json& j) {
  ParamVector p;
  for (const auto& [name, v] : j.items()) p.values[name] = real_from_json(v);
  return p;
}

json to_json(const FitResult& fit) {
  return {{"params", to_json(fit.theta_hat)},
          {"sigma", real_to_json(fit.theta_hat.sigma)},
          {"sse", real_to_json(fit.sse)},
          {"log_likelihood", real_to_json(fit.log_likelihood)},
          {"converged", fit.converged},
          {"restarts_used", fit.restarts_used}};
}

FitResult fit_result_from_json(const json& j) {
  FitResult fit;
  fit.theta_hat = param_vector_from_json(j.at("params"));
  fit.theta_hat.sigma = real_from_json(j.at("sigma"));
  fit.sse = real_from_json(j.at("sse"));
  fit.log_likelihood = real_from_json(j.at("log_likelihood"));
  fit.converged = j.at("converged").get<bool>();
  fit.restarts_used = j.at("restarts_used").get<int>();
  return fit;
}

json to_json(const ScoreBreakdown& s) {
  json j = {{"neg_log_likelihood_mle", real_to_json(s.neg_log_likelihood_mle)},
            {"k", s.k},
            {"n", s.n},
            {"bic1", real_to_json(s.bic1)},
            {"fisher_log_det", s.fisher_log_det ? real_to_json(*s.fisher_log_det) : json(nullptr)},
            {"bic2", s.bic2 ? real_to_json(*s.bic2) : json(nullptr)},
            {"neg_log_prior", real_to_json(s.neg_log_prior)},
            {"description_length", real_to_json(s.description_length)},
            {"variant_used", to_string(s.variant_used)},
            {"fisher_normalization", s.fisher_normalization}};
  return j;
}

ScoreBreakdown score_breakdown_from_json(const json& j) {
  ScoreBreakdown s;
  s.neg_log_likelihood_mle = real_from_json(j.at("neg_log_likelihood_mle"));
  s.k = j.at("k").get<std::size_t>();
  s.n = j.at("n").get<std::size_t>();
  s.bic1 = real_from_json(j.at("bic1"));
  if (!j.at("fisher_log_det").is_null()) s.fisher_log_det = real_from_json(j.at("fisher_log_det"));
  if (!j.at("bic2").is_null()) s.bic2 = real_from_json(j.at("bic2"));
  s.neg_log_prior = real_from_json(j.at("neg_log_prior"));
  s.description_length = real_from_json(j.at("description_length"));
  const auto variant = j.at("variant_used").get<std::string>();
  if (variant != "B1" && variant != "B2") throw ValidationError("unknown BIC variant " + variant);
  s.variant_used = variant == "B1" ? BicVariant::B1 : BicVariant::B2;
  s.fisher_normalization = j.value("fisher_normalization", "per-datum");
  return s;
}

}  // namespace bsr
