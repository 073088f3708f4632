#include "bsr/config.hpp"

#include <cmath>
#include <set>

#include "bsr/error.hpp"
#include "bsr/io.hpp"
#include "bsr/random.hpp"

namespace bsr {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, rejecting anything not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: '" + where() + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ValidationError("config: unknown key '" + qualified(key) + "'");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = get<T>(key);
  }

  template <class T>
  T get(const std::string& key) {
    seen_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          fail(key, "a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  template <class T>
  std::vector<T> get_list(const std::string& key) {
    seen_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array()) fail(key, "a list");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& e = v[i];
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_unsigned()) fail(key, "a list of non-negative integers");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!e.is_number()) fail(key, "a list of numbers");
      } else {
        if (!e.is_string()) fail(key, "a list of strings");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), qualified(key));
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* what) {
    throw ValidationError("config: '" + qualified(key) + "' must be " + what);
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::resolve() {
  fit.seed = fit_seed.value_or(mix_seed(seed, 3));
  sampler.seed = sampler_seed.value_or(mix_seed(seed, 2));
  prior.seed = mix_seed(seed, 4);
  score.fit = fit;
}

void RunConfig::validate() const {
  if (fit.restarts < 1) throw ValidationError("fit.restarts must be at least 1");
  if (fit.max_iters < 1) throw ValidationError("fit.max_iters must be at least 1");
  if (!(fit.tolerance > 0.0)) throw ValidationError("fit.tolerance must be positive");
  if (!(score.hessian_step > 0.0)) throw ValidationError("score.hessian_step must be positive");
  sampler.validate();
  prior.validate();
  if (experiment.workers < 1) throw ValidationError("experiment.workers must be at least 1");
  if (experiment.dense_points < 2) throw ValidationError("experiment.dense_points must be at least 2");
  for (auto n : experiment.ns)
    if (n < 1) throw ValidationError("experiment.ns entries must be >= 1");
  for (double s : experiment.sigmas)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("experiment.sigmas entries must be >= 0");
  if (!(rashomon_delta >= 0.0)) throw ValidationError("ensemble.rashomon_delta must be non-negative");
}

PriorHyperparams RunConfig::load_prior() const {
  PriorHyperparams hp = prior_file ? read_prior_table(*prior_file) : PriorHyperparams::surrogate(sampler.grammar.basis);
  hp.validate(sampler.grammar.basis);
  return hp;
}

json RunConfig::to_json() const {
  json moves = {{"relabel", sampler.moves.relabel},
                {"prune_graft", sampler.moves.prune_graft},
                {"root_flip", sampler.moves.root_flip},
                {"leaf_swap", sampler.moves.leaf_swap}};
  json j = {
      {"seed", seed},
      {"fit",
       {{"restarts", fit.restarts},
        {"max_iters", fit.max_iters},
        {"tolerance", fit.tolerance},
        {"seed", fit.seed},
        {"clamp_zero_sse", fit.clamp_zero_sse}}},
      {"score",
       {{"use_fisher", score.use_fisher},
        {"hessian_step", score.hessian_step},
        {"prior_file", prior_file ? json(prior_file->string()) : json(nullptr)}}},
      {"sampler",
       {{"betas", sampler.betas},
        {"steps", sampler.steps},
        {"burn_in", sampler.burn_in},
        {"thinning", sampler.thinning},
        {"swap_period", sampler.swap_period},
        {"moves", moves},
        {"max_depth", sampler.grammar.max_depth},
        {"basis", sampler.grammar.basis.symbols()},
        {"grow_operator_prob", sampler.grammar.grow_operator_prob},
        {"grow_variable_prob", sampler.grammar.grow_variable_prob},
        {"threads", sampler.threads},
        {"initial_expression", sampler.initial_expression},
        {"seed", sampler.seed}}},
      {"prior",
       {{"eta0", prior.eta0},
        {"tau", prior.tau},
        {"max_iters", prior.max_iters},
        {"tol", prior.tol},
        {"abs_floor", prior.abs_floor},
        {"samples", prior.samples},
        {"iter_samples", prior.iter_samples},
        {"burn_in", prior.burn_in},
        {"thinning", prior.thinning}}},
      {"experiment",
       {{"ns", experiment.ns},
        {"sigmas", experiment.sigmas},
        {"workers", experiment.workers},
        {"dense_points", experiment.dense_points}}},
      {"ensemble", {{"include_noise", ensemble.include_noise}, {"rashomon_delta", rashomon_delta}}},
      {"target", target ? json(*target) : json(nullptr)}};
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  if (root.has("target") && !j.at("target").is_null()) c.target = root.get<std::string>("target");

  if (root.has("fit")) {
    Section s = root.sub("fit");
    s.read("restarts", c.fit.restarts);
    s.read("max_iters", c.fit.max_iters);
    s.read("tolerance", c.fit.tolerance);
    if (s.has("seed")) c.fit_seed = s.get<std::uint64_t>("seed");
    s.read("clamp_zero_sse", c.fit.clamp_zero_sse);
  }
  if (root.has("score")) {
    Section s = root.sub("score");
    s.read("use_fisher", c.score.use_fisher);
    s.read("hessian_step", c.score.hessian_step);
    if (s.has("prior_file") && !j.at("score").at("prior_file").is_null())
      c.prior_file = s.get<std::string>("prior_file");
  }
  if (root.has("sampler")) {
    Section s = root.sub("sampler");
    const bool explicit_betas = s.has("betas");
    const bool ladder = s.has("temperatures") || s.has("ladder_ratio");
    if (explicit_betas && ladder)
      throw ValidationError("config: give either sampler.betas or sampler.temperatures/ladder_ratio, not both");
    if (explicit_betas) c.sampler.betas = s.get_list<double>("betas");
    if (ladder) {
      int temps = 6;
      double ratio = 1.5;
      s.read("temperatures", temps);
      s.read("ladder_ratio", ratio);
      if (temps < 1 || !(ratio > 1.0)) throw ValidationError("config: need temperatures >= 1 and ladder_ratio > 1");
      c.sampler.betas = SamplerConfig::geometric_ladder(temps, ratio);
    }
    s.read("steps", c.sampler.steps);
    s.read("burn_in", c.sampler.burn_in);
    s.read("thinning", c.sampler.thinning);
    s.read("swap_period", c.sampler.swap_period);
    if (s.has("moves")) {
      Section m = s.sub("moves");
      m.read("relabel", c.sampler.moves.relabel);
      m.read("prune_graft", c.sampler.moves.prune_graft);
      m.read("root_flip", c.sampler.moves.root_flip);
      m.read("leaf_swap", c.sampler.moves.leaf_swap);
    }
    s.read("max_depth", c.sampler.grammar.max_depth);
    if (s.has("basis")) c.sampler.grammar.basis = OperatorBasis::from_symbols(s.get_list<std::string>("basis"));
    s.read("grow_operator_prob", c.sampler.grammar.grow_operator_prob);
    s.read("grow_variable_prob", c.sampler.grammar.grow_variable_prob);
    s.read("threads", c.sampler.threads);
    s.read("initial_expression", c.sampler.initial_expression);
    if (s.has("seed")) c.sampler_seed = s.get<std::uint64_t>("seed");
  }
  if (root.has("prior")) {
    Section s = root.sub("prior");
    s.read("eta0", c.prior.eta0);
    s.read("tau", c.prior.tau);
    s.read("max_iters", c.prior.max_iters);
    s.read("tol", c.prior.tol);
    s.read("abs_floor", c.prior.abs_floor);
    s.read("samples", c.prior.samples);
    s.read("iter_samples", c.prior.iter_samples);
    s.read("burn_in", c.prior.burn_in);
    s.read("thinning", c.prior.thinning);
  }
  if (root.has("experiment")) {
    Section s = root.sub("experiment");
    if (s.has("ns")) c.experiment.ns = s.get_list<std::size_t>("ns");
    if (s.has("sigmas")) c.experiment.sigmas = s.get_list<double>("sigmas");
    s.read("workers", c.experiment.workers);
    s.read("dense_points", c.experiment.dense_points);
  }
  if (root.has("ensemble")) {
    Section s = root.sub("ensemble");
    s.read("include_noise", c.ensemble.include_noise);
    s.read("rashomon_delta", c.rashomon_delta);
  }
  return c;
}

RunConfig read_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace bsr
