// bsr: command-line front end for the Bayesian symbolic regression engine.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bsr/config.hpp"
#include "bsr/ensemble.hpp"
#include "bsr/error.hpp"
#include "bsr/experiments.hpp"
#include "bsr/io.hpp"
#include "bsr/prior.hpp"
#include "bsr/sampler.hpp"
#include "bsr/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> target;
  bool quiet = false;
};

bsr::RunConfig load_config(const Globals& g) {
  bsr::RunConfig cfg = g.config_path.empty() ? bsr::RunConfig{} : bsr::read_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.target) cfg.target = g.target;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw bsr::ValidationError(std::string("--out is required: ") + what);
  return g.out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw bsr::IoError("cannot create output directory " + dir.string());
}

void echo_config(const fs::path& dir, const bsr::RunConfig& cfg) {
  bsr::write_text_file(dir / "config.json", cfg.to_json().dump(2) + "\n");
}

json score_json(const bsr::ScoredModel& m, const bsr::ExprTree& tree) {
  return {{"expression", bsr::print_expression(tree)},
          {"signature", bsr::structure_signature(tree)},
          {"fit", bsr::to_json(m.fit)},
          {"score", bsr::to_json(m.score)}};
}

// ---------------------------------------------------------------------------

int cmd_generate(const Globals& g, const std::string& spec_path) {
  bsr::GeneratorSpec spec = bsr::read_generator_spec(spec_path);
  if (g.seed) spec.seed = *g.seed;
  const fs::path out = require_out(g, "path of the CSV to write");
  const bsr::Dataset data = bsr::generate(spec);
  std::ostringstream ss;
  bsr::write_csv(ss, data);
  bsr::write_text_file(out, ss.str());
  if (!g.quiet) std::cout << "wrote " << data.size() << " rows to " << out.string() << "\n";
  return 0;
}

int cmd_search(const Globals& g, const std::string& data_path) {
  const bsr::RunConfig cfg = load_config(g);
  const fs::path out = require_out(g, "output directory");
  const bsr::Dataset data = bsr::dataset_from_csv(bsr::read_csv(data_path), cfg.target);
  const bsr::PriorHyperparams hp = cfg.load_prior();

  bsr::SamplerConfig sc = cfg.sampler;
  sc.grammar.n_features = data.n_features();
  make_dir(out);
  echo_config(out, cfg);
  const bsr::SamplerTrace trace = bsr::sample_posterior(data, hp, cfg.score, sc);

  std::ostringstream trace_text;
  bsr::write_trace(trace_text, trace);
  bsr::write_text_file(out / "trace.jsonl", trace_text.str());

  const bsr::TraceRecord& best = bsr::map_model(trace);
  json map = {{"expression", bsr::print_expression(best.tree)},
              {"signature", bsr::structure_signature(best.tree)},
              {"step", best.step},
              {"fit", bsr::to_json(*best.fit)},
              {"score", bsr::to_json(*best.score)}};
  json moves = json::object();
  for (std::size_t m = 0; m < bsr::kMoveTypes; ++m)
    moves[bsr::to_string(static_cast<bsr::MoveType>(m))] = {{"proposed", trace.moves.proposed[m]},
                                                             {"invalid", trace.moves.invalid[m]},
                                                             {"accepted", trace.moves.accepted[m]}};
  map["moves"] = moves;
  map["swaps"] = {{"attempted", trace.swaps.attempted}, {"accepted", trace.swaps.accepted}};
  bsr::write_text_file(out / "map.json", map.dump(2) + "\n");

  std::ostringstream rash;
  bsr::write_rashomon(rash, bsr::rashomon_set(trace, cfg.rashomon_delta));
  bsr::write_text_file(out / "rashomon.tsv", rash.str());

  std::cout << bsr::print_expression(best.tree) << "\n";
  if (!g.quiet) {
    std::cerr << "description length " << bsr::format_real(best.energy) << "\n";
    for (const auto& [name, v] : best.fit->theta_hat.values)
      std::cerr << "  " << name << " = " << bsr::format_real(v) << "\n";
  }
  return 0;
}

int cmd_score(const Globals& g, const std::string& data_path, const std::string& expression) {
  const bsr::RunConfig cfg = load_config(g);
  const bsr::Dataset data = bsr::dataset_from_csv(bsr::read_csv(data_path), cfg.target);
  const bsr::ExprTree tree = bsr::parse_expression(expression, data.n_features());
  bsr::PriorHyperparams hp = cfg.load_prior();
  // Operators outside the run basis still need coefficients to be scored.
  const auto fallback = bsr::PriorHyperparams::surrogate(bsr::OperatorBasis(
      std::vector<bsr::Op>(bsr::all_ops().begin(), bsr::all_ops().end())));
  for (bsr::Op op : bsr::all_ops())
    if (!hp.covers(op) && tree.operator_count(op) > 0) {
      hp.alpha[op] = fallback.alpha.at(op);
      hp.beta[op] = fallback.beta.at(op);
    }
  const bsr::ScoredModel m = bsr::score_model(tree, data, hp, cfg.score);
  const std::string text = score_json(m, tree).dump(2) + "\n";
  std::cout << text;
  if (!g.out.empty()) bsr::write_text_file(g.out, text);
  return 0;
}

int cmd_predict(const Globals& g, const std::string& trace_path, const std::string& query_path) {
  const bsr::RunConfig cfg = load_config(g);
  const fs::path out = require_out(g, "path of the predictions TSV");
  std::istringstream trace_text(bsr::read_text_file(trace_path));
  const bsr::SamplerTrace trace = bsr::read_trace(trace_text);
  if (trace.records.empty()) throw bsr::ValidationError("trace " + trace_path + " has no records");
  const bsr::CsvTable query = bsr::read_csv(query_path);
  if (query.header.size() < trace.n_features)
    throw bsr::ValidationError("query has " + std::to_string(query.header.size()) + " columns but models use " +
                               std::to_string(trace.n_features) + " features");

  std::vector<std::string> names(query.header.begin(),
                                 query.header.begin() + static_cast<std::ptrdiff_t>(trace.n_features));
  std::vector<bsr::PredictivePosterior> preds;
  const std::size_t rows = query.columns.front().size();
  for (std::size_t k = 0; k < rows; ++k) {
    std::vector<double> x(trace.n_features);
    for (std::size_t j = 0; j < trace.n_features; ++j) x[j] = query.columns[j][k];
    preds.push_back(bsr::predict_ensemble(trace, x, cfg.ensemble));
  }
  std::ostringstream ss;
  bsr::write_predictions(ss, names, preds);
  bsr::write_text_file(out, ss.str());
  if (!g.quiet) std::cout << "wrote " << rows << " predictions to " << out.string() << "\n";
  return 0;
}

int cmd_experiment(const Globals& g, const std::string& spec_path) {
  const bsr::RunConfig cfg = load_config(g);
  const fs::path out = require_out(g, "output directory");
  const bsr::GeneratorSpec spec = bsr::read_generator_spec(spec_path);

  bsr::GridConfig grid;
  grid.sampler = cfg.sampler;
  grid.score = cfg.score;
  grid.prior = cfg.load_prior();
  grid.master_seed = cfg.seed;
  grid.dense_points = cfg.experiment.dense_points;
  grid.workers = cfg.experiment.workers;
  grid.out_dir = out;
  auto pick_ns = [&] {
    if (!cfg.experiment.ns.empty()) return cfg.experiment.ns;
    return spec.grid_n.empty() ? bsr::default_grid_n() : spec.grid_n;
  };
  auto pick_sigmas = [&] {
    if (!cfg.experiment.sigmas.empty()) return cfg.experiment.sigmas;
    return spec.grid_sigma.empty() ? bsr::default_grid_sigma() : spec.grid_sigma;
  };
  make_dir(out);
  echo_config(out, cfg);
  const bsr::GridResult result = bsr::run_grid(spec, pick_ns(), pick_sigmas(), grid);

  int failed = 0;
  for (const auto& c : result.cells) {
    if (c.error) ++failed;
    if (!g.quiet)
      std::cout << "N=" << c.n << " sigma=" << bsr::format_real(c.sigma) << "  "
                << (c.error ? "error: " + *c.error : c.map_expression + (c.match ? "  [match]" : "")) << "\n";
  }
  if (failed > 0) {
    std::cerr << failed << " grid cell(s) failed\n";
    return 4;
  }
  return 0;
}

int cmd_prior_fit(const Globals& g, const std::string& targets_path) {
  const bsr::RunConfig cfg = load_config(g);
  const fs::path out = require_out(g, "output directory");
  const bsr::TargetMoments targets = bsr::read_target_moments(targets_path);
  make_dir(out);
  echo_config(out, cfg);
  const bsr::PriorFitReport report = bsr::fit_prior_hyperparams(targets, cfg.sampler.grammar, cfg.prior);

  std::ostringstream table;
  bsr::write_prior_table(table, report.hp);
  bsr::write_text_file(out / "prior.tsv", table.str());

  json ops = json::array();
  for (const auto& [op, target] : targets.targets) {
    const auto& a = report.achieved.at(op);
    ops.push_back({{"symbol", bsr::symbol(op)},
                   {"alpha", report.hp.alpha.at(op)},
                   {"beta", report.hp.beta.at(op)},
                   {"target_mean", target.mean},
                   {"target_mean_square", target.mean_square},
                   {"achieved_mean", a.mean},
                   {"achieved_mean_square", a.mean_square},
                   {"mean_error", report.mean_error.at(op)}});
  }
  json j = {{"converged", report.converged},
            {"iterations", report.iterations},
            {"max_error", report.max_error},
            {"samples", cfg.prior.samples},
            {"operators", ops}};
  bsr::write_text_file(out / "prior_report.json", j.dump(2) + "\n");
  if (!g.quiet)
    std::cout << (report.converged ? "converged" : "not converged") << " after " << report.iterations
              << " iterations, max moment error " << bsr::format_real(report.max_error) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian symbolic regression: posterior sampling over expression trees"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  std::string target_value;
  app.add_option("--config", g.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed_value, "master seed (overrides the config file)");
  app.add_option("--out", g.out, "output path or directory");
  auto* target_opt = app.add_option("--target", target_value, "name of the target column (default: last)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  std::string a1, a2;
  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset from a spec file");
  gen->add_option("spec", a1, "generator spec file")->required();
  auto* search = app.add_subcommand("search", "sample the posterior and report the MAP model");
  search->add_option("data", a1, "CSV dataset")->required();
  auto* score = app.add_subcommand("score", "score one expression on a dataset");
  score->add_option("data", a1, "CSV dataset")->required();
  score->add_option("expression", a2, "expression, e.g. \"th0 + th1*x0\"")->required();
  auto* predict = app.add_subcommand("predict", "posterior-predictive summaries from a trace");
  predict->add_option("trace", a1, "trace file written by search")->required();
  predict->add_option("query", a2, "CSV of query points")->required();
  auto* experiment = app.add_subcommand("experiment", "run an N x sigma grid");
  experiment->add_option("spec", a1, "generator spec file")->required();
  auto* prior_fit = app.add_subcommand("prior-fit", "fit prior hyperparameters to target moments");
  prior_fit->add_option("targets", a1, "target moments table")->required();
  for (auto* sub : {gen, search, score, predict, experiment, prior_fit}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed_value;
  if (*target_opt) g.target = target_value;

  try {
    if (*gen) return cmd_generate(g, a1);
    if (*search) return cmd_search(g, a1);
    if (*score) return cmd_score(g, a1, a2);
    if (*predict) return cmd_predict(g, a1, a2);
    if (*experiment) return cmd_experiment(g, a1);
    if (*prior_fit) return cmd_prior_fit(g, a1);
  } catch (const bsr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bsr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const bsr::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
