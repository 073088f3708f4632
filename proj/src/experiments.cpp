#include "bsr/experiments.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <span>
#include <sstream>
#include <thread>

#include "bsr/error.hpp"
#include "bsr/likelihood.hpp"
#include "bsr/random.hpp"

namespace bsr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ValidationError("spec key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ValidationError("spec key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string real_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> dense_grid(double lo, double hi, std::size_t points) {
  std::vector<double> x(points);
  for (std::size_t i = 0; i < points; ++i)
    x[i] = points == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return x;
}

// Does `a` reproduce `b`'s noiseless output?
bool reproduces(const ExprTree& a, const ExprTree& b, const ParamVector& b_params, const std::vector<double>& x,
                std::size_t n_features) {
  std::vector<double> y(x.size());
  std::vector<double> row(n_features, 0.0);
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    row[0] = x[i];
    y[i] = evaluate(b, b_params, row);
    if (!std::isfinite(y[i])) return false;
    scale += y[i] * y[i];
  }
  std::vector<std::vector<double>> cols(n_features, std::vector<double>(x.size(), 0.0));
  cols[0] = x;
  const Dataset data(std::move(cols), y);
  FitConfig fc;
  fc.seed = fnv1a(structure_signature(a));
  fc.clamp_zero_sse = true;
  try {
    const FitResult fit = fit_params(a, data, fc);
    return fit.sse <= 1e-10 * std::max(scale, 1e-300);
  } catch (const Error&) {
    return false;
  }
}

void write_curve(const std::filesystem::path& path, const std::string& ycol, std::span<const double> x,
                 std::span<const double> y) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x\t" << ycol << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) out << real_str(x[i]) << '\t' << real_str(y[i]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string cell_dir_name(std::size_t n, double sigma) { return "n" + std::to_string(n) + "_sigma" + real_str(sigma); }

GridCell run_cell(const GeneratorSpec& base, std::size_t n, double sigma, const GridConfig& cfg) {
  GridCell cell;
  cell.n = n;
  cell.sigma = sigma;
  cell.seed = cell_seed(cfg.master_seed, n, sigma);

  GeneratorSpec spec = base;
  spec.n = n;
  spec.sigma = sigma;
  spec.seed = mix_seed(cell.seed, 1);
  const Dataset data = generate(spec);
  const ExprTree truth = spec.tree();
  const ParamVector truth_params = spec.params();

  SamplerConfig sc = cfg.sampler;
  sc.seed = mix_seed(cell.seed, 2);
  sc.grammar.n_features = spec.n_features;
  sc.threads = 1;
  ScoreConfig score = cfg.score;
  score.fit.seed = mix_seed(cell.seed, 3);
  const SamplerTrace trace = sample_posterior(data, cfg.prior, score, sc);
  const TraceRecord& best = map_model(trace);

  cell.map_expression = print_expression(best.tree);
  cell.map_dl = best.energy;
  cell.map_params = best.fit->theta_hat;
  cell.match = same_family(best.tree, cell.map_params, truth, truth_params, spec.xlow, spec.xhigh, spec.n_features);
  cell.reducible_error =
      reducible_error(best.tree, cell.map_params, truth, truth_params, spec.xlow, spec.xhigh, cfg.dense_points);

  if (cfg.out_dir && spec.n_features == 1) {
    const auto dir = *cfg.out_dir / cell_dir_name(n, sigma);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_curve(dir / "points.tsv", "y", data.column(0), data.target());
    const auto xs = dense_grid(spec.xlow, spec.xhigh, cfg.dense_points);
    std::vector<double> map_y(xs.size()), true_y(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double row[1] = {xs[i]};
      map_y[i] = evaluate(best.tree, cell.map_params, row);
      true_y[i] = evaluate(truth, truth_params, row);
    }
    write_curve(dir / "map_curve.tsv", "y_map", xs, map_y);
    write_curve(dir / "true_curve.tsv", "y_true", xs, true_y);
  }
  return cell;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (model.empty()) throw ValidationError("generator spec needs a model");
  if (n < 1) throw ValidationError("generator spec needs n >= 1");
  if (n_features < 1) throw ValidationError("generator spec needs at least one feature");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("generator sigma must be finite and >= 0");
  if (!(xhigh > xlow) || !std::isfinite(xlow) || !std::isfinite(xhigh))
    throw ValidationError("generator x-range must satisfy xlow < xhigh");
  for (auto g : grid_n)
    if (g < 1) throw ValidationError("grid.n entries must be >= 1");
  for (auto s : grid_sigma)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("grid.sigma entries must be finite and >= 0");
  const ExprTree t = tree();
  for (auto id : t.parameter_ids())
    if (!theta.count(parameter_name(id)))
      throw ValidationError("generator spec has no value for " + parameter_name(id));
  for (const auto& [name, v] : theta)
    if (!std::isfinite(v)) throw ValidationError("generator value for " + name + " must be finite");
}

ExprTree GeneratorSpec::tree() const { return parse_expression(model, n_features); }

ParamVector GeneratorSpec::params() const {
  ParamVector p;
  const ExprTree t = tree();
  for (auto id : t.parameter_ids()) p.values[parameter_name(id)] = theta.at(parameter_name(id));
  p.sigma = sigma;
  return p;
}

GeneratorSpec parse_generator_spec(const std::string& text) {
  GeneratorSpec spec;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError("spec line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "model") {
      spec.model = value;
    } else if (key.rfind("theta.", 0) == 0) {
      spec.theta[key.substr(6)] = parse_real(key, value);
    } else if (key == "sigma") {
      spec.sigma = parse_real(key, value);
    } else if (key == "n") {
      spec.n = parse_count(key, value);
    } else if (key == "features") {
      spec.n_features = parse_count(key, value);
    } else if (key == "xlow") {
      spec.xlow = parse_real(key, value);
    } else if (key == "xhigh") {
      spec.xhigh = parse_real(key, value);
    } else if (key == "seed") {
      spec.seed = parse_count(key, value);
    } else if (key == "grid.n") {
      for (const auto& v : split_list(value)) spec.grid_n.push_back(parse_count(key, v));
    } else if (key == "grid.sigma") {
      for (const auto& v : split_list(value)) spec.grid_sigma.push_back(parse_real(key, v));
    } else {
      throw ValidationError("spec line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

GeneratorSpec read_generator_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read spec file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_generator_spec(ss.str());
}

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  const ExprTree truth = spec.tree();
  const ParamVector params = spec.params();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<double>> cols(spec.n_features, std::vector<double>(spec.n));
  std::vector<double> y(spec.n);
  std::vector<double> row(spec.n_features);
  for (std::size_t k = 0; k < spec.n; ++k) {
    for (std::size_t j = 0; j < spec.n_features; ++j) row[j] = cols[j][k] = uniform(rng, spec.xlow, spec.xhigh);
    const double clean = evaluate(truth, params, row);
    if (!std::isfinite(clean))
      throw NumericalError("ground truth is not finite at x0 = " + real_str(row[0]));
    y[k] = clean + spec.sigma * standard_normal(rng);
  }
  return Dataset(std::move(cols), std::move(y));
}

std::vector<std::size_t> default_grid_n() { return {10, 100, 1000}; }
std::vector<double> default_grid_sigma() { return {0.05, 0.5, 5, 50}; }

bool same_family(const ExprTree& a, const ParamVector& a_params, const ExprTree& b, const ParamVector& b_params,
                 double xlow, double xhigh, std::size_t n_features) {
  if (a.param_count() != b.param_count()) return false;
  if (structure_signature(a) == structure_signature(b)) return true;
  const auto x = dense_grid(xlow, xhigh, 200);
  return reproduces(a, b, b_params, x, n_features) && reproduces(b, a, a_params, x, n_features);
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t n, double sigma) {
  return mix_seed(mix_seed(master, n), std::bit_cast<std::uint64_t>(sigma));
}

double reducible_error(const ExprTree& model, const ParamVector& params, const ExprTree& truth,
                       const ParamVector& truth_params, double xlow, double xhigh, std::size_t points) {
  const auto xs = dense_grid(xlow, xhigh, points);
  double total = 0.0;
  for (double x : xs) {
    const double row[1] = {x};
    const double d = evaluate(model, params, row) - evaluate(truth, truth_params, row);
    if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(xs.size()));
}

GridResult run_grid(const GeneratorSpec& base, const std::vector<std::size_t>& ns, const std::vector<double>& sigmas,
                    const GridConfig& cfg) {
  base.validate();
  cfg.sampler.validate();
  cfg.prior.validate(cfg.sampler.grammar.basis);
  if (cfg.workers < 1) throw ValidationError("experiment.workers must be at least 1");

  GridResult result;
  for (auto n : ns)
    for (double s : sigmas) {
      GridCell c;
      c.n = n;
      c.sigma = s;
      result.cells.push_back(c);
    }

  std::mutex mutex;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next >= result.cells.size()) return;
        i = next++;
      }
      GridCell& slot = result.cells[i];
      try {
        slot = run_cell(base, slot.n, slot.sigma, cfg);
      } catch (const std::exception& e) {
        slot.seed = cell_seed(cfg.master_seed, slot.n, slot.sigma);
        slot.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), result.cells.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (cfg.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*cfg.out_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.out_dir->string() + ": " + ec.message());
    std::ofstream out(*cfg.out_dir / "summary.tsv");
    if (!out) throw IoError("cannot write summary.tsv in " + cfg.out_dir->string());
    write_grid_summary(out, result);
  }
  return result;
}

void write_grid_summary(std::ostream& out, const GridResult& result) {
  out << "N\tsigma\tmap_expression\tmatch\treducible_error\tdl\n";
  for (const auto& c : result.cells) {
    out << c.n << '\t' << real_str(c.sigma) << '\t';
    if (c.error) {
      out << "error: " << *c.error << "\t0\tnan\tnan\n";
      continue;
    }
    out << c.map_expression << '\t' << (c.match ? 1 : 0) << '\t' << real_str(c.reducible_error) << '\t'
        << real_str(c.map_dl) << '\n';
  }
}

}  // namespace bsr
