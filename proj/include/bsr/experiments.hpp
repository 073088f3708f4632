#pragma once

// Synthetic data y = m*(x, theta*) + eps and the N x sigma experiment grids.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/expr.hpp"
#include "bsr/sampler.hpp"
#include "bsr/score.hpp"

namespace bsr {

struct GeneratorSpec {
  std::string model;                     // ground-truth expression
  std::map<std::string, double> theta;   // true parameter values by name
  double sigma = 0.0;
  std::size_t n = 100;
  std::size_t n_features = 1;
  double xlow = -5.0;  // every feature is drawn uniformly from [xlow, xhigh)
  double xhigh = 5.0;
  std::uint64_t seed = 0;
  // Grid axes; empty means {10, 100, 1000} x {0.05, 0.5, 5, 50}.
  std::vector<std::size_t> grid_n;
  std::vector<double> grid_sigma;

  void validate() const;
  ExprTree tree() const;
  ParamVector params() const;
};

// "key = value" lines; '#' starts a comment. Keys: model, theta.<name>,
// sigma, n, features, xlow, xhigh, seed, grid.n, grid.sigma (comma lists).
GeneratorSpec parse_generator_spec(const std::string& text);
GeneratorSpec read_generator_spec(const std::filesystem::path& path);

// Throws NumericalError if the ground truth is not finite at a drawn x.
Dataset generate(const GeneratorSpec& spec);

// Default grid axes.
std::vector<std::size_t> default_grid_n();
std::vector<double> default_grid_sigma();

// Two models are treated as the same family when they have the same
// parameter count and each one, fitted to the other's noiseless output on a
// dense grid, reproduces it to relative SSE below 1e-10. This equates
// rearrangements such as (th0 + th1*x0) and ((x0 + th0) * th1).
bool same_family(const ExprTree& a, const ParamVector& a_params, const ExprTree& b, const ParamVector& b_params,
                 double xlow, double xhigh, std::size_t n_features = 1);

struct GridCell {
  std::size_t n = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string map_expression;
  double map_dl = 0.0;
  bool match = false;
  ParamVector map_params;
  double reducible_error = 0.0;  // RMS of MAP vs noiseless truth on a dense grid
  std::optional<std::string> error;  // set when the cell failed
};

struct GridResult {
  std::vector<GridCell> cells;  // N-major, then sigma
};

struct GridConfig {
  SamplerConfig sampler;
  ScoreConfig score;
  PriorHyperparams prior;
  std::uint64_t master_seed = 0;
  std::size_t dense_points = 400;  // reducible-error / curve resolution
  int workers = 1;
  std::optional<std::filesystem::path> out_dir;  // per-cell files + summary.tsv
};

// Per-cell seed from (master, N, sigma bits).
std::uint64_t cell_seed(std::uint64_t master, std::size_t n, double sigma);

// RMS difference of two models over `points` evenly spaced x in [xlow, xhigh]
// (one feature). Non-finite predictions make the result +inf.
double reducible_error(const ExprTree& model, const ParamVector& params, const ExprTree& truth,
                       const ParamVector& truth_params, double xlow, double xhigh, std::size_t points);

GridResult run_grid(const GeneratorSpec& base, const std::vector<std::size_t>& ns, const std::vector<double>& sigmas,
                    const GridConfig& cfg);

// summary.tsv: N, sigma, map_expression, match, reducible_error, dl.
void write_grid_summary(std::ostream& out, const GridResult& result);

}  // namespace bsr
