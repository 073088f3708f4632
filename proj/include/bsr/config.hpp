#pragma once

// Run-wide configuration. Precedence: command-line flags, then the JSON
// config file, then the built-in defaults below. Unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsr/ensemble.hpp"
#include "bsr/prior.hpp"
#include "bsr/sampler.hpp"
#include "bsr/score.hpp"

namespace bsr {

struct ExperimentConfig {
  std::vector<std::size_t> ns;   // empty: take the spec file's grid, else the default grid
  std::vector<double> sigmas;
  int workers = 1;
  std::size_t dense_points = 400;
};

struct RunConfig {
  std::uint64_t seed = 0;  // master seed
  std::optional<std::uint64_t> fit_seed;      // derived from the master seed if unset
  std::optional<std::uint64_t> sampler_seed;  // likewise
  FitConfig fit;
  ScoreConfig score;  // score.fit is filled from `fit` by resolve()
  std::optional<std::filesystem::path> prior_file;
  SamplerConfig sampler;
  PriorFitConfig prior;
  ExperimentConfig experiment;
  EnsembleConfig ensemble;
  double rashomon_delta = 2.0;
  std::optional<std::string> target;

  // Fills derived fields (seeds, score.fit). Call after all overrides.
  void resolve();
  void validate() const;

  // Surrogate table unless prior_file is set.
  PriorHyperparams load_prior() const;

  nlohmann::json to_json() const;
};

// Throws ValidationError on unknown keys or wrongly typed values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig read_config(const std::filesystem::path& path);

}  // namespace bsr
