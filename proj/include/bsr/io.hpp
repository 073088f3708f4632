#pragma once

// File formats: CSV datasets, prior hyperparameter and target-moment tables.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bsr/dataset.hpp"
#include "bsr/prior.hpp"
#include "bsr/score.hpp"

namespace bsr {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

// Header row required; every other cell must be a number. '.' decimal point.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// The target is the named column, or the last one.
Dataset dataset_from_csv(const CsvTable& table, const std::optional<std::string>& target = std::nullopt);
void write_csv(std::ostream& out, const Dataset& data);

// Whitespace-separated "symbol alpha beta" lines; '#' comments and an
// optional header line starting with "symbol".
PriorHyperparams parse_prior_table(const std::string& text);
PriorHyperparams read_prior_table(const std::filesystem::path& path);
void write_prior_table(std::ostream& out, const PriorHyperparams& hp);

// "symbol mean mean_square" lines, same layout rules as the prior table.
TargetMoments parse_target_moments(const std::string& text);
TargetMoments read_target_moments(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Shortest round-tripping decimal form.
std::string format_real(double v);

}  // namespace bsr
