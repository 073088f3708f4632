#pragma once

#include <span>
#include <string>
#include <vector>

namespace bsr {

// N observations of d feature columns and one target column. Immutable and
// stored column-major so models can be evaluated one column at a time.
class Dataset {
 public:
  // Throws ValidationError if N == 0, columns differ in length, or any entry
  // is non-finite. Missing names default to x0, x1, ... and y.
  Dataset(std::vector<std::vector<double>> feature_columns, std::vector<double> target,
          std::vector<std::string> feature_names = {}, std::string target_name = "y");

  // Single-feature convenience constructor.
  static Dataset from_xy(std::vector<double> x, std::vector<double> y);

  std::size_t size() const noexcept { return target_.size(); }
  std::size_t n_features() const noexcept { return columns_.size(); }
  std::span<const double> column(std::size_t j) const { return columns_.at(j); }
  std::span<const double> target() const noexcept { return target_; }
  std::vector<double> row(std::size_t k) const;

  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::string& target_name() const noexcept { return target_name_; }

 private:
  std::vector<std::vector<double>> columns_;
  std::vector<double> target_;
  std::vector<std::string> feature_names_;
  std::string target_name_;
};

}  // namespace bsr
