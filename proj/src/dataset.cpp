#include "bsr/dataset.hpp"

#include <cmath>

#include "bsr/error.hpp"

namespace bsr {

Dataset::Dataset(std::vector<std::vector<double>> feature_columns, std::vector<double> target,
                 std::vector<std::string> feature_names, std::string target_name)
    : columns_(std::move(feature_columns)),
      target_(std::move(target)),
      feature_names_(std::move(feature_names)),
      target_name_(std::move(target_name)) {
  if (target_.empty()) throw ValidationError("dataset has no observations");
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].size() != target_.size())
      throw ValidationError("feature column " + std::to_string(j) + " has " +
                            std::to_string(columns_[j].size()) + " rows, target has " +
                            std::to_string(target_.size()));
    for (double v : columns_[j])
      if (!std::isfinite(v)) throw ValidationError("non-finite feature value in column " + std::to_string(j));
  }
  for (double v : target_)
    if (!std::isfinite(v)) throw ValidationError("non-finite target value");
  if (feature_names_.empty()) {
    for (std::size_t j = 0; j < columns_.size(); ++j) feature_names_.push_back("x" + std::to_string(j));
  } else if (feature_names_.size() != columns_.size()) {
    throw ValidationError("feature name count does not match column count");
  }
}

Dataset Dataset::from_xy(std::vector<double> x, std::vector<double> y) {
  std::vector<std::vector<double>> cols;
  cols.push_back(std::move(x));
  return Dataset(std::move(cols), std::move(y));
}

std::vector<double> Dataset::row(std::size_t k) const {
  std::vector<double> r;
  r.reserve(columns_.size());
  for (const auto& c : columns_) r.push_back(c.at(k));
  return r;
}

}  // namespace bsr
