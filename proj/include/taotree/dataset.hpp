#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "taotree/error.hpp"

namespace taotree {

using Label = std::int32_t;

// Dense row-major N x F feature matrix with integer class labels.
//
// `feature_nonneg` is derived from the values on construction and never taken
// from the caller; the mask guarantees depend on it.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::size_t num_rows, std::size_t num_features, std::vector<double> features,
          std::vector<Label> labels, int num_classes)
      : num_rows_(num_rows),
        num_features_(num_features),
        num_classes_(num_classes),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    if (num_classes_ < 2) {
      throw InputError("dataset needs at least 2 classes, got " + std::to_string(num_classes_));
    }
    if (features_.size() != num_rows_ * num_features_) {
      throw InputError("feature buffer has " + std::to_string(features_.size()) +
                       " entries, expected " + std::to_string(num_rows_ * num_features_));
    }
    if (labels_.size() != num_rows_) {
      throw InputError("label count " + std::to_string(labels_.size()) +
                       " does not match row count " + std::to_string(num_rows_));
    }
    for (std::size_t n = 0; n < labels_.size(); ++n) {
      if (labels_[n] < 0 || labels_[n] >= num_classes_) {
        throw InputError("label " + std::to_string(labels_[n]) + " at row " + std::to_string(n) +
                         " outside [0, " + std::to_string(num_classes_) + ")");
      }
    }
    feature_nonneg_ =
        std::none_of(features_.begin(), features_.end(), [](double v) { return v < 0.0; });
  }

  std::size_t size() const noexcept { return num_rows_; }
  std::size_t num_features() const noexcept { return num_features_; }
  int num_classes() const noexcept { return num_classes_; }
  bool feature_nonneg() const noexcept { return feature_nonneg_; }

  std::span<const double> row(std::size_t n) const {
    return {features_.data() + n * num_features_, num_features_};
  }
  Label label(std::size_t n) const { return labels_[n]; }

  const std::vector<double>& features() const noexcept { return features_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }

  // Count of each class label.
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes_), 0);
    for (Label y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  // Mean of strictly positive feature entries; 0 if there are none.
  double mean_positive_feature() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : features_) {
      if (v > 0.0) {
        sum += v;
        ++count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }

 private:
  std::size_t num_rows_ = 0;
  std::size_t num_features_ = 0;
  int num_classes_ = 2;
  bool feature_nonneg_ = true;
  std::vector<double> features_;
  std::vector<Label> labels_;
};

}  // namespace taotree
