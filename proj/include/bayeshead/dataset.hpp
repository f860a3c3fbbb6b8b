#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bayeshead/core_math.hpp"
#include "bayeshead/error.hpp"

namespace bayeshead {

// Feature vectors with integer class labels. Rows are the unit of training
// and evaluation.
struct FeatureDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::string name;
  std::size_t n_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool empty() const noexcept { return labels.empty(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(n_classes, 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  void validate() const {
    require(features.rows() == labels.size() && ids.size() == labels.size(), ErrorKind::shape,
            "dataset '" + name + "' has inconsistent row counts");
    require(labels.empty() || features.cols() >= 1, ErrorKind::shape,
            "dataset '" + name + "' has no feature columns");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < n_classes, ErrorKind::schema,
              "dataset '" + name + "' label " + std::to_string(y) + " outside [0, " +
                  std::to_string(n_classes) + ")");
  }
};

// Rows of a dataset selected by index; the unit a training step consumes.
struct BatchView {
  const FeatureDataset& data;
  std::span<const std::size_t> rows;

  std::size_t size() const noexcept { return rows.size(); }
  std::span<const double> features(std::size_t i) const { return data.features.row(rows[i]); }
  int label(std::size_t i) const { return data.labels[rows[i]]; }
};

// Copy of the selected rows, in the given order.
inline FeatureDataset subset(const FeatureDataset& data, std::span<const std::size_t> rows,
                             std::string name) {
  FeatureDataset out;
  out.name = std::move(name);
  out.n_classes = data.n_classes;
  out.features = Matrix(rows.size(), data.dim());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(data.labels[rows[i]]);
    out.ids.push_back(data.ids[rows[i]]);
  }
  return out;
}

}  // namespace bayeshead
