#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smearlab/csv.hpp"

namespace smearlab {

struct LabeledDataset {
  Eigen::MatrixXd features;  // N x D
  std::vector<int> observed_labels;
  std::optional<std::vector<int>> clean_labels;
  std::optional<std::vector<std::uint8_t>> noise_mask;  // true = label was changed
  int num_classes = 0;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    const size_t n = static_cast<size_t>(size());
    if (observed_labels.size() != n) throw std::invalid_argument("label count mismatch");
    if (clean_labels && clean_labels->size() != n)
      throw std::invalid_argument("clean label count mismatch");
    if (noise_mask && noise_mask->size() != n)
      throw std::invalid_argument("noise mask count mismatch");
    for (size_t i = 0; i < n; ++i) {
      if (observed_labels[i] < 0 || observed_labels[i] >= num_classes)
        throw std::invalid_argument("observed label out of range");
      if (clean_labels && ((*clean_labels)[i] < 0 || (*clean_labels)[i] >= num_classes))
        throw std::invalid_argument("clean label out of range");
      if (clean_labels && noise_mask &&
          static_cast<bool>((*noise_mask)[i]) != (observed_labels[i] != (*clean_labels)[i]))
        throw std::invalid_argument("noise mask inconsistent with labels");
    }
  }
};

// CSV layout: D feature columns, observed label, then (optionally) clean label.
inline void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) out << csv::format_double(data.features(i, j)) << ',';
    out << data.observed_labels[i];
    if (data.clean_labels) out << ',' << (*data.clean_labels)[i];
    out << '\n';
  }
}

inline LabeledDataset read_dataset_csv(const std::string& path, int num_classes,
                                       bool has_clean_labels = false) {
  const auto rows = csv::read_numeric(path);
  if (rows.empty()) throw std::runtime_error("empty dataset file: " + path);
  const int label_cols = has_clean_labels ? 2 : 1;
  const int dim = static_cast<int>(rows[0].size()) - label_cols;
  if (dim < 1) throw std::runtime_error("dataset rows need at least one feature column");
  LabeledDataset data;
  data.num_classes = num_classes;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  data.observed_labels.resize(rows.size());
  if (has_clean_labels) data.clean_labels.emplace(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != dim + label_cols)
      throw std::runtime_error("ragged dataset file: " + path);
    for (int j = 0; j < dim; ++j) data.features(static_cast<Eigen::Index>(i), j) = rows[i][j];
    data.observed_labels[i] = static_cast<int>(std::lround(rows[i][dim]));
    if (has_clean_labels)
      (*data.clean_labels)[i] = static_cast<int>(std::lround(rows[i][dim + 1]));
  }
  if (has_clean_labels) {
    data.noise_mask.emplace(rows.size());
    for (size_t i = 0; i < rows.size(); ++i)
      (*data.noise_mask)[i] = data.observed_labels[i] != (*data.clean_labels)[i];
  }
  data.validate();
  return data;
}

}  // namespace smearlab
