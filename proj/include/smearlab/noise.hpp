#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "smearlab/dataset.hpp"
#include "smearlab/rng.hpp"
#include "smearlab/smearing.hpp"

namespace smearlab {

enum class NoiseMode {
  resample_any,   // corrupted labels redrawn uniformly from all L classes
  flip_to_other,  // corrupted labels redrawn uniformly from the other L-1 classes
};

// Symmetric noise injection. Each example is independently corrupted with
// probability rho; stream-per-example RNG makes the result order-independent
// and reproducible per seed. Features are never touched.
inline LabeledDataset inject_symmetric(const LabeledDataset& data, double rho, NoiseMode mode,
                                       std::uint64_t seed) {
  if (data.noise_mask)
    throw std::invalid_argument("dataset already carries a noise mask");
  const int n_classes = data.num_classes;
  if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("rho must lie in [0, 1)");
  if (mode == NoiseMode::flip_to_other && rho >= 1.0 - 1.0 / n_classes)
    throw std::invalid_argument("rho must lie in [0, 1 - 1/L) for flip-to-other");
  LabeledDataset out = data;
  out.clean_labels = data.observed_labels;
  out.noise_mask.emplace(data.observed_labels.size(), 0);
  for (int i = 0; i < data.size(); ++i) {
    StreamRng rng(seed, static_cast<std::uint64_t>(i));
    if (rng.uniform() >= rho) continue;
    const int y = data.observed_labels[i];
    int new_label;
    if (mode == NoiseMode::resample_any) {
      new_label = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(n_classes)));
    } else {
      const int r = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(n_classes - 1)));
      new_label = r >= y ? r + 1 : r;
    }
    out.observed_labels[i] = new_label;
    (*out.noise_mask)[i] = new_label != y;
  }
  return out;
}

// Class-conditional noise: each label y is resampled from row y of T.
inline LabeledDataset inject_class_conditional(const LabeledDataset& data,
                                               const TransitionMatrix& t, std::uint64_t seed) {
  if (data.noise_mask)
    throw std::invalid_argument("dataset already carries a noise mask");
  if (t.num_classes != data.num_classes) throw std::invalid_argument("dimension mismatch");
  LabeledDataset out = data;
  out.clean_labels = data.observed_labels;
  out.noise_mask.emplace(data.observed_labels.size(), 0);
  for (int i = 0; i < data.size(); ++i) {
    StreamRng rng(seed, static_cast<std::uint64_t>(i));
    const int y = data.observed_labels[i];
    const double u = rng.uniform();
    double cdf = 0.0;
    int new_label = t.num_classes - 1;
    for (int j = 0; j < t.num_classes; ++j) {
      cdf += t.entries(y, j);
      if (u < cdf) {
        new_label = j;
        break;
      }
    }
    out.observed_labels[i] = new_label;
    (*out.noise_mask)[i] = new_label != y;
  }
  return out;
}

// Percentile-based estimate of T from model outputs on noisy data: row j is
// the full probability vector of the example whose class-j probability sits
// at the given percentile (nearest rank, ties toward the lowest example
// index), renormalized to sum to 1.
inline TransitionMatrix estimate_transition_percentile(const Eigen::MatrixXd& probs,
                                                       double percentile) {
  const Eigen::Index n = probs.rows();
  const int n_classes = static_cast<int>(probs.cols());
  if (n == 0) throw std::invalid_argument("empty probability matrix");
  if (percentile <= 0.0 || percentile > 100.0)
    throw std::invalid_argument("percentile must lie in (0, 100]");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("probability rows must sum to 1");

  Eigen::MatrixXd estimate(n_classes, n_classes);
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (int j = 0; j < n_classes; ++j) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (probs(a, j) != probs(b, j)) return probs(a, j) < probs(b, j);
      return a < b;
    });
    const auto rank = static_cast<size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(n)));
    const Eigen::Index pick = order[std::min(rank == 0 ? 0 : rank - 1, order.size() - 1)];
    estimate.row(j) = probs.row(pick) / probs.row(pick).sum();
  }
  return make_transition(std::move(estimate));
}

}  // namespace smearlab
