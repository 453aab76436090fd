#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "smearlab/dataset.hpp"
#include "smearlab/losses.hpp"
#include "smearlab/models.hpp"
#include "smearlab/smearing.hpp"

namespace smearlab {

struct RunReport {
  double test_accuracy = 0.0;
  double train_accuracy_full_true = 0.0;
  double train_accuracy_clean_true = 0.0;
  double train_accuracy_noisy_true = 0.0;
  double train_accuracy_noisy_observed = 0.0;
  double ece = 0.0;
  std::vector<double> gap_samples;
};

// Accuracy on the full/clean/noisy portions of a noise-injected training set,
// against true labels, plus the fit to the observed labels on the noisy part.
template <class Model>
RunReport breakdown_accuracy(const Model& model, const LabeledDataset& data) {
  if (!data.clean_labels || !data.noise_mask)
    throw std::invalid_argument("breakdown requires clean labels and a noise mask");
  RunReport report;
  int full_hit = 0, clean_hit = 0, noisy_true_hit = 0, noisy_obs_hit = 0;
  int n_clean = 0, n_noisy = 0;
  for (int i = 0; i < data.size(); ++i) {
    const int pred = argmax_label(forward(model, data.features.row(i).transpose()));
    const int truth = (*data.clean_labels)[static_cast<size_t>(i)];
    const int observed = data.observed_labels[static_cast<size_t>(i)];
    if (pred == truth) ++full_hit;
    if ((*data.noise_mask)[static_cast<size_t>(i)]) {
      ++n_noisy;
      if (pred == truth) ++noisy_true_hit;
      if (pred == observed) ++noisy_obs_hit;
    } else {
      ++n_clean;
      if (pred == truth) ++clean_hit;
    }
  }
  report.train_accuracy_full_true = data.size() ? static_cast<double>(full_hit) / data.size() : 0.0;
  report.train_accuracy_clean_true = n_clean ? static_cast<double>(clean_hit) / n_clean : 0.0;
  report.train_accuracy_noisy_true = n_noisy ? static_cast<double>(noisy_true_hit) / n_noisy : 0.0;
  report.train_accuracy_noisy_observed =
      n_noisy ? static_cast<double>(noisy_obs_hit) / n_noisy : 0.0;
  return report;
}

// Expected calibration error over equal-width confidence bins ((b-1)/B, b/B],
// confidence = max class probability.
inline double expected_calibration_error(const Eigen::MatrixXd& probs,
                                         const std::vector<int>& labels, int bins) {
  const Eigen::Index n = probs.rows();
  if (n == 0) throw std::invalid_argument("empty probability matrix");
  if (bins < 1) throw std::invalid_argument("bins must be >= 1");
  if (labels.size() != static_cast<size_t>(n))
    throw std::invalid_argument("label count mismatch");
  std::vector<double> conf_sum(static_cast<size_t>(bins), 0.0);
  std::vector<int> hits(static_cast<size_t>(bins), 0), counts(static_cast<size_t>(bins), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index pred;
    const double conf = probs.row(i).maxCoeff(&pred);
    int b = static_cast<int>(std::ceil(conf * bins)) - 1;
    b = std::max(0, std::min(bins - 1, b));
    conf_sum[static_cast<size_t>(b)] += conf;
    counts[static_cast<size_t>(b)] += 1;
    if (static_cast<int>(pred) == labels[static_cast<size_t>(i)])
      hits[static_cast<size_t>(b)] += 1;
  }
  double ece = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (!counts[static_cast<size_t>(b)]) continue;
    const double acc =
        static_cast<double>(hits[static_cast<size_t>(b)]) / counts[static_cast<size_t>(b)];
    const double conf = conf_sum[static_cast<size_t>(b)] / counts[static_cast<size_t>(b)];
    ece += (static_cast<double>(counts[static_cast<size_t>(b)]) / n) * std::abs(acc - conf);
  }
  return ece;
}

template <class Model>
Eigen::MatrixXd predicted_probs(const Model& model, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd probs(features.rows(), model.num_classes());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    probs.row(i) = softmax(forward(model, features.row(i).transpose())).transpose();
  return probs;
}

enum class LabelSource { observed, clean };

// Per-example gap between the label's score and the mean score over classes.
// Default reads the score as the softmax probability; raw logits behind the
// flag. Probability gaps lie in [-1/L, 1 - 1/L].
template <class Model>
std::vector<double> logit_gap_samples(const Model& model, const LabeledDataset& data,
                                      LabelSource source, bool use_probability = true) {
  const std::vector<int>* labels = &data.observed_labels;
  if (source == LabelSource::clean) {
    if (!data.clean_labels) throw std::invalid_argument("dataset has no clean labels");
    labels = &*data.clean_labels;
  }
  std::vector<double> gaps;
  gaps.reserve(static_cast<size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) {
    Eigen::VectorXd score = forward(model, data.features.row(i).transpose());
    if (use_probability) score = softmax(score);
    gaps.push_back(score((*labels)[static_cast<size_t>(i)]) - score.mean());
  }
  return gaps;
}

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  int clean_label = 0;
  bool noisy = false;
};

// Projects pre-logits of examples from three classes onto the orthonormalized
// plane spanned by the differences of the output-weight templates, centered
// at the mean template.
inline std::vector<ProjectedPoint> prelogit_projection(const MlpModel& model,
                                                       const LabeledDataset& data, int class_a,
                                                       int class_b, int class_c) {
  const int n_classes = model.num_classes();
  if (class_a == class_b || class_a == class_c || class_b == class_c)
    throw std::invalid_argument("classes must be distinct");
  for (int c : {class_a, class_b, class_c})
    if (c < 0 || c >= n_classes) throw std::invalid_argument("class index out of range");

  const Eigen::VectorXd w_a = model.output_weights.row(class_a).transpose();
  const Eigen::VectorXd w_b = model.output_weights.row(class_b).transpose();
  const Eigen::VectorXd w_c = model.output_weights.row(class_c).transpose();
  Eigen::VectorXd u1 = w_b - w_a;
  const double n1 = u1.norm();
  if (n1 < 1e-10) throw std::invalid_argument("degenerate projection basis");
  u1 /= n1;
  Eigen::VectorXd u2 = (w_c - w_a) - u1.dot(w_c - w_a) * u1;
  const double n2 = u2.norm();
  if (n2 < 1e-10) throw std::invalid_argument("degenerate projection basis");
  u2 /= n2;
  const Eigen::VectorXd center = (w_a + w_b + w_c) / 3.0;

  const std::vector<int>& labels =
      data.clean_labels ? *data.clean_labels : data.observed_labels;
  std::vector<ProjectedPoint> points;
  for (int i = 0; i < data.size(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y != class_a && y != class_b && y != class_c) continue;
    const Eigen::VectorXd h =
        prelogits(model, data.features.row(i).transpose()) - center;
    points.push_back({h.dot(u1), h.dot(u2), y,
                      data.noise_mask && (*data.noise_mask)[static_cast<size_t>(i)] != 0});
  }
  return points;
}

}  // namespace smearlab
