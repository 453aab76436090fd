#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "smearlab/dataset.hpp"
#include "smearlab/losses.hpp"
#include "smearlab/models.hpp"
#include "smearlab/noise.hpp"
#include "smearlab/rng.hpp"
#include "smearlab/train.hpp"

namespace smearlab {

struct BlobSpec {
  std::vector<Eigen::VectorXd> centers;
  double variance = 0.01;  // isotropic
  int samples_per_class = 500;
  std::uint64_t seed = 0;
};

// Isotropic Gaussian blobs, one center per class, exactly balanced. Each
// example owns an RNG stream so generation is seed-deterministic.
inline LabeledDataset make_blobs(const BlobSpec& spec) {
  if (spec.centers.size() < 2) throw std::invalid_argument("need at least two centers");
  if (spec.variance < 0.0) throw std::invalid_argument("variance must be nonnegative");
  if (spec.samples_per_class < 1) throw std::invalid_argument("samples_per_class must be >= 1");
  const int n_classes = static_cast<int>(spec.centers.size());
  const int dim = static_cast<int>(spec.centers[0].size());
  for (const auto& c : spec.centers)
    if (c.size() != dim) throw std::invalid_argument("centers must share a dimension");

  LabeledDataset data;
  data.num_classes = n_classes;
  data.features.resize(static_cast<Eigen::Index>(n_classes) * spec.samples_per_class, dim);
  data.observed_labels.resize(static_cast<size_t>(n_classes) * spec.samples_per_class);
  const double sigma = std::sqrt(spec.variance);
  Eigen::Index row = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int k = 0; k < spec.samples_per_class; ++k, ++row) {
      StreamRng rng(spec.seed, static_cast<std::uint64_t>(row));
      for (int j = 0; j < dim; ++j)
        data.features(row, j) = spec.centers[c](j) + sigma * rng.normal();
      data.observed_labels[static_cast<size_t>(row)] = c;
    }
  }
  return data;
}

// Signed distance from the origin to the two-class decision boundary
// {x : (w0 - w1) . x + (b0 - b1) = 0}, measured along the given direction.
inline double separator_offset(const LinearModel& model, const Eigen::VectorXd& direction) {
  if (model.num_classes() != 2) throw std::invalid_argument("separator offset is two-class only");
  if (direction.size() != model.dim()) throw std::invalid_argument("dimension mismatch");
  const double dir_norm = direction.norm();
  if (dir_norm == 0.0) throw std::invalid_argument("direction must be nonzero");
  const Eigen::VectorXd w = (model.weights.row(0) - model.weights.row(1)).transpose();
  if (w.norm() < 1e-12) throw std::invalid_argument("degenerate model: identical class weights");
  const double b = model.has_bias() ? model.bias(0) - model.bias(1) : 0.0;
  const double slope = w.dot(direction / dir_norm);
  if (std::abs(slope) < 1e-12)
    throw std::invalid_argument("direction is parallel to the separator");
  return -b / slope;
}

struct Figure5Row {
  std::string setting;  // "clean", "smoothing", or "l2"
  double parameter = 0.0;
  std::uint64_t seed = 0;
  double offset = 0.0;
};

struct Figure5Options {
  int samples_per_class = 500;
  double variance = 0.01;
  double noise_rate = 0.05;  // asymmetric: negatives flipped to positive
  TrainConfig train;

  Figure5Options() {
    train.epochs = 150;
    train.batch_size = 32;
    train.learning_rate = 0.5;
    train.momentum = 0.9;
    train.weight_decay = 0.0;
    train.lr_drop_epochs = {100, 130};
  }
};

// Separator-geometry experiment: two Gaussian blobs at +/-(1, 1), asymmetric
// label noise flipping a fraction of the negatives (class 1) to positive, and
// logistic regression trained per setting. The offset is measured along the
// (1, 1) axis; noise pulls it negative, smoothing and l2 pull it back.
inline std::vector<Figure5Row> figure5_experiment(const std::vector<double>& alphas,
                                                  const std::vector<double>& l2_coeffs,
                                                  const std::vector<std::uint64_t>& seeds,
                                                  const Figure5Options& options = {}) {
  if (alphas.empty() || l2_coeffs.empty() || seeds.empty())
    throw std::invalid_argument("alphas, l2 coefficients, and seeds must be nonempty");

  Eigen::VectorXd axis(2);
  axis << 1.0, 1.0;
  BlobSpec spec;
  spec.centers = {axis, -axis};  // class 0 positive, class 1 negative
  spec.variance = options.variance;
  spec.samples_per_class = options.samples_per_class;

  Eigen::MatrixXd noise(2, 2);
  noise << 1.0, 0.0, options.noise_rate, 1.0 - options.noise_rate;
  const TransitionMatrix asym = make_transition(noise);
  const Eigen::VectorXd direction = axis / axis.norm();

  std::vector<Figure5Row> rows;
  for (std::uint64_t seed : seeds) {
    spec.seed = seed;
    const LabeledDataset clean = make_blobs(spec);
    const LabeledDataset noisy = inject_class_conditional(clean, asym, seed + 1);

    TrainConfig cfg = options.train;
    cfg.seed = seed;

    auto fit_offset = [&](const LabeledDataset& data, const SmearedLoss& loss,
                          double weight_decay) {
      TrainConfig run_cfg = cfg;
      run_cfg.weight_decay = weight_decay;
      auto [model, hist] = train(make_linear_model(2, 2, true), data, loss, run_cfg);
      return separator_offset(model, direction);
    };

    rows.push_back({"clean", 0.0, seed, fit_offset(clean, SmearedLoss::standard(2), 0.0)});
    for (double alpha : alphas) {
      const auto loss =
          alpha == 0.0 ? SmearedLoss::standard(2) : SmearedLoss::smoothing(2, alpha);
      rows.push_back({"smoothing", alpha, seed, fit_offset(noisy, loss, 0.0)});
    }
    for (double coeff : l2_coeffs)
      rows.push_back({"l2", coeff, seed, fit_offset(noisy, SmearedLoss::standard(2), coeff)});
  }
  return rows;
}

}  // namespace smearlab
