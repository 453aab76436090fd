#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "smearlab/dataset.hpp"
#include "smearlab/losses.hpp"
#include "smearlab/models.hpp"
#include "smearlab/rng.hpp"

namespace smearlab {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 1e-4;
  std::vector<int> lr_drop_epochs = {60, 80};
  double lr_drop_factor = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || learning_rate < 0.0)
      throw std::invalid_argument("epochs and batch size must be positive, lr nonnegative");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
  bool correct = false;
};

namespace detail {

struct ParamBlock {
  double* data = nullptr;
  Eigen::Index size = 0;
  bool decay = false;  // biases are excluded from weight decay
};

inline std::vector<ParamBlock> param_blocks(LinearModel& m) {
  std::vector<ParamBlock> blocks{{m.weights.data(), m.weights.size(), true}};
  if (m.has_bias()) blocks.push_back({m.bias.data(), m.bias.size(), false});
  return blocks;
}

inline std::vector<ParamBlock> param_blocks(MlpModel& m) {
  return {{m.hidden_weights.data(), m.hidden_weights.size(), true},
          {m.hidden_bias.data(), m.hidden_bias.size(), false},
          {m.output_weights.data(), m.output_weights.size(), true},
          {m.output_bias.data(), m.output_bias.size(), false}};
}

template <class Model>
Model zero_like(const Model& m) {
  Model z = m;
  for (auto& b : param_blocks(z)) std::fill(b.data, b.data + b.size, 0.0);
  return z;
}

inline void accumulate_grad(const LinearModel& m, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& g, LinearModel& grads) {
  grads.weights.noalias() += g * x.transpose();
  if (m.has_bias()) grads.bias += g;
}

inline void accumulate_grad(const MlpModel& m, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& g, MlpModel& grads) {
  const Eigen::VectorXd pre = m.hidden_weights * x + m.hidden_bias;
  const Eigen::VectorXd h = pre.cwiseMax(0.0);
  grads.output_weights.noalias() += g * h.transpose();
  grads.output_bias += g;
  Eigen::VectorXd dh = m.output_weights.transpose() * g;
  for (Eigen::Index i = 0; i < dh.size(); ++i)
    if (pre(i) <= 0.0) dh(i) = 0.0;
  grads.hidden_weights.noalias() += dh * x.transpose();
  grads.hidden_bias += dh;
}

}  // namespace detail

// Minibatch SGD with Nesterov momentum and decoupled-per-block weight decay
// folded into the gradient. per_example maps (example index, logits) to loss,
// logit gradient, and a correctness flag for the history. Deterministic per
// seed; the shuffle stream is keyed by (seed, epoch).
template <class Model, class PerExampleLoss>
std::pair<Model, TrainHistory> sgd_train(Model model, const Eigen::MatrixXd& features,
                                         PerExampleLoss&& per_example, const TrainConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(features.rows());
  if (n == 0) throw std::invalid_argument("empty training set");

  Model grads = detail::zero_like(model);
  Model momentum_buf = detail::zero_like(model);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  history.reserve(static_cast<size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    for (int drop : cfg.lr_drop_epochs)
      if (epoch >= drop) lr *= cfg.lr_drop_factor;

    // Fisher-Yates with a per-epoch stream
    StreamRng shuffle_rng(cfg.seed, 0xe70c0000u + static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[shuffle_rng.uniform_int(static_cast<std::uint32_t>(i + 1))]);

    double epoch_loss = 0.0;
    int epoch_correct = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(start + cfg.batch_size, n);
      const int batch = end - start;
      auto grad_blocks = detail::param_blocks(grads);
      for (auto& b : grad_blocks) std::fill(b.data, b.data + b.size, 0.0);

      for (int k = start; k < end; ++k) {
        const int idx = order[static_cast<size_t>(k)];
        const Eigen::VectorXd x = features.row(idx).transpose();
        const Eigen::VectorXd f = forward(model, x);
        LossGrad lg = per_example(idx, f);
        epoch_loss += lg.loss;
        epoch_correct += lg.correct ? 1 : 0;
        detail::accumulate_grad(model, x, lg.grad, grads);
      }

      auto model_blocks = detail::param_blocks(model);
      auto buf_blocks = detail::param_blocks(momentum_buf);
      for (size_t b = 0; b < model_blocks.size(); ++b) {
        double* p = model_blocks[b].data;
        double* g = grad_blocks[b].data;
        double* v = buf_blocks[b].data;
        const double inv_batch = 1.0 / batch;
        for (Eigen::Index i = 0; i < model_blocks[b].size; ++i) {
          double gi = g[i] * inv_batch;
          if (model_blocks[b].decay) gi += cfg.weight_decay * p[i];
          v[i] = cfg.momentum * v[i] + gi;
          p[i] -= lr * (gi + cfg.momentum * v[i]);
        }
      }
    }

    epoch_loss /= n;
    if (!std::isfinite(epoch_loss) || epoch_loss > 1e6)
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                               " (loss = " + std::to_string(epoch_loss) + ")");
    history.push_back({epoch, epoch_loss, static_cast<double>(epoch_correct) / n});
  }
  return {std::move(model), std::move(history)};
}

// Supervised training on the observed labels with any smeared/corrected loss.
template <class Model>
std::pair<Model, TrainHistory> train(Model model, const LabeledDataset& data,
                                     const SmearedLoss& loss, const TrainConfig& cfg) {
  data.validate();
  if (loss.num_classes() != data.num_classes)
    throw std::invalid_argument("loss/dataset class count mismatch");
  const auto& labels = data.observed_labels;
  return sgd_train(
      std::move(model), data.features,
      [&](int idx, const Eigen::VectorXd& f) {
        const int y = labels[static_cast<size_t>(idx)];
        return LossGrad{loss(y, f), loss.grad(y, f), argmax_label(f) == y};
      },
      cfg);
}

template <class Model>
double accuracy(const Model& model, const Eigen::MatrixXd& features,
                const std::vector<int>& labels) {
  if (features.rows() == 0) return 0.0;
  int correct = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    if (argmax_label(forward(model, features.row(i).transpose())) ==
        labels[static_cast<size_t>(i)])
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

// Full-batch gradient norm of the supervised objective (including weight
// decay), used as a descent diagnostic on convex problems.
template <class Model>
double objective_grad_norm(const Model& model, const LabeledDataset& data,
                           const SmearedLoss& loss, double weight_decay) {
  Model grads = detail::zero_like(model);
  for (int i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd x = data.features.row(i).transpose();
    detail::accumulate_grad(model, x, loss.grad(data.observed_labels[static_cast<size_t>(i)], forward(model, x)),
                            grads);
  }
  double sq = 0.0;
  Model mutable_model = model;
  auto gb = detail::param_blocks(grads);
  auto pb = detail::param_blocks(mutable_model);
  for (size_t b = 0; b < gb.size(); ++b)
    for (Eigen::Index i = 0; i < gb[b].size; ++i) {
      double g = gb[b].data[i] / data.size();
      if (pb[b].decay) g += weight_decay * pb[b].data[i];
      sq += g * g;
    }
  return std::sqrt(sq);
}

// Closed-form minimiser of the smoothed-target square loss. With one-hot
// targets Y the solution W* = (X^T X)^{-1} X^T Y shrinks to
// (1 - alpha) W* + (alpha / L) (X^T X)^{-1} X^T J under smoothing; for
// column-centered X the second term vanishes. Returned in the L x D layout.
inline Eigen::MatrixXd closed_form_smoothed_least_squares(const Eigen::MatrixXd& X,
                                                          const Eigen::MatrixXd& Y,
                                                          double alpha) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("X and Y row counts differ");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  const Eigen::MatrixXd gram = X.transpose() * X;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e12)
    throw std::runtime_error("design matrix is numerically singular");
  const Eigen::LLT<Eigen::MatrixXd> chol(gram);
  const Eigen::MatrixXd w_star = chol.solve(X.transpose() * Y);  // D x L
  // X^T J = (column sums of X) outer ones
  const Eigen::VectorXd col_sums = X.colwise().sum().transpose();
  const Eigen::VectorXd base = chol.solve(col_sums);  // D
  const int n_classes = static_cast<int>(Y.cols());
  Eigen::MatrixXd smoothed = (1.0 - alpha) * w_star;
  smoothed.noalias() += (alpha / n_classes) * base * Eigen::RowVectorXd::Ones(n_classes);
  return smoothed.transpose();
}

// Value of the smoothing regulariser averaged over a feature sample.
inline double omega_value(const LinearModel& model, const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw std::invalid_argument("empty feature sample");
  double total = 0.0;
  const int n_classes = model.num_classes();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd f = forward(model, features.row(i).transpose());
    total += n_classes * log_sum_exp(f) - f.sum();
  }
  return total / static_cast<double>(features.rows());
}

// Exact gradient of the regulariser with respect to W: row i is the sample
// mean of (L softmax(f)_i - 1) x. Vanishes at W = 0.
inline Eigen::MatrixXd omega_gradient_at(const LinearModel& model,
                                         const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw std::invalid_argument("empty feature sample");
  const int n_classes = model.num_classes();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n_classes, model.dim());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Eigen::VectorXd x = features.row(i).transpose();
    const Eigen::VectorXd p = softmax(forward(model, x));
    grad.noalias() += (n_classes * p.array() - 1.0).matrix() * x.transpose();
  }
  return grad / static_cast<double>(features.rows());
}

}  // namespace smearlab
