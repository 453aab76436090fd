#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "smearlab/smearing.hpp"

namespace smearlab {

inline double log_sum_exp(const Eigen::VectorXd& f) {
  const double m = f.maxCoeff();
  return m + std::log((f.array() - m).exp().sum());
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& f) {
  const double m = f.maxCoeff();
  Eigen::VectorXd p = (f.array() - m).exp();
  return p / p.sum();
}

// Softmax cross-entropy: -f_y + log sum exp(f).
inline double ce_loss(int y, const Eigen::VectorXd& f) {
  if (y < 0 || y >= f.size()) throw std::out_of_range("label index out of range");
  return -f(y) + log_sum_exp(f);
}

// Smoothed target: (1 - alpha) one-hot + alpha / L uniform.
inline Eigen::VectorXd smoothed_label(int y, int num_classes, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (y < 0 || y >= num_classes) throw std::out_of_range("label index out of range");
  Eigen::VectorXd v = Eigen::VectorXd::Constant(num_classes, alpha / num_classes);
  v(y) += 1.0 - alpha;
  return v;
}

// Row y of the smearing matrix dotted with the per-class loss vector.
// Negative values are possible when M has negative entries.
inline double smeared_loss(const SmearingMatrix& m, int y, const Eigen::VectorXd& f) {
  if (f.size() != m.num_classes) throw std::invalid_argument("dimension mismatch");
  if (y < 0 || y >= m.num_classes) throw std::out_of_range("label index out of range");
  const double lse = log_sum_exp(f);
  double total = 0.0;
  for (int j = 0; j < m.num_classes; ++j) total += m.entries(y, j) * (-f(j) + lse);
  return total;
}

// Diagnostics for forward correction: (T^T p)_y can underflow to zero for
// extreme logits; the loss clamps at 1e-300 and counts the event.
inline std::atomic<long>& forward_clamp_count() {
  static std::atomic<long> count{0};
  return count;
}

// Forward correction: cross-entropy against the noise-adjusted prediction,
// -log((T^T softmax(f))_y). Bounded whenever column y of T has no zeros.
inline double forward_loss(const TransitionMatrix& t, int y, const Eigen::VectorXd& f) {
  if (f.size() != t.num_classes) throw std::invalid_argument("dimension mismatch");
  if (y < 0 || y >= t.num_classes) throw std::out_of_range("label index out of range");
  double q = t.entries.col(y).dot(softmax(f));
  if (q < 1e-300) {
    q = 1e-300;
    ++forward_clamp_count();
  }
  return -std::log(q);
}

enum class LossKind { standard, smoothing, backward, forward };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::standard: return "standard";
    case LossKind::smoothing: return "smoothing";
    case LossKind::backward: return "backward";
    case LossKind::forward: return "forward";
  }
  return "?";
}

// A fully-resolved loss: kind plus any matrices it needs, built once so the
// per-example path never reconstructs them.
class SmearedLoss {
 public:
  static SmearedLoss standard(int num_classes) {
    return SmearedLoss(LossKind::standard, 0.0, num_classes, std::nullopt,
                       make_standard_matrix(num_classes));
  }
  static SmearedLoss smoothing(int num_classes, double alpha) {
    return SmearedLoss(LossKind::smoothing, alpha, num_classes, std::nullopt,
                       make_smoothing_matrix(num_classes, alpha));
  }
  static SmearedLoss backward(TransitionMatrix t) {
    auto m = make_backward_matrix(t);
    const int n = t.num_classes;
    const double alpha = m.alpha;
    return SmearedLoss(LossKind::backward, alpha, n, std::move(t), std::move(m));
  }
  static SmearedLoss forward(TransitionMatrix t) {
    const int n = t.num_classes;
    return SmearedLoss(LossKind::forward, 0.0, n, std::move(t), std::nullopt);
  }

  LossKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  int num_classes() const { return num_classes_; }
  const SmearingMatrix& matrix() const {
    if (!matrix_) throw std::logic_error("loss has no smearing matrix");
    return *matrix_;
  }
  const TransitionMatrix& transition() const {
    if (!transition_) throw std::logic_error("loss has no transition matrix");
    return *transition_;
  }

  double operator()(int y, const Eigen::VectorXd& f) const {
    switch (kind_) {
      case LossKind::standard: return ce_loss(y, f);
      case LossKind::smoothing:
      case LossKind::backward: return smeared_loss(*matrix_, y, f);
      case LossKind::forward: return forward_loss(*transition_, y, f);
    }
    throw std::logic_error("unreachable");
  }

  // Exact gradient with respect to the logits.
  Eigen::VectorXd grad(int y, const Eigen::VectorXd& f) const {
    if (f.size() != num_classes_) throw std::invalid_argument("dimension mismatch");
    if (y < 0 || y >= num_classes_) throw std::out_of_range("label index out of range");
    const Eigen::VectorXd p = softmax(f);
    switch (kind_) {
      case LossKind::standard: {
        Eigen::VectorXd g = p;
        g(y) -= 1.0;
        return g;
      }
      case LossKind::smoothing:
        return p - smoothed_label(y, num_classes_, alpha_);
      case LossKind::backward: {
        const double row_sum = matrix_->entries.row(y).sum();
        return row_sum * p - matrix_->entries.row(y).transpose();
      }
      case LossKind::forward: {
        // d/df_k of -log(q_y) with q = T^T p is p_k (1 - T_{k,y} / q_y)
        double q = transition_->entries.col(y).dot(p);
        if (q < 1e-300) q = 1e-300;
        return p.array() * (1.0 - transition_->entries.col(y).array() / q);
      }
    }
    throw std::logic_error("unreachable");
  }

 private:
  SmearedLoss(LossKind kind, double alpha, int num_classes,
              std::optional<TransitionMatrix> transition, std::optional<SmearingMatrix> matrix)
      : kind_(kind),
        alpha_(alpha),
        num_classes_(num_classes),
        transition_(std::move(transition)),
        matrix_(std::move(matrix)) {}

  LossKind kind_;
  double alpha_;
  int num_classes_;
  std::optional<TransitionMatrix> transition_;
  std::optional<SmearingMatrix> matrix_;
};

// Smoothing regulariser: mean over the batch of L log sum exp(f) - sum f.
inline double omega_regulariser(const std::vector<Eigen::VectorXd>& logit_batch) {
  if (logit_batch.empty()) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (const auto& f : logit_batch)
    total += static_cast<double>(f.size()) * log_sum_exp(f) - f.sum();
  return total / static_cast<double>(logit_batch.size());
}

// Binary loss curve: logits [m, 0] swept over a margin grid, for CSV emission.
inline std::vector<std::pair<double, double>> loss_curve(const SmearedLoss& loss, int y,
                                                         double lo = -10.0, double hi = 10.0,
                                                         int points = 401) {
  if (loss.num_classes() != 2) throw std::invalid_argument("loss curves are binary only");
  std::vector<std::pair<double, double>> out;
  out.reserve(points);
  for (int i = 0; i < points; ++i) {
    const double m = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    Eigen::VectorXd f(2);
    f << m, 0.0;
    out.emplace_back(m, loss(y, f));
  }
  return out;
}

}  // namespace smearlab
