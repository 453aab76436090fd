#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "smearlab/dataset.hpp"
#include "smearlab/losses.hpp"
#include "smearlab/models.hpp"
#include "smearlab/train.hpp"

namespace smearlab {

// Temperature-softened prediction: softmax(logits / temperature).
inline Eigen::VectorXd soften(const Eigen::VectorXd& logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  return softmax(logits / temperature);
}

struct DistillConfig {
  double temperature = 2.0;
  // When set, the student's softened prediction is forward-corrected with
  // this transition matrix before the cross-entropy against teacher targets.
  std::optional<TransitionMatrix> student_forward;
  // Smoothing applied on the student side: teacher targets are mixed with
  // the uniform distribution at this level before the cross-entropy.
  double student_smoothing_alpha = 0.0;
  TrainConfig student_train;
};

// Pure distillation: the student never sees the observed labels, only the
// teacher's temperature-softened distributions. Loss per example is the
// cross-entropy -sum_y p^t_y log p^s_y at matched temperature; the student is
// evaluated at temperature 1.
template <class TeacherModel, class StudentModel>
std::pair<StudentModel, TrainHistory> distill_train(const TeacherModel& teacher,
                                                    StudentModel student,
                                                    const LabeledDataset& data,
                                                    const DistillConfig& cfg) {
  if (teacher.dim() != student.dim())
    throw std::invalid_argument("teacher/student feature dimension mismatch");
  if (teacher.num_classes() != student.num_classes())
    throw std::invalid_argument("teacher/student class count mismatch");
  const double temp = cfg.temperature;
  if (!(temp > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (cfg.student_forward && cfg.student_forward->num_classes != student.num_classes())
    throw std::invalid_argument("student forward-correction dimension mismatch");

  const double smooth = cfg.student_smoothing_alpha;
  if (smooth < 0.0 || smooth > 1.0)
    throw std::invalid_argument("student smoothing alpha must lie in [0, 1]");
  std::vector<Eigen::VectorXd> targets;
  targets.reserve(static_cast<size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) {
    Eigen::VectorXd pt = soften(forward(teacher, data.features.row(i).transpose()), temp);
    if (smooth > 0.0)
      pt = ((1.0 - smooth) * pt.array() + smooth / static_cast<double>(pt.size())).matrix();
    targets.push_back(std::move(pt));
  }

  auto per_example = [&](int idx, const Eigen::VectorXd& f) {
    const Eigen::VectorXd& pt = targets[static_cast<size_t>(idx)];
    const Eigen::VectorXd ps = softmax(f / temp);
    LossGrad lg;
    lg.correct = argmax_label(f) == argmax_label(pt);
    if (!cfg.student_forward) {
      double loss = 0.0;
      for (Eigen::Index j = 0; j < ps.size(); ++j)
        loss -= pt(j) * std::log(std::max(ps(j), 1e-300));
      lg.loss = loss;
      lg.grad = (ps - pt) / temp;
      return lg;
    }
    const Eigen::MatrixXd& t = cfg.student_forward->entries;
    const Eigen::VectorXd q = t.transpose() * ps;
    double loss = 0.0;
    Eigen::VectorXd ratio = Eigen::VectorXd::Zero(ps.size());
    for (Eigen::Index y = 0; y < q.size(); ++y) {
      const double qy = std::max(q(y), 1e-300);
      loss -= pt(y) * std::log(qy);
      ratio += (pt(y) / qy) * t.col(y);
    }
    lg.loss = loss;
    lg.grad = (ps.array() * (1.0 - ratio.array())).matrix() / temp;
    return lg;
  };

  return sgd_train(std::move(student), data.features, per_example, cfg.student_train);
}

struct SweepPoint {
  double alpha = 0.0;
  double student_test_accuracy = 0.0;
};

// Teacher smoothing sweep: for each alpha, train an LS(alpha) teacher on the
// noisy data and distill at temperature 1; report the student's accuracy on
// the clean test set.
template <class Model>
std::vector<SweepPoint> teacher_alpha_sweep(const std::vector<double>& alphas,
                                            const LabeledDataset& train_data,
                                            const LabeledDataset& test_data,
                                            const Model& init_model,
                                            const TrainConfig& teacher_cfg,
                                            const TrainConfig& student_cfg) {
  if (alphas.empty()) throw std::invalid_argument("alpha list must be nonempty");
  std::vector<SweepPoint> points;
  for (double alpha : alphas) {
    const auto loss = alpha == 0.0 ? SmearedLoss::standard(train_data.num_classes)
                                   : SmearedLoss::smoothing(train_data.num_classes, alpha);
    auto [teacher, teacher_hist] = train(init_model, train_data, loss, teacher_cfg);
    DistillConfig dcfg;
    dcfg.temperature = 1.0;
    dcfg.student_train = student_cfg;
    auto [student, student_hist] = distill_train(teacher, init_model, train_data, dcfg);
    points.push_back(
        {alpha, accuracy(student, test_data.features, test_data.observed_labels)});
  }
  return points;
}

}  // namespace smearlab
