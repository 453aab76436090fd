#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <stdexcept>
#include <string>

#include "smearlab/csv.hpp"
#include "smearlab/rng.hpp"

namespace smearlab {

struct LinearModel {
  Eigen::MatrixXd weights;  // L x D
  Eigen::VectorXd bias;     // length L; zero-length means no bias term

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
  bool has_bias() const { return bias.size() > 0; }
};

// One hidden layer with rectifier activation; the hidden activations stand in
// for pre-logits in the projection diagnostics.
struct MlpModel {
  Eigen::MatrixXd hidden_weights;  // H x D
  Eigen::VectorXd hidden_bias;     // H
  Eigen::MatrixXd output_weights;  // L x H
  Eigen::VectorXd output_bias;     // L

  int num_classes() const { return static_cast<int>(output_weights.rows()); }
  int dim() const { return static_cast<int>(hidden_weights.cols()); }
  int hidden_size() const { return static_cast<int>(hidden_weights.rows()); }
};

// Linear models start at zero so convex runs are exactly reproducible.
inline LinearModel make_linear_model(int num_classes, int dim, bool with_bias = true) {
  LinearModel m;
  m.weights = Eigen::MatrixXd::Zero(num_classes, dim);
  if (with_bias) m.bias = Eigen::VectorXd::Zero(num_classes);
  return m;
}

// Uniform fan-in initialization for both layers; biases start at zero.
inline MlpModel make_mlp_model(int num_classes, int dim, int hidden, std::uint64_t seed) {
  if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  MlpModel m;
  m.hidden_weights.resize(hidden, dim);
  m.output_weights.resize(num_classes, hidden);
  StreamRng rng(seed, 0x1d17u);
  const double s_hidden = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < dim; ++j) m.hidden_weights(i, j) = (2.0 * rng.uniform() - 1.0) * s_hidden;
  const double s_out = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int i = 0; i < num_classes; ++i)
    for (int j = 0; j < hidden; ++j)
      m.output_weights(i, j) = (2.0 * rng.uniform() - 1.0) * s_out;
  m.hidden_bias = Eigen::VectorXd::Zero(hidden);
  m.output_bias = Eigen::VectorXd::Zero(num_classes);
  return m;
}

inline Eigen::VectorXd forward(const LinearModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw std::invalid_argument("dimension mismatch");
  Eigen::VectorXd f = m.weights * x;
  if (m.has_bias()) f += m.bias;
  return f;
}

inline Eigen::VectorXd prelogits(const MlpModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.dim()) throw std::invalid_argument("dimension mismatch");
  return (m.hidden_weights * x + m.hidden_bias).cwiseMax(0.0);
}

inline Eigen::VectorXd forward(const MlpModel& m, const Eigen::VectorXd& x) {
  return m.output_weights * prelogits(m, x) + m.output_bias;
}

namespace detail {

inline void write_block(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << csv::format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace detail

// Flat CSV checkpoints: a shape line per parameter block, then its rows.
inline void save_model_csv(const std::string& path, const LinearModel& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "linear," << m.num_classes() << ',' << m.dim() << ',' << (m.has_bias() ? 1 : 0) << '\n';
  detail::write_block(out, m.weights);
  if (m.has_bias()) detail::write_block(out, m.bias.transpose());
}

inline void save_model_csv(const std::string& path, const MlpModel& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "mlp," << m.num_classes() << ',' << m.dim() << ',' << m.hidden_size() << '\n';
  detail::write_block(out, m.hidden_weights);
  detail::write_block(out, m.hidden_bias.transpose());
  detail::write_block(out, m.output_weights);
  detail::write_block(out, m.output_bias.transpose());
}

}  // namespace smearlab
