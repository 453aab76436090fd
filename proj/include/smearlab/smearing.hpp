#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "smearlab/csv.hpp"

namespace smearlab {

inline constexpr int kMaxClasses = 10000;

// Row-stochastic L x L noise matrix: entry (y, y') is the probability that a
// clean label y is observed as y'.
struct TransitionMatrix {
  int num_classes = 0;
  Eigen::MatrixXd entries;
};

enum class SmearMethod { standard, smoothing, backward, forward };

inline const char* to_string(SmearMethod m) {
  switch (m) {
    case SmearMethod::standard: return "standard";
    case SmearMethod::smoothing: return "smoothing";
    case SmearMethod::backward: return "backward";
    case SmearMethod::forward: return "forward";
  }
  return "?";
}

// L x L matrix applied to the per-class loss vector. Entries may be negative
// (backward correction). The forward method is only a tag here: it reweights
// predictions rather than losses, so its action lives with the losses.
struct SmearingMatrix {
  int num_classes = 0;
  Eigen::MatrixXd entries;
  SmearMethod method = SmearMethod::standard;
  double alpha = 0.0;
};

namespace detail {

inline void check_num_classes(int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (num_classes > kMaxClasses) throw std::invalid_argument("num_classes exceeds cap");
}

inline void check_row_stochastic(const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (v < 0.0 || v > 1.0 || !std::isfinite(v))
        throw std::invalid_argument("transition entries must lie in [0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("transition rows must sum to 1");
  }
}

}  // namespace detail

inline TransitionMatrix make_transition(Eigen::MatrixXd entries) {
  if (entries.rows() != entries.cols()) throw std::invalid_argument("transition must be square");
  detail::check_num_classes(static_cast<int>(entries.rows()));
  detail::check_row_stochastic(entries);
  return {static_cast<int>(entries.rows()), std::move(entries)};
}

// Symmetric noise: flip probability rho spread uniformly over the other
// classes. T = (1 - a) I + (a / L) J with a = L / (L - 1) * rho.
inline TransitionMatrix make_symmetric_transition(int num_classes, double rho) {
  detail::check_num_classes(num_classes);
  const double bound = 1.0 - 1.0 / num_classes;
  if (rho < 0.0 || rho >= bound)
    throw std::invalid_argument("rho must lie in [0, 1 - 1/L)");
  const double a = static_cast<double>(num_classes) / (num_classes - 1) * rho;
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(num_classes, num_classes, a / num_classes);
  m.diagonal().array() += 1.0 - a;
  return {num_classes, std::move(m)};
}

inline SmearingMatrix make_standard_matrix(int num_classes) {
  detail::check_num_classes(num_classes);
  return {num_classes, Eigen::MatrixXd::Identity(num_classes, num_classes),
          SmearMethod::standard, 0.0};
}

// Label smoothing as a smearing matrix: (1 - alpha) I + (alpha / L) J.
inline SmearingMatrix make_smoothing_matrix(int num_classes, double alpha) {
  detail::check_num_classes(num_classes);
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0, 1]");
  Eigen::MatrixXd m =
      Eigen::MatrixXd::Constant(num_classes, num_classes, alpha / num_classes);
  m.diagonal().array() += 1.0 - alpha;
  return {num_classes, std::move(m), SmearMethod::smoothing, alpha};
}

// True when T has the symmetric-noise structure: constant diagonal d and
// constant off-diagonal o with d + (L-1) o = 1.
inline bool is_symmetric_transition(const TransitionMatrix& t, double tol = 1e-12) {
  const int n = t.num_classes;
  const double d = t.entries(0, 0);
  const double o = n > 1 ? t.entries(0, 1) : 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double want = (i == j) ? d : o;
      if (std::abs(t.entries(i, j) - want) > tol) return false;
    }
  return true;
}

// Backward correction matrix M = T^{-1}. For symmetric T the Sherman-Morrison
// closed form (1 / (1 - a)) (I - (a / L) J) is used; the general path inverts
// densely with a condition guard.
inline SmearingMatrix make_backward_matrix(const TransitionMatrix& t) {
  const int n = t.num_classes;
  if (is_symmetric_transition(t)) {
    const double a = (1.0 - t.entries(0, 0)) * n / (n - 1.0);
    if (std::abs(1.0 - a) < 1e-12)
      throw std::runtime_error("backward correction: transition matrix is singular");
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, -a / n / (1.0 - a));
    m.diagonal().array() += 1.0 / (1.0 - a);
    return {n, std::move(m), SmearMethod::backward, a};
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(t.entries);
  if (!lu.isInvertible())
    throw std::runtime_error("backward correction: transition matrix is singular");
  Eigen::MatrixXd inv = lu.inverse();
  const double cond = t.entries.cwiseAbs().rowwise().sum().maxCoeff() *
                      inv.cwiseAbs().rowwise().sum().maxCoeff();
  if (!(cond < 1e12))
    throw std::runtime_error("backward correction: transition matrix is ill-conditioned");
  return {n, std::move(inv), SmearMethod::backward, 0.0};
}

// Effective target distribution induced by smearing: M^T p.
inline Eigen::VectorXd smear_distribution(const SmearingMatrix& m, const Eigen::VectorXd& p) {
  if (p.size() != m.num_classes) throw std::invalid_argument("dimension mismatch");
  if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("p must be a probability vector");
  return m.entries.transpose() * p;
}

// Index of the maximal entry; ties resolved toward the lowest index.
inline int argmax_label(const Eigen::VectorXd& p) {
  if (p.size() == 0) throw std::invalid_argument("argmax of empty vector");
  int best = 0;
  for (int i = 1; i < p.size(); ++i)
    if (p(i) > p(best)) best = i;
  return best;
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << csv::format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const auto rows = csv::read_numeric(path);
  if (rows.empty()) throw std::runtime_error("empty matrix file: " + path);
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::runtime_error("ragged matrix file: " + path);
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

inline TransitionMatrix read_transition_csv(const std::string& path) {
  return make_transition(read_matrix_csv(path));
}

}  // namespace smearlab
