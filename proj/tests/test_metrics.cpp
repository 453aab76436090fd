#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <random>

#include "smearlab/metrics.hpp"
#include "smearlab/noise.hpp"
#include "smearlab/synth.hpp"

using namespace smearlab;
using Catch::Approx;

namespace {

// brute-force binning oracle, deliberately separate from the implementation
double ece_oracle(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int bins) {
  const Eigen::Index n = probs.rows();
  double total = 0.0;
  for (int b = 1; b <= bins; ++b) {
    const double lo = static_cast<double>(b - 1) / bins;
    const double hi = static_cast<double>(b) / bins;
    double conf_sum = 0.0;
    int count = 0, hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index pred;
      const double conf = probs.row(i).maxCoeff(&pred);
      const bool in_bin = (conf > lo && conf <= hi) || (b == 1 && conf <= lo);
      if (!in_bin) continue;
      ++count;
      conf_sum += conf;
      if (static_cast<int>(pred) == labels[static_cast<size_t>(i)]) ++hits;
    }
    if (count)
      total += (static_cast<double>(count) / n) *
               std::abs(static_cast<double>(hits) / count - conf_sum / count);
  }
  return total;
}

LabeledDataset noisy_three_blobs(std::uint64_t seed, int per_class = 60) {
  BlobSpec spec;
  Eigen::VectorXd a(2), b(2), c(2);
  a << 2, 0;
  b << -1, 1.7;
  c << -1, -1.7;
  spec.centers = {a, b, c};
  spec.variance = 0.5;
  spec.samples_per_class = per_class;
  spec.seed = seed;
  return inject_symmetric(make_blobs(spec), 0.2, NoiseMode::resample_any, seed + 100);
}

}  // namespace

TEST_CASE("accuracy breakdown") {
  auto data = noisy_three_blobs(1);
  SECTION("an oracle that predicts the clean label") {
    // nearest-center predictor is exact for the synthetic labels at tiny variance
    BlobSpec spec;
    Eigen::VectorXd a(2), b(2), c(2);
    a << 2, 0;
    b << -1, 1.7;
    c << -1, -1.7;
    spec.centers = {a, b, c};
    spec.variance = 1e-6;
    spec.samples_per_class = 50;
    spec.seed = 3;
    auto tight = inject_symmetric(make_blobs(spec), 0.3, NoiseMode::flip_to_other, 4);
    LinearModel nearest;  // argmax of c_k . x - |c_k|^2 / 2 is the nearest center
    nearest.weights.resize(3, 2);
    nearest.weights << a.transpose(), b.transpose(), c.transpose();
    nearest.bias.resize(3);
    nearest.bias << -a.squaredNorm() / 2, -b.squaredNorm() / 2, -c.squaredNorm() / 2;
    const auto report = breakdown_accuracy(nearest, tight);
    REQUIRE(report.train_accuracy_full_true == Approx(1.0));
    REQUIRE(report.train_accuracy_clean_true == Approx(1.0));
    REQUIRE(report.train_accuracy_noisy_true == Approx(1.0));
    REQUIRE(report.train_accuracy_noisy_observed == Approx(0.0));
  }
  SECTION("full accuracy is the weighted mean of the parts") {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 5;
    auto [model, history] = train(make_linear_model(3, 2, true), data,
                                  SmearedLoss::standard(3), cfg);
    const auto report = breakdown_accuracy(model, data);
    int n_noisy = 0;
    for (auto flag : *data.noise_mask) n_noisy += flag ? 1 : 0;
    const int n_clean = data.size() - n_noisy;
    const double recombined = (n_clean * report.train_accuracy_clean_true +
                               n_noisy * report.train_accuracy_noisy_true) /
                              data.size();
    REQUIRE(report.train_accuracy_full_true == Approx(recombined).margin(1e-12));
  }
  SECTION("requires clean labels") {
    LabeledDataset plain = data;
    plain.clean_labels.reset();
    plain.noise_mask.reset();
    REQUIRE_THROWS_AS(breakdown_accuracy(make_linear_model(3, 2), plain),
                      std::invalid_argument);
  }
}

TEST_CASE("expected calibration error") {
  SECTION("perfectly confident and correct gives zero") {
    Eigen::MatrixXd probs(4, 2);
    probs << 1, 0, 1, 0, 0, 1, 0, 1;
    REQUIRE(expected_calibration_error(probs, {0, 0, 1, 1}, 100) == Approx(0.0).margin(1e-15));
  }
  SECTION("hand-computed two-example case") {
    Eigen::MatrixXd probs(2, 2);
    probs << 0.8, 0.2, 0.8, 0.2;
    REQUIRE(expected_calibration_error(probs, {0, 1}, 10) == Approx(0.3).margin(1e-12));
  }
  SECTION("matches the brute-force oracle on random instances") {
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 200, n_classes = 4;
      Eigen::MatrixXd probs(n, n_classes);
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n_classes; ++j) sum += (probs(i, j) = uni(gen) + 1e-9);
        probs.row(i) /= sum;
        labels[static_cast<size_t>(i)] = static_cast<int>(gen() % n_classes);
      }
      REQUIRE(expected_calibration_error(probs, labels, 100) ==
              Approx(ece_oracle(probs, labels, 100)).margin(1e-12));
    }
  }
  SECTION("invariant to permutation and duplication") {
    std::mt19937_64 gen(43);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int n = 50;
    Eigen::MatrixXd probs(n, 3);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 3; ++j) sum += (probs(i, j) = uni(gen) + 1e-9);
      probs.row(i) /= sum;
      labels[static_cast<size_t>(i)] = static_cast<int>(gen() % 3);
    }
    const double base = expected_calibration_error(probs, labels, 15);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    Eigen::MatrixXd shuffled(n, 3);
    std::vector<int> shuffled_labels(n);
    for (int i = 0; i < n; ++i) {
      shuffled.row(i) = probs.row(perm[static_cast<size_t>(i)]);
      shuffled_labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    REQUIRE(expected_calibration_error(shuffled, shuffled_labels, 15) ==
            Approx(base).margin(1e-12));

    Eigen::MatrixXd doubled(2 * n, 3);
    doubled << probs, probs;
    std::vector<int> doubled_labels = labels;
    doubled_labels.insert(doubled_labels.end(), labels.begin(), labels.end());
    REQUIRE(expected_calibration_error(doubled, doubled_labels, 15) ==
            Approx(base).margin(1e-12));
  }
  SECTION("rejects empty input") {
    REQUIRE_THROWS_AS(expected_calibration_error(Eigen::MatrixXd(0, 2), {}, 10),
                      std::invalid_argument);
  }
}

TEST_CASE("logit gap samples") {
  auto data = noisy_three_blobs(7);
  SECTION("uniform predictor gives all-zero gaps") {
    const auto model = make_linear_model(3, 2, false);  // zero weights, uniform softmax
    for (double gap : logit_gap_samples(model, data, LabelSource::observed))
      REQUIRE(gap == Approx(0.0).margin(1e-15));
  }
  SECTION("confident correct predictor approaches 1 - 1/L") {
    LinearModel model = make_linear_model(3, 2, true);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 1.0;
    cfg.weight_decay = 0.0;
    cfg.seed = 8;
    auto [trained, history] = train(model, data, SmearedLoss::standard(3), cfg);
    const auto gaps = logit_gap_samples(trained, data, LabelSource::observed);
    for (double gap : gaps) {
      REQUIRE(gap >= -1.0 / 3 - 1e-12);
      REQUIRE(gap <= 2.0 / 3 + 1e-12);
    }
  }
  SECTION("raw logit gaps are exposed behind the flag") {
    LinearModel model = make_linear_model(3, 2, true);
    model.weights.setRandom();
    const auto raw = logit_gap_samples(model, data, LabelSource::clean, false);
    REQUIRE(raw.size() == static_cast<size_t>(data.size()));
  }
}

TEST_CASE("pre-logit projection") {
  auto data = noisy_three_blobs(9);
  auto model = make_mlp_model(3, 2, 16, 10);
  SECTION("distinct templates project to distinct points") {
    // identity hidden layer so pre-logits equal the (nonnegative) features
    MlpModel fixed = make_mlp_model(3, 2, 2, 0);
    fixed.hidden_weights = Eigen::MatrixXd::Identity(2, 2);
    fixed.hidden_bias.setZero();
    fixed.output_weights << 1, 0, 0, 1, 1, 1;
    LabeledDataset probe;
    probe.num_classes = 3;
    probe.features.resize(2, 2);
    probe.features << 1, 0, 0, 1;  // pre-logits = w_a and w_b
    probe.observed_labels = {0, 1};
    const auto points = prelogit_projection(fixed, probe, 0, 1, 2);
    REQUIRE(points.size() == 2);
    const double dist = std::hypot(points[0].u - points[1].u, points[0].v - points[1].v);
    REQUIRE(dist > 0.5);
  }
  SECTION("projects every example of the three classes with noise flags") {
    const auto points = prelogit_projection(model, data, 0, 1, 2);
    REQUIRE(points.size() == static_cast<size_t>(data.size()));
    int noisy = 0;
    for (const auto& p : points) noisy += p.noisy ? 1 : 0;
    int expected = 0;
    for (auto flag : *data.noise_mask) expected += flag ? 1 : 0;
    REQUIRE(noisy == expected);
  }
  SECTION("rejects duplicate classes and degenerate bases") {
    REQUIRE_THROWS_AS(prelogit_projection(model, data, 0, 0, 2), std::invalid_argument);
    MlpModel degenerate = model;
    degenerate.output_weights.row(1) = degenerate.output_weights.row(0);
    REQUIRE_THROWS_AS(prelogit_projection(degenerate, data, 0, 1, 2), std::invalid_argument);
  }
}
