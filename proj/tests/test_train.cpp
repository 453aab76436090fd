#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "smearlab/noise.hpp"
#include "smearlab/synth.hpp"
#include "smearlab/train.hpp"

using namespace smearlab;
using Catch::Approx;

namespace {

LabeledDataset two_blobs(int per_class, std::uint64_t seed, double variance = 0.05) {
  BlobSpec spec;
  Eigen::VectorXd c0(2), c1(2);
  c0 << 1, 1;
  c1 << -1, -1;
  spec.centers = {c0, c1};
  spec.variance = variance;
  spec.samples_per_class = per_class;
  spec.seed = seed;
  return make_blobs(spec);
}

}  // namespace

TEST_CASE("model forward pass") {
  SECTION("zero linear model gives zero logits") {
    const auto m = make_linear_model(3, 4);
    REQUIRE(forward(m, Eigen::VectorXd::Ones(4)).isZero());
  }
  SECTION("identity weights select the input") {
    LinearModel m;
    m.weights = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    x(0) = 1.0;
    REQUIRE(forward(m, x).isApprox(x));
  }
  SECTION("zero-weight MLP outputs its bias") {
    auto m = make_mlp_model(2, 3, 4, 0);
    m.hidden_weights.setZero();
    m.output_weights.setZero();
    m.output_bias << 0.5, -0.5;
    const Eigen::VectorXd f = forward(m, Eigen::VectorXd::Random(3));
    REQUIRE(f(0) == Approx(0.5));
    REQUIRE(f(1) == Approx(-0.5));
  }
  SECTION("dimension mismatch rejected") {
    const auto m = make_linear_model(2, 3);
    REQUIRE_THROWS_AS(forward(m, Eigen::VectorXd::Zero(4)), std::invalid_argument);
  }
}

TEST_CASE("sgd training") {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.5;
  cfg.weight_decay = 0.0;
  cfg.lr_drop_epochs = {};
  cfg.seed = 1;

  SECTION("separable blobs reach 99% train accuracy") {
    const auto data = two_blobs(100, 3);
    auto [model, history] =
        train(make_linear_model(2, 2, true), data, SmearedLoss::standard(2), cfg);
    REQUIRE(history.size() == 50);
    REQUIRE(accuracy(model, data.features, data.observed_labels) >= 0.99);
  }
  SECTION("zero learning rate leaves parameters unchanged") {
    const auto data = two_blobs(20, 3);
    TrainConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    frozen.epochs = 3;
    auto init = make_mlp_model(2, 2, 5, 9);
    auto [model, history] = train(init, data, SmearedLoss::standard(2), frozen);
    REQUIRE(model.hidden_weights == init.hidden_weights);
    REQUIRE(model.output_weights == init.output_weights);
  }
  SECTION("descent shrinks the full-batch gradient on convex problems") {
    const auto data = two_blobs(100, 7, 0.5);
    const auto loss = SmearedLoss::standard(2);
    const auto init = make_linear_model(2, 2, true);
    const double before = objective_grad_norm(init, data, loss, cfg.weight_decay);
    auto [model, history] = train(init, data, loss, cfg);
    REQUIRE(objective_grad_norm(model, data, loss, cfg.weight_decay) < before);
  }
  SECTION("bitwise determinism across reruns") {
    const auto data = two_blobs(50, 11);
    cfg.epochs = 10;
    auto [a, ha] = train(make_mlp_model(2, 2, 8, cfg.seed), data, SmearedLoss::smoothing(2, 0.1), cfg);
    auto [b, hb] = train(make_mlp_model(2, 2, 8, cfg.seed), data, SmearedLoss::smoothing(2, 0.1), cfg);
    REQUIRE(a.hidden_weights == b.hidden_weights);
    REQUIRE(a.output_weights == b.output_weights);
    REQUIRE(ha.size() == hb.size());
    for (size_t i = 0; i < ha.size(); ++i) REQUIRE(ha[i].train_loss == hb[i].train_loss);
  }
}

TEST_CASE("closed-form smoothed least squares") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> normal;
  const int n = 50, dim = 3, n_classes = 2;
  Eigen::MatrixXd x(n, dim);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, n_classes);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) x(i, j) = normal(gen);
    y(i, i % n_classes) = 1.0;
  }

  SECTION("alpha = 0 is ordinary least squares") {
    const Eigen::MatrixXd w = closed_form_smoothed_least_squares(x, y, 0.0);
    const Eigen::MatrixXd ols =
        (x.transpose() * x).ldlt().solve(x.transpose() * y).transpose();
    REQUIRE(w.isApprox(ols, 1e-10));
  }
  SECTION("alpha = 1 on centered data gives zero weights") {
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd w = closed_form_smoothed_least_squares(centered, y, 1.0);
    REQUIRE(w.cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("matches least squares on smoothed targets") {
    const double alpha = 0.3;
    Eigen::MatrixXd smoothed_targets =
        (1.0 - alpha) * y + Eigen::MatrixXd::Constant(n, n_classes, alpha / n_classes);
    const Eigen::MatrixXd direct =
        (x.transpose() * x).ldlt().solve(x.transpose() * smoothed_targets).transpose();
    const Eigen::MatrixXd w = closed_form_smoothed_least_squares(x, y, alpha);
    REQUIRE((w - direct).cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("centered data shrinks exactly by 1 - alpha") {
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd base = closed_form_smoothed_least_squares(centered, y, 0.0);
    for (double alpha : {0.1, 0.5, 0.9}) {
      const Eigen::MatrixXd w = closed_form_smoothed_least_squares(centered, y, alpha);
      REQUIRE((w - (1.0 - alpha) * base).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SECTION("rejects singular designs") {
    Eigen::MatrixXd degenerate(4, 2);
    degenerate << 1, 2, 2, 4, 3, 6, 4, 8;
    REQUIRE_THROWS_AS(closed_form_smoothed_least_squares(degenerate, y.topRows(4), 0.1),
                      std::runtime_error);
  }
}

TEST_CASE("omega gradient for linear models") {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd features(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) features(i, j) = normal(gen);

  SECTION("vanishes at W = 0") {
    const auto model = make_linear_model(4, 3, false);
    REQUIRE(omega_gradient_at(model, features).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("matches finite differences at random W") {
    LinearModel model = make_linear_model(4, 3, false);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) model.weights(i, j) = normal(gen);
    const Eigen::MatrixXd grad = omega_gradient_at(model, features);
    const double h = 1e-5;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) {
        LinearModel hi = model, lo = model;
        hi.weights(i, j) += h;
        lo.weights(i, j) -= h;
        const double fd = (omega_value(hi, features) - omega_value(lo, features)) / (2 * h);
        REQUIRE(grad(i, j) == Approx(fd).margin(1e-6));
      }
  }
  SECTION("zero features annihilate the gradient") {
    LinearModel model = make_linear_model(4, 3, false);
    model.weights.setRandom();
    REQUIRE(omega_gradient_at(model, Eigen::MatrixXd::Zero(5, 3)).cwiseAbs().maxCoeff() <
            1e-14);
  }
  SECTION("W = 0 minimises omega against random perturbations") {
    const auto zero_model = make_linear_model(4, 3, false);
    const double at_zero = omega_value(zero_model, features);
    for (int trial = 0; trial < 100; ++trial) {
      LinearModel perturbed = zero_model;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) perturbed.weights(i, j) = 0.5 * normal(gen);
      REQUIRE(at_zero <= omega_value(perturbed, features) + 1e-12);
    }
  }
}

TEST_CASE("smoothing and weight decay both shrink trained weights") {
  const auto data = two_blobs(200, 13, 0.25);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.5;
  cfg.weight_decay = 0.0;
  cfg.lr_drop_epochs = {60};
  cfg.seed = 2;

  std::vector<double> norms_by_alpha;
  for (double alpha : {0.0, 0.2, 0.4, 0.7}) {
    const auto loss = alpha == 0.0 ? SmearedLoss::standard(2) : SmearedLoss::smoothing(2, alpha);
    auto [model, history] = train(make_linear_model(2, 2, true), data, loss, cfg);
    norms_by_alpha.push_back(model.weights.norm());
  }
  for (size_t i = 1; i < norms_by_alpha.size(); ++i)
    REQUIRE(norms_by_alpha[i] < norms_by_alpha[i - 1]);

  std::vector<double> norms_by_decay;
  for (double decay : {0.0, 1e-3, 1e-2, 1e-1}) {
    TrainConfig decay_cfg = cfg;
    decay_cfg.weight_decay = decay;
    auto [model, history] =
        train(make_linear_model(2, 2, true), data, SmearedLoss::standard(2), decay_cfg);
    norms_by_decay.push_back(model.weights.norm());
  }
  for (size_t i = 1; i < norms_by_decay.size(); ++i)
    REQUIRE(norms_by_decay[i] < norms_by_decay[i - 1]);
}
