#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "smearlab/csv.hpp"
#include "smearlab/dataset.hpp"
#include "smearlab/distill.hpp"
#include "smearlab/losses.hpp"
#include "smearlab/metrics.hpp"
#include "smearlab/models.hpp"
#include "smearlab/noise.hpp"
#include "smearlab/smearing.hpp"
#include "smearlab/synth.hpp"
#include "smearlab/train.hpp"

namespace smearlab {

inline constexpr int kSchemaVersion = 1;

struct GeneratorSpec {
  int num_classes = 5;
  int dim = 20;
  double center_scale = 1.0;  // centers drawn on a sphere of this radius
  double variance = 1.0;
  int train_per_class = 40;
  int test_per_class = 400;
  std::uint64_t centers_seed = 1234;  // geometry shared across seeds
};

struct DatasetSourceSpec {
  bool from_csv = false;
  std::string train_path;
  std::string test_path;
  GeneratorSpec generator;
};

struct NoiseSpec {
  std::string mode = "resample-any";  // resample-any | flip-to-other | class-conditional | none
  double rho = 0.2;
  std::string transition_file;  // required for class-conditional
};

struct MethodSpec {
  LossKind kind = LossKind::standard;
  double alpha = 0.0;
  std::string transition_file;  // overrides the symmetric construction for BC/FC

  std::string label() const {
    if (kind == LossKind::standard) return "standard";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return std::string(to_string(kind)) + "_a" + buf;
  }
};

struct ModelSpec {
  std::string type = "linear";  // linear | mlp
  int hidden = 64;
};

struct DistillBlock {
  double temperature = 2.0;
  double alpha = 0.1;  // LS/FC level applied on teacher or student variants
  std::vector<double> sweep_alphas = {0.0, 0.1, 0.3, 0.5};
};

struct ExperimentConfig {
  DatasetSourceSpec dataset;
  NoiseSpec noise;
  std::vector<MethodSpec> methods = {{LossKind::standard, 0.0, {}}};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  TrainConfig train;
  ModelSpec model;
  std::string out_dir = "out";
  int ece_bins = 100;
  std::optional<DistillBlock> distill;

  void validate() const {
    if (methods.empty()) throw std::invalid_argument("config needs at least one method");
    if (seeds.empty()) throw std::invalid_argument("config needs at least one seed");
    train.validate();
    if (model.type != "linear" && model.type != "mlp")
      throw std::invalid_argument("model type must be 'linear' or 'mlp'");
  }
};

namespace detail {

inline std::vector<Eigen::VectorXd> benchmark_centers(const GeneratorSpec& spec) {
  std::vector<Eigen::VectorXd> centers;
  for (int c = 0; c < spec.num_classes; ++c) {
    StreamRng rng(spec.centers_seed, static_cast<std::uint64_t>(c));
    Eigen::VectorXd center(spec.dim);
    for (int j = 0; j < spec.dim; ++j) center(j) = rng.normal();
    centers.push_back(center * (spec.center_scale / center.norm()));
  }
  return centers;
}

}  // namespace detail

struct Benchmark {
  LabeledDataset train_noisy;  // clean labels + mask populated unless mode is none
  LabeledDataset test_clean;
};

// One (seed)-keyed benchmark instance. Noise is injected once per seed and
// shared by every method in the grid, so comparisons see the same corruption.
inline Benchmark make_benchmark(const ExperimentConfig& config, std::uint64_t seed) {
  LabeledDataset train_clean, test;
  if (config.dataset.from_csv) {
    // CSV datasets are fixed; only the noise draw varies with the seed
    const int n_classes = config.dataset.generator.num_classes;
    train_clean = read_dataset_csv(config.dataset.train_path, n_classes, false);
    test = read_dataset_csv(config.dataset.test_path, n_classes, false);
  } else {
    const auto& gen = config.dataset.generator;
    BlobSpec spec;
    spec.centers = detail::benchmark_centers(gen);
    spec.variance = gen.variance;
    spec.samples_per_class = gen.train_per_class;
    spec.seed = seed;
    train_clean = make_blobs(spec);
    spec.samples_per_class = gen.test_per_class;
    spec.seed = seed + 0x7e57000000000000ull;  // disjoint test stream
    test = make_blobs(spec);
  }

  Benchmark bench;
  bench.test_clean = std::move(test);
  const std::uint64_t noise_seed = seed + 0x4015e000000000ull;
  if (config.noise.mode == "none") {
    bench.train_noisy = std::move(train_clean);
    bench.train_noisy.clean_labels = bench.train_noisy.observed_labels;
    bench.train_noisy.noise_mask.emplace(bench.train_noisy.observed_labels.size(), 0);
  } else if (config.noise.mode == "resample-any") {
    bench.train_noisy =
        inject_symmetric(train_clean, config.noise.rho, NoiseMode::resample_any, noise_seed);
  } else if (config.noise.mode == "flip-to-other") {
    bench.train_noisy =
        inject_symmetric(train_clean, config.noise.rho, NoiseMode::flip_to_other, noise_seed);
  } else if (config.noise.mode == "class-conditional") {
    bench.train_noisy = inject_class_conditional(
        train_clean, read_transition_csv(config.noise.transition_file), noise_seed);
  } else {
    throw std::invalid_argument("unknown noise mode: " + config.noise.mode);
  }
  return bench;
}

inline SmearedLoss build_loss(const MethodSpec& method, int num_classes) {
  switch (method.kind) {
    case LossKind::standard:
      return SmearedLoss::standard(num_classes);
    case LossKind::smoothing:
      return SmearedLoss::smoothing(num_classes, method.alpha);
    case LossKind::backward:
    case LossKind::forward: {
      TransitionMatrix t =
          method.transition_file.empty()
              ? make_symmetric_transition(
                    num_classes, method.alpha * (num_classes - 1.0) / num_classes)
              : read_transition_csv(method.transition_file);
      return method.kind == LossKind::backward ? SmearedLoss::backward(std::move(t))
                                               : SmearedLoss::forward(std::move(t));
    }
  }
  throw std::logic_error("unreachable");
}

struct RunRow {
  std::string method;
  std::uint64_t seed = 0;
  RunReport report;
  double final_train_loss = 0.0;
  bool diverged = false;
};

struct MethodSummary {
  std::string method;
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;
  double mean_ece = 0.0;
  double mean_noisy_true_accuracy = 0.0;
  double mean_noisy_observed_accuracy = 0.0;
  int runs = 0;
};

struct ExperimentResult {
  std::vector<RunRow> rows;           // ordered by (method, seed)
  std::vector<MethodSummary> summaries;  // config method order
};

template <class Model>
RunRow run_one(const ExperimentConfig& config, const Benchmark& bench,
               const MethodSpec& method, std::uint64_t seed, const Model& init) {
  RunRow row;
  row.method = method.label();
  row.seed = seed;
  TrainConfig cfg = config.train;
  cfg.seed = seed;
  try {
    const auto loss = build_loss(method, bench.train_noisy.num_classes);
    auto [model, history] = train(init, bench.train_noisy, loss, cfg);
    row.final_train_loss = history.back().train_loss;
    row.report = breakdown_accuracy(model, bench.train_noisy);
    row.report.test_accuracy =
        accuracy(model, bench.test_clean.features, bench.test_clean.observed_labels);
    row.report.ece = expected_calibration_error(
        predicted_probs(model, bench.test_clean.features),
        bench.test_clean.observed_labels, config.ece_bins);
  } catch (const std::runtime_error&) {
    row.diverged = true;
  }
  return row;
}

inline RunRow dispatch_run(const ExperimentConfig& config, const Benchmark& bench,
                           const MethodSpec& method, std::uint64_t seed) {
  const int n_classes = bench.train_noisy.num_classes;
  const int dim = bench.train_noisy.dim();
  if (config.model.type == "mlp")
    return run_one(config, bench, method, seed,
                   make_mlp_model(n_classes, dim, config.model.hidden, seed));
  return run_one(config, bench, method, seed, make_linear_model(n_classes, dim, true));
}

// Full (method x seed) grid. Grid points run on up to `jobs` threads; rows
// come back in deterministic (method, seed) order regardless of scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1) {
  config.validate();
  struct Task {
    size_t method_index;
    size_t seed_index;
  };
  std::vector<Task> tasks;
  for (size_t m = 0; m < config.methods.size(); ++m)
    for (size_t s = 0; s < config.seeds.size(); ++s) tasks.push_back({m, s});

  // benchmarks are per seed, shared across methods
  std::vector<Benchmark> benchmarks;
  benchmarks.reserve(config.seeds.size());
  for (std::uint64_t seed : config.seeds) benchmarks.push_back(make_benchmark(config, seed));

  std::vector<RunRow> rows(tasks.size());
  const int worker_count = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      const Task& task = tasks[i];
      rows[i] = dispatch_run(config, benchmarks[task.seed_index],
                             config.methods[task.method_index], config.seeds[task.seed_index]);
    }
  };
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < worker_count; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  ExperimentResult result;
  result.rows = std::move(rows);
  for (size_t m = 0; m < config.methods.size(); ++m) {
    MethodSummary summary;
    summary.method = config.methods[m].label();
    std::vector<double> accs;
    for (size_t s = 0; s < config.seeds.size(); ++s) {
      const RunRow& row = result.rows[m * config.seeds.size() + s];
      if (row.diverged) continue;
      accs.push_back(row.report.test_accuracy);
      summary.mean_ece += row.report.ece;
      summary.mean_noisy_true_accuracy += row.report.train_accuracy_noisy_true;
      summary.mean_noisy_observed_accuracy += row.report.train_accuracy_noisy_observed;
    }
    summary.runs = static_cast<int>(accs.size());
    if (!accs.empty()) {
      const double n = static_cast<double>(accs.size());
      for (double a : accs) summary.mean_test_accuracy += a;
      summary.mean_test_accuracy /= n;
      for (double a : accs)
        summary.std_test_accuracy += (a - summary.mean_test_accuracy) *
                                     (a - summary.mean_test_accuracy);
      summary.std_test_accuracy = std::sqrt(summary.std_test_accuracy / n);
      summary.mean_ece /= n;
      summary.mean_noisy_true_accuracy /= n;
      summary.mean_noisy_observed_accuracy /= n;
    }
    result.summaries.push_back(summary);
  }
  return result;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# schema_version=" << kSchemaVersion << '\n';
  return out;
}

}  // namespace detail

inline void write_results(const ExperimentResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  auto runs = detail::open_out(fs::path(out_dir) / "runs.csv");
  runs << "method,seed,test_acc,train_acc_full_true,train_acc_clean_true,"
          "train_acc_noisy_true,train_acc_noisy_observed,ece,final_train_loss,diverged\n";
  for (const auto& row : result.rows) {
    runs << row.method << ',' << row.seed << ',' << csv::format_double(row.report.test_accuracy)
         << ',' << csv::format_double(row.report.train_accuracy_full_true) << ','
         << csv::format_double(row.report.train_accuracy_clean_true) << ','
         << csv::format_double(row.report.train_accuracy_noisy_true) << ','
         << csv::format_double(row.report.train_accuracy_noisy_observed) << ','
         << csv::format_double(row.report.ece) << ','
         << csv::format_double(row.final_train_loss) << ',' << (row.diverged ? 1 : 0) << '\n';
  }
  auto summary = detail::open_out(fs::path(out_dir) / "summary.csv");
  summary << "method,runs,test_acc_mean,test_acc_std,ece_mean,"
             "noisy_true_acc_mean,noisy_observed_acc_mean\n";
  for (const auto& s : result.summaries) {
    summary << s.method << ',' << s.runs << ',' << csv::format_double(s.mean_test_accuracy)
            << ',' << csv::format_double(s.std_test_accuracy) << ','
            << csv::format_double(s.mean_ece) << ','
            << csv::format_double(s.mean_noisy_true_accuracy) << ','
            << csv::format_double(s.mean_noisy_observed_accuracy) << '\n';
  }
}

struct DistillVariantSummary {
  std::string variant;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_seed;
};

template <class Model>
double distill_variant_accuracy(const std::string& variant, const ExperimentConfig& config,
                                const Benchmark& bench, const DistillBlock& block,
                                std::uint64_t seed, const Model& init) {
  TrainConfig teacher_cfg = config.train;
  teacher_cfg.seed = seed;
  TrainConfig student_cfg = config.train;
  student_cfg.seed = seed + 0x57;

  const int n_classes = bench.train_noisy.num_classes;
  SmearedLoss teacher_loss = SmearedLoss::standard(n_classes);
  DistillConfig dcfg;
  dcfg.temperature = block.temperature;
  dcfg.student_train = student_cfg;
  const double sym_alpha = block.alpha;
  if (variant == "ls_teacher") {
    teacher_loss = SmearedLoss::smoothing(n_classes, sym_alpha);
  } else if (variant == "fc_teacher") {
    teacher_loss = SmearedLoss::forward(
        make_symmetric_transition(n_classes, sym_alpha * (n_classes - 1.0) / n_classes));
  } else if (variant == "ls_student") {
    dcfg.student_smoothing_alpha = sym_alpha;
  } else if (variant == "fc_student") {
    dcfg.student_forward =
        make_symmetric_transition(n_classes, sym_alpha * (n_classes - 1.0) / n_classes);
  } else if (variant != "vanilla") {
    throw std::invalid_argument("unknown distillation variant: " + variant);
  }

  auto [teacher, teacher_hist] = train(init, bench.train_noisy, teacher_loss, teacher_cfg);
  auto [student, student_hist] = distill_train(teacher, init, bench.train_noisy, dcfg);
  return accuracy(student, bench.test_clean.features, bench.test_clean.observed_labels);
}

// Table-5 style comparison: each variant trains its own teacher on the shared
// noisy data and distills a fresh student; accuracies are on the clean test set.
inline std::vector<DistillVariantSummary> run_distill_comparison(const ExperimentConfig& config,
                                                                 int jobs = 1) {
  config.validate();
  if (!config.distill) throw std::invalid_argument("config has no distillation block");
  const DistillBlock& block = *config.distill;
  const std::vector<std::string> variants = {"vanilla", "ls_teacher", "ls_student",
                                             "fc_teacher", "fc_student"};

  std::vector<Benchmark> benchmarks;
  for (std::uint64_t seed : config.seeds) benchmarks.push_back(make_benchmark(config, seed));

  std::vector<std::pair<size_t, size_t>> tasks;
  for (size_t v = 0; v < variants.size(); ++v)
    for (size_t s = 0; s < config.seeds.size(); ++s) tasks.emplace_back(v, s);
  std::vector<double> accs(tasks.size(), 0.0);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
      const auto [v, s] = tasks[i];
      const Benchmark& bench = benchmarks[s];
      const std::uint64_t seed = config.seeds[s];
      const int n_classes = bench.train_noisy.num_classes;
      const int dim = bench.train_noisy.dim();
      if (config.model.type == "mlp") {
        accs[i] = distill_variant_accuracy(variants[v], config, bench, block, seed,
                                           make_mlp_model(n_classes, dim, config.model.hidden, seed));
      } else {
        accs[i] = distill_variant_accuracy(variants[v], config, bench, block, seed,
                                           make_linear_model(n_classes, dim, true));
      }
    }
  };
  const int worker_count = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < worker_count; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::vector<DistillVariantSummary> summaries;
  for (size_t v = 0; v < variants.size(); ++v) {
    DistillVariantSummary s;
    s.variant = variants[v];
    for (size_t k = 0; k < config.seeds.size(); ++k)
      s.per_seed.push_back(accs[v * config.seeds.size() + k]);
    for (double a : s.per_seed) s.mean += a;
    s.mean /= static_cast<double>(s.per_seed.size());
    for (double a : s.per_seed) s.stddev += (a - s.mean) * (a - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(s.per_seed.size()));
    summaries.push_back(std::move(s));
  }
  return summaries;
}

inline void write_distill_csv(const std::vector<DistillVariantSummary>& summaries,
                              const std::string& out_dir) {
  auto out = detail::open_out(std::filesystem::path(out_dir) / "distill.csv");
  out << "method,mean,stddev\n";
  for (const auto& s : summaries)
    out << s.variant << ',' << csv::format_double(s.mean) << ','
        << csv::format_double(s.stddev) << '\n';
}

// Figure-style CSV emission: loss curves, logit-gap samples split by
// (train split x label source), separator offsets, and the teacher
// alpha sweep.
inline void emit_figures(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  const std::string out_dir = config.out_dir;

  {  // loss curves on the binary margin grid, alpha 0.2 as in the defaults
    const double alpha = 0.2;
    auto out = detail::open_out(fs::path(out_dir) / "loss_curves.csv");
    out << "margin,smoothing,backward,forward\n";
    const auto smoothing = loss_curve(SmearedLoss::smoothing(2, alpha), 0);
    const auto backward =
        loss_curve(SmearedLoss::backward(make_symmetric_transition(2, alpha / 2)), 0);
    const auto forward =
        loss_curve(SmearedLoss::forward(make_symmetric_transition(2, alpha / 2)), 0);
    for (size_t i = 0; i < smoothing.size(); ++i)
      out << csv::format_double(smoothing[i].first) << ','
          << csv::format_double(smoothing[i].second) << ','
          << csv::format_double(backward[i].second) << ','
          << csv::format_double(forward[i].second) << '\n';
  }

  {  // gap samples for the first method and seed: 4 files (split x source)
    const Benchmark bench = make_benchmark(config, config.seeds.front());
    TrainConfig cfg = config.train;
    cfg.seed = config.seeds.front();
    const auto loss = build_loss(config.methods.front(), bench.train_noisy.num_classes);
    auto [model, history] =
        train(make_linear_model(bench.train_noisy.num_classes, bench.train_noisy.dim(), true),
              bench.train_noisy, loss, cfg);
    for (const bool noisy_split : {false, true}) {
      for (const LabelSource source : {LabelSource::observed, LabelSource::clean}) {
        LabeledDataset part;
        part.num_classes = bench.train_noisy.num_classes;
        std::vector<Eigen::Index> keep;
        for (int i = 0; i < bench.train_noisy.size(); ++i)
          if (static_cast<bool>((*bench.train_noisy.noise_mask)[static_cast<size_t>(i)]) ==
              noisy_split)
            keep.push_back(i);
        part.features.resize(static_cast<Eigen::Index>(keep.size()), bench.train_noisy.dim());
        part.clean_labels.emplace();
        for (size_t k = 0; k < keep.size(); ++k) {
          part.features.row(static_cast<Eigen::Index>(k)) =
              bench.train_noisy.features.row(keep[k]);
          part.observed_labels.push_back(
              bench.train_noisy.observed_labels[static_cast<size_t>(keep[k])]);
          part.clean_labels->push_back(
              (*bench.train_noisy.clean_labels)[static_cast<size_t>(keep[k])]);
        }
        const std::string name = std::string("gaps_") + (noisy_split ? "noisy" : "clean") +
                                 (source == LabelSource::observed ? "_observed" : "_clean") +
                                 ".csv";
        auto out = detail::open_out(fs::path(out_dir) / name);
        out << "gap\n";
        if (part.size() > 0)
          for (double gap : logit_gap_samples(model, part, source))
            out << csv::format_double(gap) << '\n';
      }
    }
  }

  {  // separator-offset experiment
    const std::vector<double> alphas = {0.0, 0.1, 0.2, 0.4};
    const std::vector<double> l2 = {0.01, 0.1, 1.0};
    const auto rows = figure5_experiment(alphas, l2, config.seeds);
    auto out = detail::open_out(fs::path(out_dir) / "figure5.csv");
    out << "setting,alpha_or_l2,offset_mean,offset_std\n";
    std::vector<std::pair<std::string, double>> keys;
    for (const auto& row : rows) {
      const std::pair<std::string, double> key{row.setting, row.parameter};
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& [setting, parameter] : keys) {
      double mean = 0.0, sq = 0.0;
      int count = 0;
      for (const auto& row : rows)
        if (row.setting == setting && row.parameter == parameter) {
          mean += row.offset;
          ++count;
        }
      mean /= count;
      for (const auto& row : rows)
        if (row.setting == setting && row.parameter == parameter)
          sq += (row.offset - mean) * (row.offset - mean);
      out << setting << ',' << csv::format_double(parameter) << ','
          << csv::format_double(mean) << ',' << csv::format_double(std::sqrt(sq / count))
          << '\n';
    }
  }

  if (config.distill) {  // teacher smoothing sweep at temperature 1
    auto out = detail::open_out(fs::path(out_dir) / "alpha_sweep.csv");
    out << "alpha,student_test_acc_mean,student_test_acc_std\n";
    std::map<double, std::vector<double>> by_alpha;
    for (std::uint64_t seed : config.seeds) {
      const Benchmark bench = make_benchmark(config, seed);
      TrainConfig cfg = config.train;
      cfg.seed = seed;
      const auto points = teacher_alpha_sweep(
          config.distill->sweep_alphas, bench.train_noisy, bench.test_clean,
          make_linear_model(bench.train_noisy.num_classes, bench.train_noisy.dim(), true), cfg,
          cfg);
      for (const auto& p : points) by_alpha[p.alpha].push_back(p.student_test_accuracy);
    }
    for (const auto& [alpha, accs] : by_alpha) {
      double mean = 0.0, sq = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      for (double a : accs) sq += (a - mean) * (a - mean);
      out << csv::format_double(alpha) << ',' << csv::format_double(mean) << ','
          << csv::format_double(std::sqrt(sq / static_cast<double>(accs.size()))) << '\n';
    }
  }
}

}  // namespace smearlab
