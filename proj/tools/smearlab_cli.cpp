#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "smearlab/config.hpp"
#include "smearlab/experiment.hpp"
#include "smearlab/metrics.hpp"
#include "smearlab/noise.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  long long seed_override = -1;
};

smearlab::ExperimentConfig load(const CommonOpts& opts) {
  auto config = smearlab::load_config(opts.config_path);
  if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  if (opts.seed_override >= 0)
    config.seeds = {static_cast<std::uint64_t>(opts.seed_override)};
  return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_jobs = true) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides the config)");
  if (with_jobs) cmd->add_option("--jobs", opts.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed-override", opts.seed_override, "run a single seed instead of the grid");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-smearing experiment harness"};
  app.require_subcommand(1);

  CommonOpts run_opts, figures_opts, distill_opts, estimate_opts;
  double percentile = 97.0;
  std::string probs_path;

  auto* run_cmd = app.add_subcommand("run", "train the (method x seed) grid and write results");
  add_common(run_cmd, run_opts);
  auto* figures_cmd = app.add_subcommand("figures", "emit figure CSVs");
  add_common(figures_cmd, figures_opts, false);
  auto* distill_cmd = app.add_subcommand("distill", "run the distillation comparison");
  add_common(distill_cmd, distill_opts);
  auto* estimate_cmd =
      app.add_subcommand("estimate-t", "estimate the noise transition matrix");
  add_common(estimate_cmd, estimate_opts, false);
  estimate_cmd->add_option("--percentile", percentile, "percentile for the row picks")
      ->check(CLI::Range(1e-9, 100.0));
  estimate_cmd->add_option("--probs", probs_path,
                           "CSV of predicted probabilities; skips the training step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const auto config = load(run_opts);
      const auto result = smearlab::run_experiment(config, run_opts.jobs);
      smearlab::write_results(result, config.out_dir);
      int diverged = 0;
      for (const auto& row : result.rows) diverged += row.diverged ? 1 : 0;
      std::printf("wrote %zu run rows, %zu summaries to %s", result.rows.size(),
                  result.summaries.size(), config.out_dir.c_str());
      if (diverged) std::printf(" (%d diverged, flagged in runs.csv)", diverged);
      std::printf("\n");
    } else if (*figures_cmd) {
      const auto config = load(figures_opts);
      smearlab::emit_figures(config);
      std::printf("wrote figure CSVs to %s\n", config.out_dir.c_str());
    } else if (*distill_cmd) {
      const auto config = load(distill_opts);
      if (!config.distill)
        throw smearlab::ConfigError("distill verb needs a 'distill' block in the config");
      const auto summaries = smearlab::run_distill_comparison(config, distill_opts.jobs);
      smearlab::write_distill_csv(summaries, config.out_dir);
      std::printf("wrote distillation comparison to %s/distill.csv\n", config.out_dir.c_str());
    } else if (*estimate_cmd) {
      const auto config = load(estimate_opts);
      Eigen::MatrixXd probs;
      if (!probs_path.empty()) {
        probs = smearlab::read_matrix_csv(probs_path);
      } else {
        // Train a standard model on the noisy split and read T off its outputs
        const auto bench = smearlab::make_benchmark(config, config.seeds.front());
        smearlab::TrainConfig cfg = config.train;
        cfg.seed = config.seeds.front();
        auto [model, history] = smearlab::train(
            smearlab::make_linear_model(bench.train_noisy.num_classes,
                                        bench.train_noisy.dim(), true),
            bench.train_noisy, smearlab::SmearedLoss::standard(bench.train_noisy.num_classes),
            cfg);
        probs = smearlab::predicted_probs(model, bench.train_noisy.features);
      }
      const auto estimate = smearlab::estimate_transition_percentile(probs, percentile);
      std::filesystem::create_directories(config.out_dir);
      const auto path = (std::filesystem::path(config.out_dir) / "estimated_t.csv").string();
      smearlab::write_matrix_csv(path, estimate.entries);
      std::printf("wrote %s\n", path.c_str());
    }
  } catch (const smearlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
