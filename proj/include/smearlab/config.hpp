#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "smearlab/experiment.hpp"

namespace smearlab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline LossKind parse_loss_kind(const std::string& name) {
  if (name == "standard") return LossKind::standard;
  if (name == "smoothing") return LossKind::smoothing;
  if (name == "backward") return LossKind::backward;
  if (name == "forward") return LossKind::forward;
  throw ConfigError("unknown loss kind: " + name);
}

inline void parse_train(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  if (j.contains("lr_drop_epochs"))
    cfg.lr_drop_epochs = j.at("lr_drop_epochs").get<std::vector<int>>();
  cfg.lr_drop_factor = j.value("lr_drop_factor", cfg.lr_drop_factor);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig config;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("train_csv")) {
        config.dataset.from_csv = true;
        config.dataset.train_path = d.at("train_csv").get<std::string>();
        config.dataset.test_path = d.at("test_csv").get<std::string>();
        config.dataset.generator.num_classes = d.at("num_classes").get<int>();
      } else {
        auto& g = config.dataset.generator;
        g.num_classes = d.value("num_classes", g.num_classes);
        g.dim = d.value("dim", g.dim);
        g.center_scale = d.value("center_scale", g.center_scale);
        g.variance = d.value("variance", g.variance);
        g.train_per_class = d.value("train_per_class", g.train_per_class);
        g.test_per_class = d.value("test_per_class", g.test_per_class);
        g.centers_seed = d.value("centers_seed", g.centers_seed);
      }
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      config.noise.mode = n.value("mode", config.noise.mode);
      config.noise.rho = n.value("rho", config.noise.rho);
      config.noise.transition_file = n.value("transition_file", std::string());
    }
    if (j.contains("methods")) {
      config.methods.clear();
      for (const auto& m : j.at("methods")) {
        MethodSpec spec;
        spec.kind = detail::parse_loss_kind(m.at("kind").get<std::string>());
        spec.alpha = m.value("alpha", 0.0);
        spec.transition_file = m.value("transition_file", std::string());
        if (spec.kind != LossKind::standard && spec.transition_file.empty() &&
            (spec.alpha <= 0.0 || spec.alpha >= 1.0))
          throw ConfigError("method '" + std::string(to_string(spec.kind)) +
                            "' needs alpha in (0, 1) or a transition file");
        config.methods.push_back(std::move(spec));
      }
    }
    if (j.contains("seeds")) config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train")) detail::parse_train(j.at("train"), config.train);
    if (j.contains("model")) {
      config.model.type = j.at("model").value("type", config.model.type);
      config.model.hidden = j.at("model").value("hidden", config.model.hidden);
    }
    config.out_dir = j.value("out_dir", config.out_dir);
    config.ece_bins = j.value("ece_bins", config.ece_bins);
    if (j.contains("distill")) {
      DistillBlock block;
      const auto& d = j.at("distill");
      block.temperature = d.value("temperature", block.temperature);
      block.alpha = d.value("alpha", block.alpha);
      if (d.contains("sweep_alphas"))
        block.sweep_alphas = d.at("sweep_alphas").get<std::vector<double>>();
      config.distill = block;
    }
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace smearlab
