#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "eeml/errors.hpp"
#include "eeml/meta.hpp"
#include "eeml/net.hpp"
#include "eeml/tasks.hpp"

namespace eeml {

inline std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Flat experiment configuration. Resolution order: preset defaults, then the
// JSON config file, then CLI flags. Every run logs the fully resolved config.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  // model
  std::vector<int> layer_sizes{1, 40, 40, 1};
  std::string activation = "relu";

  // optimization
  int inner_steps = 5;
  double inner_lr = 1e-3;
  double outer_lr = 1e-3;
  std::string outer_optimizer = "adam";
  double outer_momentum = 0.0;  // sgd only
  int task_batch_size = 32;
  int pretrain_epochs = 15000;
  int train_epochs = 5000;
  std::string order = "second";
  bool average_outer = false;

  // clustering / ensemble
  int k_clusters = 4;
  int cluster_tasks = 2000;
  int kmeans_max_iter = 100;
  int kmeans_restarts = 8;
  bool expert_errors_pre_adaptation = false;

  // tasks
  int k_shot = 10;
  int q_query = 100;
  double x_min = -5.0;
  double x_max = 5.0;
  double noise_sd = 0.0;
  std::array<double, 4> family_mix{0.25, 0.25, 0.25, 0.25};

  // evaluation
  int eval_tasks = 4000;
  // The MAML baseline is the pretrained theta_clu itself (0). Setting this to
  // train_epochs continues MAML on the same task stream the ensemble trains
  // on, for an equal-total-budget comparison.
  int baseline_extra_epochs = 0;

  std::string out_dir = "runs/default";

  void validate() const {
    auto positive = [](auto v, const char* key) {
      if (!(v > 0)) throw ConfigError(std::string("config: ") + key + " must be positive");
    };
    NetSpec ns{layer_sizes, Activation::relu};
    try {
      ns.validate();
      activation_from_string(activation);
      grad_order_from_string(order);
      outer_optimizer_from_string(outer_optimizer);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (inner_steps < 1 || inner_steps > 100)
      throw ConfigError("config: inner_steps must be in [1, 100]");
    positive(inner_lr, "inner_lr");
    positive(outer_lr, "outer_lr");
    if (outer_momentum < 0.0 || outer_momentum >= 1.0)
      throw ConfigError("config: outer_momentum must be in [0, 1)");
    positive(task_batch_size, "task_batch_size");
    if (pretrain_epochs < 0) throw ConfigError("config: pretrain_epochs must be nonnegative");
    if (train_epochs < 0) throw ConfigError("config: train_epochs must be nonnegative");
    positive(k_clusters, "k_clusters");
    positive(cluster_tasks, "cluster_tasks");
    if (cluster_tasks < k_clusters)
      throw ConfigError("config: cluster_tasks must be at least k_clusters");
    positive(kmeans_max_iter, "kmeans_max_iter");
    positive(kmeans_restarts, "kmeans_restarts");
    positive(k_shot, "k_shot");
    positive(q_query, "q_query");
    positive(eval_tasks, "eval_tasks");
    if (baseline_extra_epochs < 0)
      throw ConfigError("config: baseline_extra_epochs must be nonnegative");
    if (!(x_min < x_max)) throw ConfigError("config: x_min must be below x_max");
    if (noise_sd < 0) throw ConfigError("config: noise_sd must be nonnegative");
    double mix_sum = 0.0;
    for (double w : family_mix) {
      if (w < 0) throw ConfigError("config: family_mix weights must be nonnegative");
      mix_sum += w;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9) throw ConfigError("config: family_mix must sum to 1");
    if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  }

  NetSpec net_spec() const {
    return NetSpec{layer_sizes, activation_from_string(activation)};
  }
  InnerCfg inner_cfg() const { return InnerCfg{inner_steps, inner_lr}; }
  OuterCfg outer_cfg(int epochs) const {
    return OuterCfg{outer_lr,      task_batch_size,
                    epochs,        grad_order_from_string(order),
                    average_outer, outer_optimizer_from_string(outer_optimizer),
                    outer_momentum};
  }
  TaskConfig task_cfg(int shots) const {
    return TaskConfig{family_mix, shots, q_query, noise_sd, x_min, x_max};
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"layer_sizes", layer_sizes},
            {"activation", activation},
            {"inner_steps", inner_steps},
            {"inner_lr", inner_lr},
            {"outer_lr", outer_lr},
            {"outer_optimizer", outer_optimizer},
            {"outer_momentum", outer_momentum},
            {"task_batch_size", task_batch_size},
            {"pretrain_epochs", pretrain_epochs},
            {"train_epochs", train_epochs},
            {"order", order},
            {"average_outer", average_outer},
            {"k_clusters", k_clusters},
            {"cluster_tasks", cluster_tasks},
            {"kmeans_max_iter", kmeans_max_iter},
            {"kmeans_restarts", kmeans_restarts},
            {"expert_errors_pre_adaptation", expert_errors_pre_adaptation},
            {"k_shot", k_shot},
            {"q_query", q_query},
            {"x_min", x_min},
            {"x_max", x_max},
            {"noise_sd", noise_sd},
            {"family_mix", family_mix},
            {"eval_tasks", eval_tasks},
            {"baseline_extra_epochs", baseline_extra_epochs},
            {"out_dir", out_dir}};
  }

  // hash of the canonical serialized form (nlohmann keeps keys sorted)
  std::string hash() const {
    const std::string s = to_json().dump();
    return hex64(fnv1a(std::span(s.data(), s.size())));
  }

  void apply_json(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "seed",          "layer_sizes",   "activation",      "inner_steps",
        "inner_lr",      "outer_lr",      "outer_optimizer", "outer_momentum",
        "task_batch_size", "pretrain_epochs",
        "train_epochs",  "order",         "average_outer",   "k_clusters",
        "cluster_tasks", "kmeans_max_iter", "kmeans_restarts",
        "expert_errors_pre_adaptation",
        "k_shot",        "q_query",       "x_min",           "x_max",
        "noise_sd",      "family_mix",    "eval_tasks",      "baseline_extra_epochs",
        "out_dir"};
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
      try {
        if (key == "seed") seed = value.get<std::uint64_t>();
        else if (key == "layer_sizes") layer_sizes = value.get<std::vector<int>>();
        else if (key == "activation") activation = value.get<std::string>();
        else if (key == "inner_steps") inner_steps = value.get<int>();
        else if (key == "inner_lr") inner_lr = value.get<double>();
        else if (key == "outer_lr") outer_lr = value.get<double>();
        else if (key == "outer_optimizer") outer_optimizer = value.get<std::string>();
        else if (key == "outer_momentum") outer_momentum = value.get<double>();
        else if (key == "task_batch_size") task_batch_size = value.get<int>();
        else if (key == "pretrain_epochs") pretrain_epochs = value.get<int>();
        else if (key == "train_epochs") train_epochs = value.get<int>();
        else if (key == "order") order = value.get<std::string>();
        else if (key == "average_outer") average_outer = value.get<bool>();
        else if (key == "k_clusters") k_clusters = value.get<int>();
        else if (key == "cluster_tasks") cluster_tasks = value.get<int>();
        else if (key == "kmeans_max_iter") kmeans_max_iter = value.get<int>();
        else if (key == "kmeans_restarts") kmeans_restarts = value.get<int>();
        else if (key == "expert_errors_pre_adaptation")
          expert_errors_pre_adaptation = value.get<bool>();
        else if (key == "k_shot") k_shot = value.get<int>();
        else if (key == "q_query") q_query = value.get<int>();
        else if (key == "x_min") x_min = value.get<double>();
        else if (key == "x_max") x_max = value.get<double>();
        else if (key == "noise_sd") noise_sd = value.get<double>();
        else if (key == "family_mix") family_mix = value.get<std::array<double, 4>>();
        else if (key == "eval_tasks") eval_tasks = value.get<int>();
        else if (key == "baseline_extra_epochs") baseline_extra_epochs = value.get<int>();
        else if (key == "out_dir") out_dir = value.get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: bad value for key '" + key + "'");
      }
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }
    apply_json(j);
  }

  // paper: table defaults as initialized above (hours of CPU).
  // desk: reduced budgets suitable for CI (minutes).
  void apply_preset(const std::string& name) {
    if (name == "paper") {
      pretrain_epochs = 15000;
      train_epochs = 5000;
      eval_tasks = 4000;
    } else if (name == "desk") {
      pretrain_epochs = 2000;
      train_epochs = 1000;
      eval_tasks = 500;
    } else {
      throw ConfigError("config: unknown preset '" + name + "' (expected paper or desk)");
    }
  }
};

}  // namespace eeml
