#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eeml/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitNumeric = 4;

struct CliOptions {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int shots = 10;
  std::string order;
};

eeml::ExperimentConfig resolve_config(const CliOptions& opt) {
  eeml::ExperimentConfig cfg;
  if (!opt.preset.empty()) cfg.apply_preset(opt.preset);
  if (!opt.config_path.empty()) cfg.load_file(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (!opt.order.empty()) cfg.order = opt.order;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CliOptions& opt, bool with_shots) {
  cmd->add_option("--config", opt.config_path, "JSON config file (overrides preset defaults)");
  cmd->add_option("--preset", opt.preset, "preset: paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", opt.seed, "master seed");
  cmd->add_option("--out", opt.out_dir, "output directory for checkpoints and reports");
  cmd->add_option("--order", opt.order, "meta-gradient order: first or second")
      ->check(CLI::IsMember({"first", "second"}));
  if (with_shots)
    cmd->add_option("--shots", opt.shots, "support-set size for evaluation (5 or 10)")
        ->check(CLI::IsMember({5, 10}));
}

void print_report(const eeml::MetricsReport& rep) {
  std::printf("%s %d-shot: mean MSE %.4f +- %.4f over %d tasks\n", rep.method.c_str(), rep.shots,
              rep.mean, rep.ci_half_width, rep.n_tasks);
  if (rep.single_sample) std::printf("warning: single task, confidence interval is degenerate\n");
  if (rep.degenerate_embeddings > 0)
    std::printf("note: %d task(s) fell back to a uniform similarity vector\n",
                rep.degenerate_embeddings);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEML: ensemble embedded meta-learning on the four-family toy regression benchmark"};
  app.require_subcommand(1);

  CliOptions opt;
  auto* cmd_pretrain = app.add_subcommand("pretrain", "MAML-pretrain theta_clu");
  auto* cmd_cluster = app.add_subcommand("cluster", "embed tasks at theta_clu and fit cosine k-means");
  auto* cmd_train = app.add_subcommand("train", "train the expert ensemble against frozen centers");
  auto* cmd_eval = app.add_subcommand("eval", "evaluate the EEML ensemble on held-out tasks");
  auto* cmd_baseline = app.add_subcommand("baseline", "prepare and evaluate the MAML baseline");
  auto* cmd_all = app.add_subcommand("all", "run the full pipeline and compare EEML with MAML");
  add_common(cmd_pretrain, opt, false);
  add_common(cmd_cluster, opt, false);
  add_common(cmd_train, opt, false);
  add_common(cmd_eval, opt, true);
  add_common(cmd_baseline, opt, true);
  add_common(cmd_all, opt, true);

  CLI11_PARSE(app, argc, argv);

  auto log = [](const std::string& msg) { std::printf("%s\n", msg.c_str()); std::fflush(stdout); };

  try {
    const eeml::ExperimentConfig cfg = resolve_config(opt);
    log("config hash " + cfg.hash() + ", output " + cfg.out_dir);

    if (cmd_pretrain->parsed()) {
      auto res = eeml::run_pretrain(cfg, log);
      std::printf("pretrained %d steps, final mean query loss %.4f\n", cfg.pretrain_epochs,
                  res.loss_trace.empty() ? 0.0 : res.loss_trace.back());
    } else if (cmd_cluster->parsed()) {
      auto res = eeml::run_cluster_stage(cfg, log);
      std::printf("k=%d clusters, inertia %.4f, %d iterations\n", res.model.k, res.model.inertia,
                  res.model.iters_run);
    } else if (cmd_train->parsed()) {
      eeml::run_train_stage(cfg, log);
      std::printf("trained %d ensemble steps (K=%d)\n", cfg.train_epochs, cfg.k_clusters);
    } else if (cmd_eval->parsed()) {
      print_report(eeml::run_eval(cfg, opt.shots, log));
    } else if (cmd_baseline->parsed()) {
      eeml::run_baseline_stage(cfg, log);
      print_report(eeml::run_baseline(cfg, opt.shots, log));
    } else if (cmd_all->parsed()) {
      eeml::ComparisonResult res = eeml::run_all(cfg, opt.shots, log);
      print_report(res.eeml);
      print_report(res.maml);
      std::printf("EEML/MAML mean MSE ratio: %.4f\n", res.eeml.mean / res.maml.mean);
    }
  } catch (const eeml::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const eeml::DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return kExitDependency;
  } catch (const eeml::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kExitDependency;
  } catch (const eeml::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
