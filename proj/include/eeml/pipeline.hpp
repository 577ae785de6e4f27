#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "eeml/checkpoint.hpp"
#include "eeml/config.hpp"
#include "eeml/ensemble.hpp"
#include "eeml/parallel.hpp"
#include "eeml/report.hpp"

namespace eeml {

struct RunPaths {
  std::filesystem::path out;

  explicit RunPaths(const std::string& out_dir) : out(out_dir) {}

  std::filesystem::path theta() const { return out / "theta_clu.eeml"; }
  std::filesystem::path cluster() const { return out / "cluster.eeml"; }
  std::filesystem::path ensemble() const { return out / "ensemble.eeml"; }
  std::filesystem::path baseline() const { return out / "baseline.eeml"; }
  std::filesystem::path pretrain_loss() const { return out / "pretrain_loss.csv"; }
  std::filesystem::path train_loss() const { return out / "train_loss.csv"; }
  std::filesystem::path baseline_loss() const { return out / "baseline_loss.csv"; }
  std::filesystem::path resolved_config() const { return out / "resolved_config.json"; }
  std::filesystem::path cluster_summary() const { return out / "cluster_summary.json"; }
  std::filesystem::path report_csv(const std::string& method, int shots) const {
    return out / ("eval_" + method + "_" + std::to_string(shots) + "shot.csv");
  }
  std::filesystem::path report_json(const std::string& method, int shots) const {
    return out / ("eval_" + method + "_" + std::to_string(shots) + "shot.json");
  }
  std::filesystem::path comparison() const { return out / "comparison.json"; }
};

inline void write_resolved_config(const ExperimentConfig& cfg) {
  RunPaths paths(cfg.out_dir);
  std::filesystem::create_directories(paths.out);
  std::ofstream f(paths.resolved_config(), std::ios::trunc);
  nlohmann::json j = cfg.to_json();
  j["config_hash"] = cfg.hash();
  f << j.dump(2) << "\n";
}

using ProgressFn = std::function<void(const std::string&)>;

// MAML pretraining of theta_clu on the mixed task stream.
inline PretrainResult run_pretrain(const ExperimentConfig& cfg, const ProgressFn& log = {}) {
  cfg.validate();
  write_resolved_config(cfg);
  RunPaths paths(cfg.out_dir);

  const TaskConfig tcfg = cfg.task_cfg(cfg.k_shot);
  const InnerCfg inner = cfg.inner_cfg();
  const OuterCfg outer = cfg.outer_cfg(cfg.pretrain_epochs);
  const RngStream stream = phase_stream(cfg.seed, StreamPhase::pretrain);
  auto source = [&](int step) { return sample_batch(stream.split(step), outer.batch_size, tcfg); };

  PretrainResult res = pretrain(init_params(cfg.net_spec(), cfg.seed), source, inner, outer,
                                [&](int step, double loss) {
                                  if (log && (step + 1) % 200 == 0)
                                    log("pretrain step " + std::to_string(step + 1) + "/" +
                                        std::to_string(outer.epochs) + " loss " +
                                        std::to_string(loss));
                                });
  save_param_vector(paths.theta(), res.theta, cfg.hash(), cfg.seed);
  write_loss_csv(paths.pretrain_loss(), res.loss_trace);
  if (!res.loss_trace.empty() && !trace_is_non_increasing(res.loss_trace) && log)
    log("warning: pretraining loss trace rises in its final half");
  return res;
}

// Gradient embeddings of a task buffer at theta_clu, clustered with cosine
// k-means. Centers are frozen from here on.
inline KMeansResult run_cluster_stage(const ExperimentConfig& cfg, const ProgressFn& log = {}) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  const ParamVector theta = load_param_vector(paths.theta());
  if (theta.spec != cfg.net_spec())
    throw CheckpointError("theta_clu checkpoint does not match the configured NetSpec");

  const TaskConfig tcfg = cfg.task_cfg(cfg.k_shot);
  const InnerCfg inner = cfg.inner_cfg();
  const GradOrder order = grad_order_from_string(cfg.order);
  const std::vector<Episode> tasks =
      sample_batch(phase_stream(cfg.seed, StreamPhase::cluster), cfg.cluster_tasks, tcfg);

  std::vector<GradientEmbedding> embeddings(tasks.size());
  std::vector<char> degenerate(tasks.size(), 0);
  parallel_for(static_cast<int>(tasks.size()), [&](int i) {
    try {
      embeddings[i] = task_embedding(theta, tasks[i], inner, EmbeddingSource::query_grad, order);
    } catch (const DegenerateEmbeddingError&) {
      degenerate[i] = 1;
    }
  });
  std::vector<GradientEmbedding> kept;
  std::vector<const Episode*> kept_tasks;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (!degenerate[i]) {
      kept.push_back(std::move(embeddings[i]));
      kept_tasks.push_back(&tasks[i]);
    }
  }
  if (static_cast<int>(kept.size()) < cfg.k_clusters)
    throw NumericError("cluster stage: not enough non-degenerate embeddings");
  if (log) log("clustering " + std::to_string(kept.size()) + " embeddings");

  // several seeded fits, keep the lowest objective
  std::vector<KMeansResult> fits(cfg.kmeans_restarts);
  parallel_for(cfg.kmeans_restarts, [&](int r) {
    fits[r] = kmeans_cosine(kept, cfg.k_clusters, cfg.seed + static_cast<std::uint64_t>(r),
                            cfg.kmeans_max_iter);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < fits.size(); ++r)
    if (fits[r].model.inertia < fits[best].model.inertia) best = r;
  KMeansResult res = std::move(fits[best]);
  save_cluster_model(paths.cluster(), res.model, cfg.hash());

  // cluster-by-family composition, useful when judging specialization
  std::map<std::string, std::map<std::string, int>> table;
  for (std::size_t i = 0; i < kept.size(); ++i)
    table["cluster_" + std::to_string(res.assignments[i])][to_string(kept_tasks[i]->family)]++;
  nlohmann::json j{{"inertia", res.model.inertia},
                   {"iters_run", res.model.iters_run},
                   {"n_embeddings", kept.size()},
                   {"degenerate", tasks.size() - kept.size()},
                   {"composition", table}};
  std::ofstream f(paths.cluster_summary(), std::ios::trunc);
  f << j.dump(2) << "\n";
  return res;
}

// Expert training against the frozen centers.
inline Ensemble run_train_stage(const ExperimentConfig& cfg, const ProgressFn& log = {}) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  const ParamVector theta = load_param_vector(paths.theta());
  const ClusterModel cluster = load_cluster_model(paths.cluster());
  if (theta.spec != cfg.net_spec())
    throw CheckpointError("theta_clu checkpoint does not match the configured NetSpec");
  if (cluster.dim() != static_cast<int>(theta.values.size()))
    throw CheckpointError("cluster model dimension does not match theta_clu");

  const TaskConfig tcfg = cfg.task_cfg(cfg.k_shot);
  const InnerCfg inner = cfg.inner_cfg();
  const OuterCfg outer = cfg.outer_cfg(cfg.train_epochs);
  const RngStream stream = phase_stream(cfg.seed, StreamPhase::train);

  Ensemble ens = init_experts(theta, cluster, Provenance{cfg.seed, cfg.hash()});
  std::vector<double> trace;
  trace.reserve(cfg.train_epochs);
  std::vector<OptState> opt_states;
  for (int step = 0; step < cfg.train_epochs; ++step) {
    const std::vector<Episode> tasks = sample_batch(stream.split(step), outer.batch_size, tcfg);
    double loss = 0.0;
    ens = ensemble_train_step(ens, tasks, theta, inner, outer, &loss, nullptr, &opt_states);
    trace.push_back(loss);
    if (log && (step + 1) % 100 == 0)
      log("train step " + std::to_string(step + 1) + "/" + std::to_string(cfg.train_epochs) +
          " weighted loss " + std::to_string(loss));
  }
  save_ensemble(paths.ensemble(), ens);
  write_loss_csv(paths.train_loss(), trace);
  return ens;
}

// The MAML baseline. By default this is the pretrained theta_clu itself;
// baseline_extra_epochs > 0 continues plain MAML on the same task stream the
// ensemble trains on (so a K=1 ensemble and the continued baseline see
// identical updates).
inline ParamVector run_baseline_stage(const ExperimentConfig& cfg, const ProgressFn& log = {}) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  const ParamVector theta = load_param_vector(paths.theta());
  if (theta.spec != cfg.net_spec())
    throw CheckpointError("theta_clu checkpoint does not match the configured NetSpec");

  ParamVector model = theta;
  if (cfg.baseline_extra_epochs > 0) {
    const TaskConfig tcfg = cfg.task_cfg(cfg.k_shot);
    const InnerCfg inner = cfg.inner_cfg();
    const OuterCfg outer = cfg.outer_cfg(cfg.baseline_extra_epochs);
    const RngStream stream = phase_stream(cfg.seed, StreamPhase::train);
    auto source = [&](int step) {
      return sample_batch(stream.split(step), outer.batch_size, tcfg);
    };
    PretrainResult res = pretrain(theta, source, inner, outer, [&](int step, double loss) {
      if (log && (step + 1) % 200 == 0)
        log("baseline step " + std::to_string(step + 1) + "/" + std::to_string(outer.epochs) +
            " loss " + std::to_string(loss));
    });
    write_loss_csv(paths.baseline_loss(), res.loss_trace);
    model = std::move(res.theta);
  }
  save_param_vector(paths.baseline(), model, cfg.hash(), cfg.seed);
  return model;
}

// The evaluation stream depends only on (seed, shots), so EEML and the MAML
// baseline score the exact same episodes.
inline std::vector<Episode> eval_episodes(const ExperimentConfig& cfg, int shots, int n_tasks) {
  return sample_batch(phase_stream(cfg.seed, StreamPhase::eval, static_cast<std::uint64_t>(shots)),
                      n_tasks, cfg.task_cfg(shots));
}

inline MetricsReport run_eval(const ExperimentConfig& cfg, int shots, const ProgressFn& log = {}) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  const Ensemble ens = load_ensemble(paths.ensemble());
  const ParamVector theta = load_param_vector(paths.theta());
  if (!(ens.experts.front().spec == theta.spec))
    throw CheckpointError("ensemble and theta_clu checkpoints disagree on NetSpec");
  if (ens.cluster.dim() != static_cast<int>(theta.values.size()))
    throw CheckpointError("ensemble cluster dimension does not match theta_clu");

  const InnerCfg inner = cfg.inner_cfg();
  const std::vector<Episode> tasks = eval_episodes(cfg, shots, cfg.eval_tasks);

  MetricsReport rep;
  rep.method = "eeml";
  rep.shots = shots;
  rep.q_query = cfg.q_query;
  rep.config_hash = cfg.hash();
  rep.checkpoint_hashes["ensemble"] = hash_file(paths.ensemble());
  rep.checkpoint_hashes["theta_clu"] = hash_file(paths.theta());
  rep.task_mse.assign(tasks.size(), 0.0);
  std::vector<int> degenerate(tasks.size(), 0);
  parallel_for(static_cast<int>(tasks.size()), [&](int i) {
    EvalDiagnostics diag;
    rep.task_mse[i] = eeml_adapt_and_eval(ens, theta, tasks[i], inner, &diag,
                                          cfg.expert_errors_pre_adaptation);
    degenerate[i] = diag.degenerate_embeddings;
  });
  for (int d : degenerate) rep.degenerate_embeddings += d;
  rep.finalize();
  if (rep.single_sample && log) log("warning: single-task evaluation, CI reported as 0");
  write_task_csv(paths.report_csv(rep.method, shots), rep);
  write_summary_json(paths.report_json(rep.method, shots), rep);
  return rep;
}

inline MetricsReport run_baseline(const ExperimentConfig& cfg, int shots,
                                  const ProgressFn& log = {}) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  const ParamVector model = load_param_vector(paths.baseline());
  if (!(model.spec == cfg.net_spec()))
    throw CheckpointError("baseline checkpoint does not match the configured NetSpec");

  const InnerCfg inner = cfg.inner_cfg();
  const std::vector<Episode> tasks = eval_episodes(cfg, shots, cfg.eval_tasks);

  MetricsReport rep;
  rep.method = "maml";
  rep.shots = shots;
  rep.q_query = cfg.q_query;
  rep.config_hash = cfg.hash();
  rep.checkpoint_hashes["baseline"] = hash_file(paths.baseline());
  rep.task_mse.assign(tasks.size(), 0.0);
  parallel_for(static_cast<int>(tasks.size()),
               [&](int i) { rep.task_mse[i] = adapt_and_eval(model, tasks[i], inner); });
  rep.finalize();
  if (rep.single_sample && log) log("warning: single-task evaluation, CI reported as 0");
  write_task_csv(paths.report_csv(rep.method, shots), rep);
  write_summary_json(paths.report_json(rep.method, shots), rep);
  return rep;
}

struct ComparisonResult {
  MetricsReport eeml;
  MetricsReport maml;
};

// pretrain -> cluster -> train -> baseline -> paired evaluation
inline ComparisonResult run_all(const ExperimentConfig& cfg, int shots,
                                const ProgressFn& log = {}) {
  run_pretrain(cfg, log);
  run_cluster_stage(cfg, log);
  run_train_stage(cfg, log);
  run_baseline_stage(cfg, log);
  ComparisonResult res{run_eval(cfg, shots, log), run_baseline(cfg, shots, log)};

  RunPaths paths(cfg.out_dir);
  nlohmann::json j{{"eeml", res.eeml.summary_json()},
                   {"maml", res.maml.summary_json()},
                   {"mse_ratio", res.eeml.mean / res.maml.mean},
                   {"shots", shots}};
  std::ofstream f(paths.comparison(), std::ios::trunc);
  f << j.dump(2) << "\n";
  return res;
}

}  // namespace eeml
