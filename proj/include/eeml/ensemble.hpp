#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eeml/cluster.hpp"
#include "eeml/meta.hpp"
#include "eeml/net.hpp"
#include "eeml/parallel.hpp"
#include "eeml/vecmath.hpp"

namespace eeml {

// row per task, column per expert; rows produced by a softmax sum to 1
using CoefMatrix = std::vector<std::vector<double>>;

struct Provenance {
  std::uint64_t pretrain_seed = 0;
  std::string config_hash;
};

struct Ensemble {
  std::vector<ParamVector> experts;
  ClusterModel cluster;
  Provenance provenance;

  int k() const { return static_cast<int>(experts.size()); }

  void validate() const {
    if (experts.empty()) throw std::invalid_argument("Ensemble: no experts");
    if (static_cast<int>(experts.size()) != cluster.k)
      throw std::invalid_argument("Ensemble: expert count does not match cluster K");
    for (const auto& e : experts) {
      e.validate();
      if (!(e.spec == experts.front().spec))
        throw std::invalid_argument("Ensemble: experts disagree on NetSpec");
    }
  }
};

// K identical copies of theta_clu, one per cluster center
inline Ensemble init_experts(const ParamVector& theta_clu, const ClusterModel& cluster,
                             Provenance provenance = {}) {
  theta_clu.validate();
  if (cluster.k < 1 || cluster.centers.empty())
    throw std::invalid_argument("init_experts: empty cluster model");
  Ensemble ens;
  ens.experts.assign(static_cast<std::size_t>(cluster.k), theta_clu);
  ens.cluster = cluster;
  ens.provenance = std::move(provenance);
  return ens;
}

// softmax of the task-to-center cosine similarities
inline std::vector<double> alpha_coefficients(const GradientEmbedding& u,
                                              const ClusterModel& cluster) {
  return vec::softmax(similarity(u, cluster));
}

// counters surfaced by the evaluation path (degenerate embeddings fall back to
// a uniform similarity vector rather than failing the task)
struct EvalDiagnostics {
  int degenerate_embeddings = 0;
};

// One ensemble meta-update (the weighted training loss): each task's embedding
// at the frozen theta_clu yields alpha over experts; expert j descends the
// alpha-weighted sum of task meta-gradients taken at its own parameters. All
// updates are computed from the pre-step ensemble. opt_states, when provided,
// carries per-expert optimizer state across steps.
//
// alpha_override is a test hook replacing the computed coefficients.
inline Ensemble ensemble_train_step(const Ensemble& ens, std::span<const Episode> tasks,
                                    const ParamVector& theta_clu, const InnerCfg& inner,
                                    const OuterCfg& outer, double* weighted_loss = nullptr,
                                    const CoefMatrix* alpha_override = nullptr,
                                    std::vector<OptState>* opt_states = nullptr) {
  ens.validate();
  inner.validate();
  outer.validate();
  if (tasks.empty()) throw std::invalid_argument("ensemble_train_step: task batch is empty");
  const int n = static_cast<int>(tasks.size());
  const int K = ens.k();

  CoefMatrix alpha(n);
  if (alpha_override != nullptr) {
    if (static_cast<int>(alpha_override->size()) != n)
      throw std::invalid_argument("ensemble_train_step: alpha override row count mismatch");
    for (const auto& row : *alpha_override)
      if (static_cast<int>(row.size()) != K)
        throw std::invalid_argument("ensemble_train_step: alpha override column count mismatch");
    alpha = *alpha_override;
  } else if (K == 1) {
    for (auto& row : alpha) row = {1.0};  // a single-entry softmax is identically 1
  } else {
    parallel_for(n, [&](int i) {
      try {
        const GradientEmbedding u =
            task_embedding(theta_clu, tasks[i], inner, EmbeddingSource::query_grad, outer.order);
        alpha[i] = alpha_coefficients(u, ens.cluster);
      } catch (const DegenerateEmbeddingError&) {
        alpha[i].assign(static_cast<std::size_t>(K), 1.0 / K);
      }
    });
  }

  // meta-gradient of task i at expert j, flattened (j, i); query losses kept
  // for the weighted-loss trace
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(K) * n);
  std::vector<double> losses(static_cast<std::size_t>(K) * n, 0.0);
  parallel_for(K * n, [&](int idx) {
    const int j = idx / n;
    const int i = idx % n;
    try {
      grads[idx] = meta_grad(ens.experts[j], tasks[i].support, tasks[i].query, inner.steps,
                             inner.lr, outer.order, &losses[idx]);
    } catch (const NumericError& e) {
      throw NumericError("expert " + std::to_string(j) + ": " + e.what());
    }
  });

  if (weighted_loss != nullptr) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < K; ++j) acc += alpha[i][j] * losses[static_cast<std::size_t>(j) * n + i];
    *weighted_loss = acc / n;
  }

  if (opt_states != nullptr && opt_states->empty())
    opt_states->resize(static_cast<std::size_t>(K));
  Ensemble next = ens;
  for (int j = 0; j < K; ++j) {
    std::vector<double> weights(n);
    for (int i = 0; i < n; ++i) weights[i] = alpha[i][j];
    std::span<const std::vector<double>> expert_grads(grads.data() + static_cast<std::size_t>(j) * n,
                                                      static_cast<std::size_t>(n));
    next.experts[j].values =
        detail::weighted_descent(ens.experts[j].values, expert_grads, weights, outer,
                                 opt_states != nullptr ? &(*opt_states)[j] : nullptr);
    if (!vec::all_finite(next.experts[j].values))
      throw NumericError("ensemble_train_step: non-finite parameters for expert " +
                         std::to_string(j));
  }
  return next;
}

// test-time fine-tuning: each expert adapts independently on the support set
inline std::vector<ParamVector> fine_tune_experts(const Ensemble& ens, const Batch& support,
                                                  const InnerCfg& inner) {
  ens.validate();
  std::vector<ParamVector> adapted(ens.experts.size());
  for (std::size_t j = 0; j < ens.experts.size(); ++j)
    adapted[j] = inner_adapt(ens.experts[j], support, inner);
  return adapted;
}

// softmax over the experts' support losses: higher loss, larger component
inline std::vector<double> expert_errors(const std::vector<ParamVector>& adapted,
                                         const Batch& support) {
  if (adapted.empty()) throw std::invalid_argument("expert_errors: no experts");
  std::vector<double> losses(adapted.size());
  for (std::size_t j = 0; j < adapted.size(); ++j) losses[j] = mse_loss(adapted[j], support);
  return vec::softmax(losses);
}

// softmax of the elementwise similarity/error ratio
inline std::vector<double> beta_weights(std::span<const double> sim, std::span<const double> err) {
  if (sim.size() != err.size() || sim.empty())
    throw std::invalid_argument("beta_weights: length mismatch");
  std::vector<double> ratio(sim.size());
  for (std::size_t j = 0; j < sim.size(); ++j) {
    if (!(err[j] > 0.0)) throw std::invalid_argument("beta_weights: err entries must be positive");
    ratio[j] = sim[j] / err[j];
  }
  return vec::softmax(ratio);
}

// per-input convex combination of expert outputs
inline std::vector<std::vector<double>> ensemble_predict(
    const std::vector<ParamVector>& adapted, std::span<const double> beta,
    const std::vector<std::vector<double>>& query_inputs) {
  if (adapted.empty() || adapted.size() != beta.size())
    throw std::invalid_argument("ensemble_predict: expert/weight count mismatch");
  std::vector<std::vector<double>> out = forward(adapted[0], query_inputs);
  for (auto& row : out)
    for (double& v : row) v = beta[0] * v;
  for (std::size_t j = 1; j < adapted.size(); ++j) {
    const auto pj = forward(adapted[j], query_inputs);
    for (std::size_t k = 0; k < out.size(); ++k)
      for (std::size_t c = 0; c < out[k].size(); ++c) out[k][c] += beta[j] * pj[k][c];
  }
  return out;
}

// Full test-time pipeline: support-gradient embedding -> similarity ->
// fine-tune -> expert errors -> beta -> weighted vote -> query MSE. A
// degenerate embedding falls back to a uniform (all-ones) similarity vector so
// the vote still weighs adaptation quality.
inline double eeml_adapt_and_eval(const Ensemble& ens, const ParamVector& theta_clu,
                                  const Episode& episode, const InnerCfg& inner,
                                  EvalDiagnostics* diag = nullptr,
                                  bool errors_pre_adaptation = false) {
  ens.validate();
  std::vector<double> sim;
  try {
    const GradientEmbedding u =
        task_embedding(theta_clu, episode, inner, EmbeddingSource::support_grad);
    sim = similarity(u, ens.cluster);
  } catch (const DegenerateEmbeddingError&) {
    sim.assign(static_cast<std::size_t>(ens.k()), 1.0);
    if (diag != nullptr) ++diag->degenerate_embeddings;
  }
  const std::vector<ParamVector> adapted = fine_tune_experts(ens, episode.support, inner);
  const std::vector<double> err =
      expert_errors(errors_pre_adaptation ? ens.experts : adapted, episode.support);
  const std::vector<double> beta = beta_weights(sim, err);
  const auto preds = ensemble_predict(adapted, beta, episode.query.inputs);
  return detail::mse_of(preds, episode.query.targets);
}

}  // namespace eeml
