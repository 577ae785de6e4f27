#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eeml/net.hpp"
#include "eeml/parallel.hpp"
#include "eeml/tasks.hpp"
#include "eeml/vecmath.hpp"

namespace eeml {

struct InnerCfg {
  int steps = 5;
  double lr = 1e-3;

  void validate() const {
    if (steps < 1 || steps > 100)
      throw std::invalid_argument("InnerCfg: steps must be in [1, 100]");
    if (!(lr > 0.0)) throw std::invalid_argument("InnerCfg: lr must be positive");
  }
};

enum class OuterOptimizer { sgd, adam };

inline std::string to_string(OuterOptimizer o) {
  return o == OuterOptimizer::sgd ? "sgd" : "adam";
}

inline OuterOptimizer outer_optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OuterOptimizer::sgd;
  if (s == "adam") return OuterOptimizer::adam;
  throw std::invalid_argument("unknown outer optimizer '" + s + "' (expected sgd or adam)");
}

struct OuterCfg {
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 1;
  GradOrder order = GradOrder::second;
  bool average = false;   // Eq-as-written sums task gradients; averaging is a config hook
  // Optimizer for the stateful training loops. A bare outer_step (no state
  // threaded) is always the plain descent step. Plain SGD at the benchmark's
  // step counts stalls far from convergence, so the loops default to adam.
  OuterOptimizer optimizer = OuterOptimizer::adam;
  double momentum = 0.0;  // classical momentum, sgd only

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("OuterCfg: lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("OuterCfg: batch_size must be positive");
    if (epochs < 0) throw std::invalid_argument("OuterCfg: epochs must be nonnegative");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("OuterCfg: momentum must be in [0, 1)");
  }
};

// per-parameter optimizer state carried across outer steps by training loops
struct OptState {
  std::vector<double> velocity;  // sgd momentum
  std::vector<double> m;         // adam first moment
  std::vector<double> v;         // adam second moment
  std::int64_t t = 0;
};

namespace detail {

// new = base - lr * step, where step is the weighted task-gradient sum
// (accumulated in task order), transformed by the configured optimizer when
// state is threaded in. Shared by the MAML outer step and the per-expert
// ensemble update so the K=1 reduction is bit-exact.
inline std::vector<double> weighted_descent(const std::vector<double>& base,
                                            std::span<const std::vector<double>> task_grads,
                                            std::span<const double> weights, const OuterCfg& outer,
                                            OptState* state = nullptr) {
  std::vector<double> acc(base.size(), 0.0);
  for (std::size_t i = 0; i < task_grads.size(); ++i) {
    const double w = weights[i];
    const std::vector<double>& g = task_grads[i];
    for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += w * g[t];
  }
  if (outer.average) {
    const double inv = 1.0 / static_cast<double>(task_grads.size());
    for (double& a : acc) a *= inv;
  }
  if (state != nullptr) {
    if (outer.optimizer == OuterOptimizer::adam) {
      static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      if (state->m.empty()) {
        state->m.assign(base.size(), 0.0);
        state->v.assign(base.size(), 0.0);
      }
      state->t += 1;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(state->t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(state->t));
      for (std::size_t t = 0; t < acc.size(); ++t) {
        state->m[t] = b1 * state->m[t] + (1.0 - b1) * acc[t];
        state->v[t] = b2 * state->v[t] + (1.0 - b2) * acc[t] * acc[t];
        acc[t] = (state->m[t] / c1) / (std::sqrt(state->v[t] / c2) + eps);
      }
    } else if (outer.momentum > 0.0) {
      if (state->velocity.empty()) state->velocity.assign(base.size(), 0.0);
      for (std::size_t t = 0; t < acc.size(); ++t) {
        state->velocity[t] = outer.momentum * state->velocity[t] + acc[t];
        acc[t] = state->velocity[t];
      }
    }
  }
  std::vector<double> out(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) out[t] = base[t] - outer.lr * acc[t];
  return out;
}

}  // namespace detail

// `cfg.steps` full-batch gradient steps on the support loss. Query data never
// enters here.
inline ParamVector inner_adapt(const ParamVector& params, const Batch& support,
                               const InnerCfg& cfg) {
  cfg.validate();
  params.validate();
  support.validate(params.spec);
  ParamVector cur = params;
  for (int k = 0; k < cfg.steps; ++k) {
    const std::vector<double> g = grad(cur, support);
    for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] -= cfg.lr * g[i];
    if (!vec::all_finite(cur.values))
      throw NumericError("inner_adapt: non-finite parameters after step " + std::to_string(k + 1));
  }
  return cur;
}

// One meta-update over a task batch. Per-task meta-gradients may be computed
// concurrently; the reduction runs in task order for reproducibility. If
// mean_query_loss is non-null it receives the batch-mean query loss at the
// adapted parameters. state, when provided, carries optimizer state across
// consecutive steps; without it the update is plain descent.
inline ParamVector outer_step(const ParamVector& params, std::span<const Episode> tasks,
                              const InnerCfg& inner, const OuterCfg& outer,
                              double* mean_query_loss = nullptr, OptState* state = nullptr) {
  inner.validate();
  outer.validate();
  params.validate();
  if (tasks.empty()) throw std::invalid_argument("outer_step: task batch is empty");

  const int n = static_cast<int>(tasks.size());
  std::vector<std::vector<double>> grads(n);
  std::vector<double> losses(n, 0.0);
  parallel_for(n, [&](int i) {
    grads[i] = meta_grad(params, tasks[i].support, tasks[i].query, inner.steps, inner.lr,
                         outer.order, &losses[i]);
  });
  if (mean_query_loss != nullptr) {
    double acc = 0.0;
    for (double l : losses) acc += l;
    *mean_query_loss = acc / n;
  }
  const std::vector<double> ones(n, 1.0);
  ParamVector out{params.spec, detail::weighted_descent(params.values, grads, ones, outer, state)};
  if (!vec::all_finite(out.values)) throw NumericError("outer_step: non-finite parameters");
  return out;
}

inline double adapt_and_eval(const ParamVector& params, const Episode& episode,
                             const InnerCfg& cfg) {
  const ParamVector adapted = inner_adapt(params, episode.support, cfg);
  return mse_loss(adapted, episode.query);
}

struct PretrainResult {
  ParamVector theta;
  std::vector<double> loss_trace;  // mean query loss at adapted params, per outer step
};

// MAML training: outer.epochs steps, each on a freshly sampled task batch.
// task_source(step) supplies the batch for that step.
template <typename TaskSource>
PretrainResult pretrain(const ParamVector& init, TaskSource&& task_source, const InnerCfg& inner,
                        const OuterCfg& outer,
                        const std::function<void(int, double)>& on_step = {}) {
  inner.validate();
  outer.validate();
  PretrainResult res{init, {}};
  res.loss_trace.reserve(outer.epochs);
  OptState state;
  for (int step = 0; step < outer.epochs; ++step) {
    const std::vector<Episode> tasks = task_source(step);
    double loss = 0.0;
    res.theta = outer_step(res.theta, tasks, inner, outer, &loss, &state);
    res.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return res;
}

// Sanity check on a training trace: smoothed over `window` steps, the final
// half never rises more than `tolerance` above its level at the halfway
// point.
inline bool trace_is_non_increasing(std::span<const double> trace, int window = 100,
                                    double tolerance = 0.10) {
  if (trace.size() < static_cast<std::size_t>(2 * window)) return true;
  std::vector<double> smooth;
  for (std::size_t i = 0; i + window <= trace.size(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < window; ++j) acc += trace[i + j];
    smooth.push_back(acc / window);
  }
  const double at_half = smooth[smooth.size() / 2];
  for (std::size_t i = smooth.size() / 2; i < smooth.size(); ++i)
    if (smooth[i] > at_half * (1.0 + tolerance)) return false;
  return true;
}

}  // namespace eeml
