#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeml/net.hpp"
#include "eeml/rng.hpp"

namespace eeml {

enum class Family { sinusoids = 0, line = 1, quadratic = 2, cubic = 3 };

inline constexpr int kNumFamilies = 4;

inline std::string to_string(Family f) {
  switch (f) {
    case Family::sinusoids: return "sinusoids";
    case Family::line: return "line";
    case Family::quadratic: return "quadratic";
    case Family::cubic: return "cubic";
  }
  throw std::invalid_argument("unknown family");
}

inline int family_arity(Family f) {
  switch (f) {
    case Family::sinusoids: return 3;
    case Family::line: return 2;
    case Family::quadratic: return 3;
    case Family::cubic: return 4;
  }
  throw std::invalid_argument("unknown family");
}

struct ParamRange {
  double lo;
  double hi;
};

// sinusoids: p1 sin(p2 x + p3); line: p1 x + p2;
// quadratic: p1 x^2 + p2 x + p3; cubic: p1 x^3 + p2 x^2 + p3 x + p4
inline std::vector<ParamRange> family_param_ranges(Family f) {
  switch (f) {
    case Family::sinusoids: return {{0.1, 5.0}, {0.8, 1.2}, {0.0, 2.0 * std::numbers::pi}};
    case Family::line: return {{-3.0, 3.0}, {-3.0, 3.0}};
    case Family::quadratic: return {{-0.2, 0.2}, {-2.0, 2.0}, {-3.0, 3.0}};
    case Family::cubic: return {{-0.1, 0.1}, {-0.2, 0.2}, {-2.0, 2.0}, {-3.0, 3.0}};
  }
  throw std::invalid_argument("unknown family");
}

inline double eval_family(Family f, std::span<const double> p, double x) {
  if (static_cast<int>(p.size()) != family_arity(f))
    throw std::invalid_argument("eval_family: parameter count does not match family arity");
  switch (f) {
    case Family::sinusoids: return p[0] * std::sin(p[1] * x + p[2]);
    case Family::line: return p[0] * x + p[1];
    case Family::quadratic: return p[0] * x * x + p[1] * x + p[2];
    case Family::cubic: return ((p[0] * x + p[1]) * x + p[2]) * x + p[3];
  }
  throw std::invalid_argument("unknown family");
}

struct TaskConfig {
  std::array<double, kNumFamilies> family_mix{0.25, 0.25, 0.25, 0.25};
  int k_shot = 10;
  int q_query = 100;
  double noise_sd = 0.0;
  double x_min = -5.0;
  double x_max = 5.0;

  void validate() const {
    if (k_shot < 1) throw std::invalid_argument("TaskConfig: k_shot must be positive");
    if (q_query < 1) throw std::invalid_argument("TaskConfig: q_query must be positive");
    if (noise_sd < 0.0) throw std::invalid_argument("TaskConfig: noise_sd must be nonnegative");
    if (!(x_min < x_max)) throw std::invalid_argument("TaskConfig: x_min must be below x_max");
    double sum = 0.0;
    for (double w : family_mix) {
      if (w < 0.0) throw std::invalid_argument("TaskConfig: family_mix weights must be nonnegative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("TaskConfig: family_mix must sum to 1");
  }
};

// One few-shot task: k-shot support set and a query set drawn from the same
// sampled function. true_params is diagnostic only; learners never see it.
struct Episode {
  Batch support;
  Batch query;
  Family family = Family::sinusoids;
  std::vector<double> true_params;
};

// Draw order is fixed (family, params, support xs, query xs, then noise) so
// episodes are reproducible from the stream alone.
inline Episode sample_episode(RngStream& rng, const TaskConfig& cfg) {
  cfg.validate();
  Episode ep;
  ep.family = static_cast<Family>(rng.pick_weighted(cfg.family_mix));
  for (const ParamRange& r : family_param_ranges(ep.family))
    ep.true_params.push_back(rng.uniform(r.lo, r.hi));

  auto draw = [&](Batch& b, int n) {
    b.inputs.reserve(n);
    b.targets.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double x = rng.uniform(cfg.x_min, cfg.x_max);
      b.inputs.push_back({x});
      b.targets.push_back({eval_family(ep.family, ep.true_params, x)});
    }
  };
  draw(ep.support, cfg.k_shot);
  draw(ep.query, cfg.q_query);
  if (cfg.noise_sd > 0.0) {
    for (auto& y : ep.support.targets) y[0] += cfg.noise_sd * rng.gaussian();
    for (auto& y : ep.query.targets) y[0] += cfg.noise_sd * rng.gaussian();
  }
  return ep;
}

// Episodes come from independent substreams: task i uses rng.split(i), so a
// batch can be reproduced or parallelized element by element.
inline std::vector<Episode> sample_batch(const RngStream& rng, int n_tasks, const TaskConfig& cfg) {
  if (n_tasks < 1) throw std::invalid_argument("sample_batch: n_tasks must be positive");
  cfg.validate();
  std::vector<Episode> out;
  out.reserve(n_tasks);
  for (int i = 0; i < n_tasks; ++i) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(i));
    out.push_back(sample_episode(sub, cfg));
  }
  return out;
}

// Seed-namespace tags keeping training, clustering, and evaluation episode
// streams disjoint. Stream layout: (phase << 56) | (salt << 32) | counter.
enum class StreamPhase : std::uint64_t { pretrain = 1, cluster = 2, train = 3, eval = 4 };

inline RngStream phase_stream(std::uint64_t seed, StreamPhase phase, std::uint64_t salt = 0) {
  const std::uint64_t id = (static_cast<std::uint64_t>(phase) << 56) | (salt << 32);
  return RngStream(seed).split(id);
}

}  // namespace eeml
