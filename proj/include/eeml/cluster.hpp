#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeml/meta.hpp"
#include "eeml/net.hpp"
#include "eeml/vecmath.hpp"

namespace eeml {

enum class EmbeddingSource { query_grad, support_grad };

// Unit-normalized task gradient taken at theta_clu.
struct GradientEmbedding {
  std::vector<double> u;
  EmbeddingSource source = EmbeddingSource::query_grad;
};

// query_grad: the task's meta-gradient at theta_clu (adapt on the support set,
// differentiate the query loss back to theta_clu) — the training-phase
// embedding. support_grad: the same meta-gradient structure with the support
// set in both roles; query labels are unavailable at test time, so the test
// phase uses this one. Keeping the adapt-then-differentiate structure puts
// test embeddings in the same geometry as the training embeddings the centers
// were fit on (a plain support gradient at theta_clu is nearly orthogonal to
// that geometry once theta_clu is trained).
inline GradientEmbedding task_embedding(const ParamVector& theta_clu, const Episode& episode,
                                        const InnerCfg& inner, EmbeddingSource source,
                                        GradOrder order = GradOrder::second) {
  inner.validate();
  std::vector<double> g;
  if (source == EmbeddingSource::query_grad) {
    g = meta_grad(theta_clu, episode.support, episode.query, inner.steps, inner.lr, order);
  } else {
    g = meta_grad(theta_clu, episode.support, episode.support, inner.steps, inner.lr, order);
  }
  const double n = vec::norm(g);
  if (!(n > 1e-200) || !std::isfinite(n))
    throw DegenerateEmbeddingError("task_embedding: task gradient is zero at theta_clu");
  for (double& x : g) x /= n;
  return GradientEmbedding{std::move(g), source};
}

// 1 - cos(a, b) for unit vectors; range [0, 2]
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
  if (std::abs(vec::norm(a) - 1.0) > 1e-8 || std::abs(vec::norm(b) - 1.0) > 1e-8)
    throw std::invalid_argument("cosine_distance: inputs must be unit vectors");
  return 1.0 - vec::dot(a, b);
}

struct ClusterModel {
  std::vector<std::vector<double>> centers;  // K unit vectors
  int k = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int iters_run = 0;

  int dim() const { return centers.empty() ? 0 : static_cast<int>(centers.front().size()); }
};

struct KMeansResult {
  ClusterModel model;
  std::vector<int> assignments;
};

namespace detail {

inline int nearest_center(std::span<const double> u,
                          const std::vector<std::vector<double>>& centers) {
  int best = 0;
  double best_dot = vec::dot(u, centers[0]);
  for (std::size_t c = 1; c < centers.size(); ++c) {
    const double d = vec::dot(u, centers[c]);
    if (d > best_dot) {  // strict: ties keep the lowest index
      best_dot = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace detail

// Lloyd iterations under cosine distance: assign to the nearest center, then
// move each center to the L2-normalized mean of its members (the exact
// minimizer of the cosine objective for fixed assignments). Seeding is
// k-means++ adapted to cosine distance; an emptied cluster is reseeded to the
// point farthest from its previous center.
inline KMeansResult kmeans_cosine(const std::vector<GradientEmbedding>& embeddings, int K,
                                  std::uint64_t seed, int max_iter) {
  if (K < 1) throw std::invalid_argument("kmeans_cosine: K must be positive");
  const int n = static_cast<int>(embeddings.size());
  if (n < K) throw std::invalid_argument("kmeans_cosine: fewer points than clusters");
  if (max_iter < 1) throw std::invalid_argument("kmeans_cosine: max_iter must be positive");
  const std::size_t dim = embeddings.front().u.size();
  for (const auto& e : embeddings)
    if (e.u.size() != dim) throw std::invalid_argument("kmeans_cosine: inconsistent dimensions");

  RngStream rng(seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(K);
  centers.push_back(embeddings[rng.next_below(n)].u);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < K) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = 2.0;
      for (const auto& c : centers) best = std::min(best, 1.0 - vec::dot(embeddings[i].u, c));
      d2[i] = best * best;
      total += d2[i];
    }
    int pick;
    if (total > 0.0) {
      pick = rng.pick_weighted(d2);
    } else {
      pick = rng.next_below(n);  // all points coincide with centers
    }
    centers.push_back(embeddings[pick].u);
  }

  std::vector<int> assign_cur(n, -1);
  int iters = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    ++iters;
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int a = detail::nearest_center(embeddings[i].u, centers);
      if (a != assign_cur[i]) changed = true;
      assign_cur[i] = a;
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(K, std::vector<double>(dim, 0.0));
    std::vector<int> counts(K, 0);
    for (int i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) sums[assign_cur[i]][d] += embeddings[i].u[d];
      ++counts[assign_cur[i]];
    }
    for (int c = 0; c < K; ++c) {
      const double norm = vec::norm(sums[c]);
      if (counts[c] == 0 || !(norm > 1e-12)) {
        // reseed to the point farthest from this center
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = 1.0 - vec::dot(embeddings[i].u, centers[c]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = embeddings[far].u;
      } else {
        for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / norm;
      }
    }
  }

  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    assign_cur[i] = detail::nearest_center(embeddings[i].u, centers);
    inertia += 1.0 - vec::dot(embeddings[i].u, centers[assign_cur[i]]);
  }

  KMeansResult res;
  res.model = ClusterModel{std::move(centers), K, inertia, seed, iters};
  res.assignments = std::move(assign_cur);
  return res;
}

// dot products against all K centers (inputs are unit vectors)
inline std::vector<double> similarity(const GradientEmbedding& u, const ClusterModel& model) {
  if (model.k < 1 || model.centers.empty())
    throw std::invalid_argument("similarity: empty cluster model");
  if (static_cast<int>(u.u.size()) != model.dim())
    throw std::invalid_argument("similarity: dimension mismatch");
  std::vector<double> sims(model.centers.size());
  for (std::size_t c = 0; c < model.centers.size(); ++c) sims[c] = vec::dot(u.u, model.centers[c]);
  return sims;
}

// index of the most similar center; exact ties go to the lowest index
inline int assign(const GradientEmbedding& u, const ClusterModel& model) {
  const std::vector<double> sims = similarity(u, model);
  int best = 0;
  for (std::size_t c = 1; c < sims.size(); ++c)
    if (sims[c] > sims[best]) best = static_cast<int>(c);
  return best;
}

}  // namespace eeml
