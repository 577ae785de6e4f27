#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

#include "eeml/tasks.hpp"

using namespace eeml;

TEST_CASE("eval_family formulas") {
  const double p_sin[] = {1.0, 1.0, 0.0};
  CHECK(eval_family(Family::sinusoids, p_sin, std::numbers::pi / 2) == doctest::Approx(1.0));

  const double p_line[] = {2.0, 1.0};
  CHECK(eval_family(Family::line, p_line, 3.0) == doctest::Approx(7.0));

  const double p_quad[] = {0.1, -2.0, 3.0};
  CHECK(eval_family(Family::quadratic, p_quad, 2.0) == doctest::Approx(0.4 - 4.0 + 3.0));

  const double p_cubic[] = {0.1, 0.2, -2.0, 3.0};
  CHECK(eval_family(Family::cubic, p_cubic, 2.0) == doctest::Approx(0.6));

  CHECK_THROWS_AS(eval_family(Family::line, p_cubic, 1.0), std::invalid_argument);
}

TEST_CASE("family parameter ranges match the benchmark definition") {
  auto sin_r = family_param_ranges(Family::sinusoids);
  CHECK(sin_r[0].lo == 0.1);
  CHECK(sin_r[0].hi == 5.0);
  CHECK(sin_r[1].lo == 0.8);
  CHECK(sin_r[1].hi == 1.2);
  CHECK(sin_r[2].lo == 0.0);
  CHECK(sin_r[2].hi == doctest::Approx(2.0 * std::numbers::pi));
  auto line_r = family_param_ranges(Family::line);
  CHECK(line_r[0].lo == -3.0);
  CHECK(line_r[1].hi == 3.0);
  auto quad_r = family_param_ranges(Family::quadratic);
  CHECK(quad_r[0].lo == -0.2);
  CHECK(quad_r[0].hi == 0.2);
  CHECK(quad_r[1].lo == -2.0);
  CHECK(quad_r[2].hi == 3.0);
  auto cub_r = family_param_ranges(Family::cubic);
  CHECK(cub_r[0].lo == -0.1);
  CHECK(cub_r[1].lo == -0.2);
  CHECK(cub_r[2].lo == -2.0);
  CHECK(cub_r[3].hi == 3.0);
}

TEST_CASE("sample_episode is deterministic per seed") {
  TaskConfig cfg;
  RngStream a(7), b(7);
  Episode ea = sample_episode(a, cfg);
  Episode eb = sample_episode(b, cfg);
  CHECK(ea.family == eb.family);
  CHECK(ea.true_params == eb.true_params);
  CHECK(ea.support.inputs == eb.support.inputs);
  CHECK(ea.support.targets == eb.support.targets);
  CHECK(ea.query.inputs == eb.query.inputs);
  CHECK(ea.query.targets == eb.query.targets);
}

TEST_CASE("degenerate mix yields only that family, params inside ranges") {
  TaskConfig cfg;
  cfg.family_mix = {1.0, 0.0, 0.0, 0.0};
  cfg.k_shot = 2;
  cfg.q_query = 2;
  RngStream rng(11);
  auto ranges = family_param_ranges(Family::sinusoids);
  std::array<double, 3> lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (int i = 0; i < 10000; ++i) {
    RngStream sub = rng.split(i);
    Episode ep = sample_episode(sub, cfg);
    REQUIRE(ep.family == Family::sinusoids);
    for (int j = 0; j < 3; ++j) {
      lo[j] = std::min(lo[j], ep.true_params[j]);
      hi[j] = std::max(hi[j], ep.true_params[j]);
    }
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(lo[j] >= ranges[j].lo);
    CHECK(hi[j] <= ranges[j].hi);
    // draws should come close to both ends
    CHECK(lo[j] < ranges[j].lo + 0.05 * (ranges[j].hi - ranges[j].lo));
    CHECK(hi[j] > ranges[j].hi - 0.05 * (ranges[j].hi - ranges[j].lo));
  }
}

TEST_CASE("parameter draws never leave their ranges (all families)") {
  TaskConfig cfg;
  cfg.k_shot = 1;
  cfg.q_query = 1;
  RngStream rng(13);
  for (int i = 0; i < 100000; ++i) {
    RngStream sub = rng.split(i);
    Episode ep = sample_episode(sub, cfg);
    auto ranges = family_param_ranges(ep.family);
    REQUIRE(ep.true_params.size() == ranges.size());
    for (std::size_t j = 0; j < ranges.size(); ++j) {
      REQUIRE(ep.true_params[j] >= ranges[j].lo);
      REQUIRE(ep.true_params[j] <= ranges[j].hi);
    }
    REQUIRE(ep.support.inputs[0][0] >= cfg.x_min);
    REQUIRE(ep.support.inputs[0][0] <= cfg.x_max);
  }
}

TEST_CASE("noiseless targets reproduce eval_family exactly") {
  TaskConfig cfg;
  RngStream rng(3);
  Episode ep = sample_episode(rng, cfg);
  for (std::size_t i = 0; i < ep.support.inputs.size(); ++i)
    CHECK(ep.support.targets[i][0] ==
          eval_family(ep.family, ep.true_params, ep.support.inputs[i][0]));
  for (std::size_t i = 0; i < ep.query.inputs.size(); ++i)
    CHECK(ep.query.targets[i][0] == eval_family(ep.family, ep.true_params, ep.query.inputs[i][0]));
}

TEST_CASE("noise is applied with the configured sd") {
  TaskConfig cfg;
  cfg.noise_sd = 0.5;
  cfg.k_shot = 4;
  cfg.q_query = 4;
  RngStream rng(5);
  Episode ep = sample_episode(rng, cfg);
  int off_curve = 0;
  for (std::size_t i = 0; i < ep.support.inputs.size(); ++i)
    if (ep.support.targets[i][0] !=
        eval_family(ep.family, ep.true_params, ep.support.inputs[i][0]))
      ++off_curve;
  CHECK(off_curve == 4);
}

TEST_CASE("support and query inputs have no exact duplicates") {
  TaskConfig cfg;
  RngStream rng(17);
  for (int i = 0; i < 200; ++i) {
    RngStream sub = rng.split(i);
    Episode ep = sample_episode(sub, cfg);
    std::set<double> xs;
    for (const auto& x : ep.support.inputs) xs.insert(x[0]);
    for (const auto& x : ep.query.inputs) xs.insert(x[0]);
    CHECK(xs.size() == ep.support.inputs.size() + ep.query.inputs.size());
  }
}

TEST_CASE("sample_batch: count, substream equivalence, seed sensitivity") {
  TaskConfig cfg;
  cfg.k_shot = 3;
  cfg.q_query = 3;
  RngStream rng(21);
  auto batch = sample_batch(rng, 32, cfg);
  CHECK(batch.size() == 32);

  auto single = sample_batch(rng, 1, cfg);
  RngStream sub = rng.split(0);
  Episode direct = sample_episode(sub, cfg);
  CHECK(single[0].true_params == direct.true_params);
  CHECK(single[0].support.inputs == direct.support.inputs);

  auto other = sample_batch(RngStream(22), 32, cfg);
  bool any_diff = false;
  for (int i = 0; i < 32; ++i)
    if (batch[i].true_params != other[i].true_params) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("phase streams are disjoint across namespaces") {
  TaskConfig cfg;
  cfg.k_shot = 1;
  cfg.q_query = 1;
  auto train = sample_batch(phase_stream(42, StreamPhase::train), 500, cfg);
  auto eval = sample_batch(phase_stream(42, StreamPhase::eval), 500, cfg);
  std::set<std::vector<double>> train_params;
  for (const auto& ep : train) train_params.insert(ep.true_params);
  for (const auto& ep : eval) CHECK(train_params.count(ep.true_params) == 0);
}

TEST_CASE("invalid configs are rejected") {
  TaskConfig cfg;
  cfg.family_mix = {0.5, 0.5, 0.5, 0.5};
  RngStream rng(1);
  CHECK_THROWS_AS(sample_episode(rng, cfg), std::invalid_argument);
  cfg = TaskConfig{};
  cfg.k_shot = 0;
  CHECK_THROWS_AS(sample_episode(rng, cfg), std::invalid_argument);
  cfg = TaskConfig{};
  cfg.x_min = 2.0;
  cfg.x_max = -2.0;
  CHECK_THROWS_AS(sample_episode(rng, cfg), std::invalid_argument);
}
