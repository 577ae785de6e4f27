#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "eeml/meta.hpp"

using namespace eeml;

namespace {

const NetSpec kSpec{{1, 40, 40, 1}, Activation::relu};

Episode make_episode(std::uint64_t seed, int k_shot = 10, int q_query = 30) {
  TaskConfig cfg;
  cfg.k_shot = k_shot;
  cfg.q_query = q_query;
  RngStream rng(seed);
  return sample_episode(rng, cfg);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS((InnerCfg{0, 1e-3}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((InnerCfg{101, 1e-3}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((InnerCfg{5, 0.0}).validate(), std::invalid_argument);
  InnerCfg{100, 1e-3}.validate();
  OuterCfg bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("inner_adapt at a stationary point is the identity") {
  ParamVector pv = init_params(kSpec, 4);
  Batch support;
  support.inputs = {{0.5}, {-1.0}, {2.5}};
  support.targets = forward(pv, support.inputs);  // zero residual, zero gradient
  InnerCfg cfg{5, 1e-3};
  ParamVector adapted = inner_adapt(pv, support, cfg);
  CHECK(adapted.values == pv.values);
}

TEST_CASE("inner_adapt single step matches the definition bit-exactly") {
  ParamVector pv = init_params(kSpec, 6);
  Episode ep = make_episode(101);
  InnerCfg cfg{1, 1e-3};
  ParamVector adapted = inner_adapt(pv, ep.support, cfg);
  auto g = grad(pv, ep.support);
  for (std::size_t i = 0; i < pv.values.size(); ++i) {
    const double expect = pv.values[i] - cfg.lr * g[i];
    CHECK(adapted.values[i] == expect);
  }
}

TEST_CASE("inner_adapt strictly decreases support loss on a sinusoid task") {
  ParamVector pv = init_params(kSpec, 8);
  TaskConfig tcfg;
  tcfg.family_mix = {1.0, 0.0, 0.0, 0.0};
  RngStream rng(9);
  Episode ep = sample_episode(rng, tcfg);
  InnerCfg cfg{5, 1e-3};
  const double before = mse_loss(pv, ep.support);
  const double after = mse_loss(inner_adapt(pv, ep.support, cfg), ep.support);
  CHECK(after < before);
}

TEST_CASE("outer_step fixed point and singleton") {
  ParamVector pv = init_params(kSpec, 12);

  // all tasks at stationary points: supports and queries generated by the net
  std::vector<Episode> tasks(3);
  RngStream rng(13);
  for (auto& ep : tasks) {
    for (int i = 0; i < 5; ++i) ep.support.inputs.push_back({rng.uniform(-5, 5)});
    for (int i = 0; i < 8; ++i) ep.query.inputs.push_back({rng.uniform(-5, 5)});
    ep.support.targets = forward(pv, ep.support.inputs);
    ep.query.targets = forward(pv, ep.query.inputs);
  }
  InnerCfg inner{5, 1e-3};
  OuterCfg outer;
  ParamVector next = outer_step(pv, tasks, inner, outer);
  CHECK(next.values == pv.values);

  // singleton batch equals a single meta-gradient step
  Episode ep = make_episode(55);
  std::vector<Episode> one{ep};
  ParamVector stepped = outer_step(pv, one, inner, outer);
  auto mg = meta_grad(pv, ep.support, ep.query, inner.steps, inner.lr, outer.order);
  for (std::size_t i = 0; i < pv.values.size(); ++i)
    CHECK(stepped.values[i] == pv.values[i] - outer.lr * 1.0 * mg[i]);

  CHECK_THROWS_AS(outer_step(pv, std::vector<Episode>{}, inner, outer), std::invalid_argument);
}

TEST_CASE("outer_step is invariant to task permutation") {
  ParamVector pv = init_params(kSpec, 21);
  std::vector<Episode> tasks;
  for (int i = 0; i < 8; ++i) tasks.push_back(make_episode(300 + i, 5, 10));
  InnerCfg inner{3, 1e-3};
  OuterCfg outer;
  ParamVector a = outer_step(pv, tasks, inner, outer);
  std::reverse(tasks.begin(), tasks.end());
  ParamVector b = outer_step(pv, tasks, inner, outer);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

TEST_CASE("short MAML run decreases mean query loss on sinusoids") {
  ParamVector pv = init_params(kSpec, 31);
  TaskConfig tcfg;
  tcfg.family_mix = {1.0, 0.0, 0.0, 0.0};
  tcfg.k_shot = 10;
  tcfg.q_query = 20;
  InnerCfg inner{5, 1e-3};
  OuterCfg outer;
  outer.epochs = 100;
  outer.batch_size = 32;

  RngStream stream = phase_stream(31, StreamPhase::pretrain);
  auto source = [&](int step) {
    return sample_batch(stream.split(step), outer.batch_size, tcfg);
  };
  PretrainResult res = pretrain(pv, source, inner, outer);
  REQUIRE(res.loss_trace.size() == 100);
  const double first10 =
      std::accumulate(res.loss_trace.begin(), res.loss_trace.begin() + 10, 0.0) / 10;
  const double last10 = std::accumulate(res.loss_trace.end() - 10, res.loss_trace.end(), 0.0) / 10;
  CHECK(last10 < first10);
}

TEST_CASE("pretrain with zero epochs returns the initialization") {
  ParamVector pv = init_params(kSpec, 77);
  InnerCfg inner{5, 1e-3};
  OuterCfg outer;
  outer.epochs = 0;
  auto source = [&](int) { return std::vector<Episode>{make_episode(1)}; };
  PretrainResult res = pretrain(pv, source, inner, outer);
  CHECK(res.theta.values == pv.values);
  CHECK(res.loss_trace.empty());
}

TEST_CASE("adapt_and_eval composes inner_adapt with query mse") {
  ParamVector pv = init_params(kSpec, 91);
  Episode ep = make_episode(92);
  InnerCfg cfg{5, 1e-3};
  const double direct = adapt_and_eval(pv, ep, cfg);
  const double composed = mse_loss(inner_adapt(pv, ep.support, cfg), ep.query);
  CHECK(std::memcmp(&direct, &composed, sizeof(double)) == 0);

  // zero-loss case: episode the net already fits perfectly
  Episode fit;
  fit.support.inputs = {{0.1}, {0.9}};
  fit.query.inputs = {{-0.4}, {1.4}};
  fit.support.targets = forward(pv, fit.support.inputs);
  fit.query.targets = forward(pv, fit.query.inputs);
  CHECK(adapt_and_eval(pv, fit, cfg) == 0.0);

  InnerCfg zero_steps{0, 1e-3};
  CHECK_THROWS_AS(adapt_and_eval(pv, ep, zero_steps), std::invalid_argument);
}

TEST_CASE("trace sanity check accepts decreasing and rejects rising traces") {
  std::vector<double> good;
  for (int i = 0; i < 600; ++i) good.push_back(10.0 / (1 + i * 0.01) + 0.05 * ((i * 37) % 7));
  CHECK(trace_is_non_increasing(good));

  std::vector<double> bad;
  for (int i = 0; i < 600; ++i) bad.push_back(1.0 + (i > 400 ? (i - 400) * 0.05 : 0.0));
  CHECK_FALSE(trace_is_non_increasing(bad));

  std::vector<double> tiny{1.0, 2.0, 3.0};
  CHECK(trace_is_non_increasing(tiny));  // too short to judge
}
