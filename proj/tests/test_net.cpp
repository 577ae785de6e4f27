#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "eeml/net.hpp"

using namespace eeml;

namespace {

// independent straight-line matrix arithmetic over the flat layout
std::vector<double> oracle_forward(const NetSpec& spec, const std::vector<double>& p,
                                   const std::vector<double>& x) {
  std::vector<double> a = x;
  int off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int nin = spec.layer_sizes[l];
    const int nout = spec.layer_sizes[l + 1];
    std::vector<double> z(nout, 0.0);
    for (int j = 0; j < nout; ++j) {
      double acc = 0.0;
      for (int i = 0; i < nin; ++i) acc += p[off + j * nin + i] * a[i];
      z[j] = acc + p[off + nin * nout + j];
    }
    off += (nin + 1) * nout;
    if (l + 2 < spec.layer_sizes.size()) {
      for (double& v : z)
        v = spec.activation == Activation::relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    }
    a = std::move(z);
  }
  return a;
}

Batch random_batch(const NetSpec& spec, RngStream& rng, int n) {
  Batch b;
  for (int k = 0; k < n; ++k) {
    std::vector<double> x(spec.input_dim());
    std::vector<double> y(spec.output_dim());
    for (double& v : x) v = rng.uniform(-5.0, 5.0);
    for (double& v : y) v = rng.uniform(-3.0, 3.0);
    b.inputs.push_back(std::move(x));
    b.targets.push_back(std::move(y));
  }
  return b;
}

double composed_query_loss(ParamVector theta, const Batch& support, const Batch& query, int steps,
                           double lr) {
  for (int k = 0; k < steps; ++k) {
    const auto g = grad(theta, support);
    for (std::size_t i = 0; i < theta.values.size(); ++i) theta.values[i] -= lr * g[i];
  }
  return mse_loss(theta, query);
}

}  // namespace

TEST_CASE("NetSpec validation and parameter count") {
  NetSpec spec{{1, 40, 40, 1}, Activation::relu};
  spec.validate();
  CHECK(spec.param_count() == 2 * 40 + 41 * 40 + 41 * 1);

  CHECK_THROWS_AS(NetSpec{{3}}.validate(), std::invalid_argument);
  CHECK_THROWS_AS((NetSpec{{3, 0, 1}}).validate(), std::invalid_argument);
}

TEST_CASE("forward: zero params give zero outputs") {
  NetSpec spec{{1, 40, 40, 1}, Activation::relu};
  ParamVector pv{spec, std::vector<double>(spec.param_count(), 0.0)};
  auto out = forward(pv, {{0.7}, {-2.0}, {4.0}});
  REQUIRE(out.size() == 3);
  for (const auto& y : out) CHECK(y[0] == 0.0);
}

TEST_CASE("forward: single linear identity layer") {
  NetSpec spec{{1, 1}, Activation::relu};
  ParamVector pv{spec, {1.0, 0.0}};  // weight 1, bias 0
  auto out = forward(pv, {{3.0}});
  CHECK(out[0][0] == 3.0);
}

TEST_CASE("forward matches independent matrix oracle") {
  NetSpec spec{{1, 40, 40, 1}, Activation::relu};
  ParamVector pv = init_params(spec, 2024);
  auto out = forward(pv, {{0.5}});
  auto expect = oracle_forward(spec, pv.values, {0.5});
  CHECK(out[0][0] == doctest::Approx(expect[0]).epsilon(1e-12));

  NetSpec tspec{{2, 7, 3}, Activation::tanh};
  ParamVector tpv = init_params(tspec, 11);
  auto tout = forward(tpv, {{0.3, -1.4}});
  auto texpect = oracle_forward(tspec, tpv.values, {0.3, -1.4});
  for (int j = 0; j < 3; ++j) CHECK(tout[0][j] == doctest::Approx(texpect[j]).epsilon(1e-12));
}

TEST_CASE("forward rejects dimension mismatches") {
  NetSpec spec{{2, 3, 1}, Activation::relu};
  ParamVector pv = init_params(spec, 1);
  CHECK_THROWS_AS(forward(pv, {{1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(forward(pv, {}), std::invalid_argument);
}

TEST_CASE("mse_loss trivial values") {
  NetSpec spec{{1, 1}, Activation::relu};
  ParamVector pv{spec, {1.0, 0.0}};
  Batch perfect{{{2.0}, {-1.0}}, {{2.0}, {-1.0}}};
  CHECK(mse_loss(pv, perfect) == 0.0);

  ParamVector zero{spec, {0.0, 0.0}};
  Batch b{{{5.0}, {7.0}}, {{1.0}, {-1.0}}};
  CHECK(mse_loss(zero, b) == doctest::Approx(1.0));

  CHECK_THROWS_AS(mse_loss(pv, Batch{}), std::invalid_argument);
}

TEST_CASE("mse_loss matches direct summation oracle") {
  NetSpec spec{{1, 40, 40, 1}, Activation::relu};
  ParamVector pv = init_params(spec, 5);
  RngStream rng(77);
  Batch b = random_batch(spec, rng, 9);
  auto preds = forward(pv, b.inputs);
  double acc = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double r = preds[k][0] - b.targets[k][0];
    acc += r * r;
  }
  CHECK(mse_loss(pv, b) == doctest::Approx(acc / 9.0).epsilon(1e-12));
}

TEST_CASE("grad is zero at a global minimum") {
  NetSpec spec{{1, 8, 8, 1}, Activation::tanh};
  ParamVector pv = init_params(spec, 3);
  Batch b;
  b.inputs = {{0.4}, {-1.1}, {2.2}};
  b.targets = forward(pv, b.inputs);
  auto g = grad(pv, b);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("grad: single linear neuron closed form") {
  // y = w*x, sample (x=2, y=0), w=1: dL/dw = 2*(2-0)*2 = 8
  NetSpec spec{{1, 1}, Activation::relu};
  ParamVector pv{spec, {1.0, 0.0}};
  Batch b{{{2.0}}, {{0.0}}};
  auto g = grad(pv, b);
  CHECK(g[0] == doctest::Approx(8.0));
  CHECK(g[1] == doctest::Approx(4.0));  // bias path: 2*(2-0)
}

TEST_CASE("grad matches central finite differences on 20 random nets") {
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    NetSpec spec{{1, 40, 40, 1}, trial % 2 == 0 ? Activation::relu : Activation::tanh};
    ParamVector pv = init_params(spec, 1000 + trial);
    RngStream rng(500 + trial);
    Batch b = random_batch(spec, rng, 6);
    auto g = grad(pv, b);
    ParamVector probe = pv;
    for (std::size_t i = 0; i < pv.values.size(); ++i) {
      if (std::abs(g[i]) <= 1e-6) continue;
      probe.values[i] = pv.values[i] + h;
      const double up = mse_loss(probe, b);
      probe.values[i] = pv.values[i] - h;
      const double dn = mse_loss(probe, b);
      probe.values[i] = pv.values[i];
      const double fd = (up - dn) / (2.0 * h);
      CHECK(std::abs(fd - g[i]) / std::abs(g[i]) < 1e-4);
    }
  }
}

TEST_CASE("hessian_vector_product matches finite differences of grad") {
  NetSpec spec{{1, 10, 10, 1}, Activation::tanh};
  ParamVector pv = init_params(spec, 42);
  RngStream rng(43);
  Batch b = random_batch(spec, rng, 5);
  std::vector<double> v(pv.values.size());
  for (double& x : v) x = rng.uniform(-1.0, 1.0);

  auto hv = hessian_vector_product(pv, b, v);

  const double h = 1e-6;
  ParamVector up = pv, dn = pv;
  for (std::size_t i = 0; i < v.size(); ++i) {
    up.values[i] += h * v[i];
    dn.values[i] -= h * v[i];
  }
  auto gu = grad(up, b);
  auto gd = grad(dn, b);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double fd = (gu[i] - gd[i]) / (2.0 * h);
    CHECK(hv[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("meta_grad with inner_lr=0 equals plain query gradient") {
  NetSpec spec{{1, 12, 12, 1}, Activation::relu};
  ParamVector pv = init_params(spec, 9);
  RngStream rng(10);
  Batch support = random_batch(spec, rng, 5);
  Batch query = random_batch(spec, rng, 7);
  auto gq = grad(pv, query);
  for (GradOrder order : {GradOrder::first, GradOrder::second}) {
    auto mg = meta_grad(pv, support, query, 3, 0.0, order);
    REQUIRE(mg.size() == gq.size());
    for (std::size_t i = 0; i < mg.size(); ++i) CHECK(mg[i] == gq[i]);
  }
}

TEST_CASE("meta_grad second order matches finite differences of the composed map") {
  for (int steps : {1, 5}) {
    NetSpec spec{{1, 16, 16, 1}, Activation::tanh};
    ParamVector pv = init_params(spec, 100 + steps);
    RngStream rng(200 + steps);
    Batch support = random_batch(spec, rng, 5);
    Batch query = random_batch(spec, rng, 8);
    const double lr = 0.01;
    auto mg = meta_grad(pv, support, query, steps, lr, GradOrder::second);

    const double h = 1e-5;
    ParamVector probe = pv;
    int checked = 0;
    for (std::size_t i = 0; i < pv.values.size(); i += 7) {  // stride keeps runtime low
      probe.values[i] = pv.values[i] + h;
      const double up = composed_query_loss(probe, support, query, steps, lr);
      probe.values[i] = pv.values[i] - h;
      const double dn = composed_query_loss(probe, support, query, steps, lr);
      probe.values[i] = pv.values[i];
      const double fd = (up - dn) / (2.0 * h);
      if (std::abs(mg[i]) <= 1e-6) continue;
      CHECK(std::abs(fd - mg[i]) / std::abs(mg[i]) < 1e-3);
      ++checked;
    }
    CHECK(checked > 40);
  }
}

TEST_CASE("meta_grad on linear model equals (I - lr H) grad_query") {
  // single linear layer, 2 -> 1: params (w0, w1, b); quadratic loss
  NetSpec spec{{2, 1}, Activation::relu};
  ParamVector pv{spec, {0.3, -0.7, 0.2}};
  Batch support{{{1.0, 2.0}, {-1.5, 0.5}, {2.0, -1.0}}, {{1.0}, {-2.0}, {0.5}}};
  Batch query{{{0.5, 0.5}, {1.0, -1.0}}, {{0.3}, {1.1}}};
  const double lr = 0.05;

  // explicit Hessian of the support loss: H = (2/n) sum xt xt^T, xt = (x0, x1, 1)
  const int n = 3;
  double H[3][3] = {};
  for (int k = 0; k < n; ++k) {
    const double xt[3] = {support.inputs[k][0], support.inputs[k][1], 1.0};
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 3; ++c) H[a][c] += 2.0 * xt[a] * xt[c] / n;
  }

  auto gs = grad(pv, support);
  ParamVector adapted = pv;
  for (int i = 0; i < 3; ++i) adapted.values[i] -= lr * gs[i];
  auto gq = grad(adapted, query);

  double expect[3];
  for (int a = 0; a < 3; ++a) {
    double acc = gq[a];
    for (int c = 0; c < 3; ++c) acc -= lr * H[a][c] * gq[c];
    expect[a] = acc;
  }

  auto mg = meta_grad(pv, support, query, 1, lr, GradOrder::second);
  for (int a = 0; a < 3; ++a) CHECK(mg[a] == doctest::Approx(expect[a]).epsilon(1e-12));

  // first order drops the (I - lr H) factor
  auto mg1 = meta_grad(pv, support, query, 1, lr, GradOrder::first);
  for (int a = 0; a < 3; ++a) CHECK(mg1[a] == doctest::Approx(gq[a]).epsilon(1e-12));
}

TEST_CASE("forward, mse_loss, grad, meta_grad are pure") {
  NetSpec spec{{1, 20, 20, 1}, Activation::relu};
  ParamVector pv = init_params(spec, 7);
  RngStream rng(8);
  Batch support = random_batch(spec, rng, 4);
  Batch query = random_batch(spec, rng, 6);

  auto f1 = forward(pv, support.inputs);
  auto f2 = forward(pv, support.inputs);
  CHECK(std::memcmp(f1[0].data(), f2[0].data(), sizeof(double) * f1[0].size()) == 0);

  const double l1 = mse_loss(pv, support);
  const double l2 = mse_loss(pv, support);
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);

  auto g1 = grad(pv, support);
  auto g2 = grad(pv, support);
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);

  auto m1 = meta_grad(pv, support, query, 2, 0.01, GradOrder::second);
  auto m2 = meta_grad(pv, support, query, 2, 0.01, GradOrder::second);
  CHECK(std::memcmp(m1.data(), m2.data(), sizeof(double) * m1.size()) == 0);
}

TEST_CASE("gradients stay finite for params up to 1e3") {
  RngStream rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    NetSpec spec{{1, 10, 10, 1}, trial % 2 == 0 ? Activation::relu : Activation::tanh};
    ParamVector pv{spec, std::vector<double>(spec.param_count())};
    for (double& v : pv.values) v = rng.uniform(-1e3, 1e3);
    Batch b = random_batch(spec, rng, 4);
    auto g = grad(pv, b);
    CHECK(vec::all_finite(g));
    auto mg = meta_grad(pv, b, b, 1, 1e-9, GradOrder::second);
    CHECK(vec::all_finite(mg));
  }
}

TEST_CASE("init_params: zero biases, bounded weights, seeded determinism") {
  NetSpec spec{{1, 40, 40, 1}, Activation::relu};
  ParamVector a = init_params(spec, 123);
  ParamVector b = init_params(spec, 123);
  CHECK(a.values == b.values);
  ParamVector c = init_params(spec, 124);
  CHECK(a.values != c.values);

  // layer 1 biases live right after the first weight block
  const int off = spec.layer_offset(0);
  for (int j = 0; j < 40; ++j) CHECK(a.values[off + 40 + j] == 0.0);
  for (int i = 0; i < 40; ++i) CHECK(std::abs(a.values[off + i]) <= 1.0);
  const int off1 = spec.layer_offset(1);
  for (int i = 0; i < 40 * 40; ++i) CHECK(std::abs(a.values[off1 + i]) <= 1.0 / std::sqrt(40.0));
}
