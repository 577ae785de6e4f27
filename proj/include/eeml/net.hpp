#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eeml/dual.hpp"
#include "eeml/errors.hpp"
#include "eeml/rng.hpp"
#include "eeml/vecmath.hpp"

namespace eeml {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu or tanh)");
}

// Dense MLP architecture. Hidden layers use `activation`; the output layer is
// linear. Parameters flatten layer by layer: row-major weights [out][in], then
// biases [out].
struct NetSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::relu;

  void validate() const {
    if (layer_sizes.size() < 2)
      throw std::invalid_argument("NetSpec: layer_sizes needs at least input and output dims");
    for (int n : layer_sizes)
      if (n < 1) throw std::invalid_argument("NetSpec: every layer size must be >= 1");
  }

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

  int param_count() const {
    int n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return n;
  }

  // offset of layer l's weight block in the flat vector
  int layer_offset(int l) const {
    int off = 0;
    for (int i = 0; i < l; ++i) off += (layer_sizes[i] + 1) * layer_sizes[i + 1];
    return off;
  }

  bool operator==(const NetSpec&) const = default;
};

struct ParamVector {
  NetSpec spec;
  std::vector<double> values;

  void validate() const {
    spec.validate();
    if (static_cast<int>(values.size()) != spec.param_count())
      throw std::invalid_argument(
          "ParamVector: values length does not match the NetSpec parameter count");
  }
};

struct Batch {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;

  std::size_t size() const { return inputs.size(); }

  void validate(const NetSpec& spec) const {
    if (inputs.empty()) throw std::invalid_argument("Batch: empty batch");
    if (inputs.size() != targets.size())
      throw std::invalid_argument("Batch: inputs/targets length mismatch");
    for (const auto& x : inputs)
      if (static_cast<int>(x.size()) != spec.input_dim())
        throw std::invalid_argument("Batch: input dim does not match NetSpec");
    for (const auto& y : targets)
      if (static_cast<int>(y.size()) != spec.output_dim())
        throw std::invalid_argument("Batch: target dim does not match NetSpec");
  }
};

// zero biases, weights uniform in +-1/sqrt(fan_in), seeded
inline ParamVector init_params(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector pv{spec, std::vector<double>(static_cast<std::size_t>(spec.param_count()), 0.0)};
  RngStream rng(seed);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int nin = spec.layer_sizes[l];
    const int nout = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(nin));
    double* w = pv.values.data() + spec.layer_offset(l);
    for (int i = 0; i < nin * nout; ++i) w[i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return pv;
}

namespace detail {

template <typename T>
struct NetScratch {
  std::vector<std::vector<T>> act;    // act[0] = input, act[L] = output
  std::vector<std::vector<T>> delta;  // delta[l] = dLoss/d(pre-activation of layer l)

  explicit NetScratch(const NetSpec& spec) {
    const int L = spec.num_layers();
    act.resize(L + 1);
    delta.resize(L + 1);
    for (int l = 0; l <= L; ++l) {
      act[l].assign(static_cast<std::size_t>(spec.layer_sizes[l]), T(0.0));
      delta[l].assign(static_cast<std::size_t>(spec.layer_sizes[l]), T(0.0));
    }
  }
};

template <typename T>
void forward_sample(const NetSpec& spec, const T* p, NetScratch<T>& s) {
  using std::tanh;  // Dual overload found via ADL
  const int L = spec.num_layers();
  for (int l = 0; l < L; ++l) {
    const int nin = spec.layer_sizes[l];
    const int nout = spec.layer_sizes[l + 1];
    const T* W = p + spec.layer_offset(l);
    const T* b = W + nin * nout;
    const auto& in = s.act[l];
    auto& out = s.act[l + 1];
    for (int j = 0; j < nout; ++j) {
      T acc = b[j];
      const T* wj = W + static_cast<std::ptrdiff_t>(j) * nin;
      for (int i = 0; i < nin; ++i) acc += wj[i] * in[i];
      out[j] = acc;
    }
    if (l + 1 < L) {
      if (spec.activation == Activation::relu) {
        for (auto& v : out) v = v > 0.0 ? v : T(0.0);
      } else {
        for (auto& v : out) v = tanh(v);
      }
    }
  }
}

// Accumulates this sample's contribution into g. s.delta[L] must hold
// dLoss/d(output); activation derivatives come from the stored post-activations
// (relu: mask on sign, tanh: 1 - a^2).
template <typename T>
void backward_sample(const NetSpec& spec, const T* p, NetScratch<T>& s, T* g) {
  const int L = spec.num_layers();
  for (int l = L - 1; l >= 0; --l) {
    const int nin = spec.layer_sizes[l];
    const int nout = spec.layer_sizes[l + 1];
    const int off = spec.layer_offset(l);
    const T* W = p + off;
    T* gW = g + off;
    T* gb = gW + nin * nout;
    const auto& ain = s.act[l];
    const auto& dz = s.delta[l + 1];
    for (int j = 0; j < nout; ++j) {
      const T d = dz[j];
      gb[j] += d;
      T* gwj = gW + static_cast<std::ptrdiff_t>(j) * nin;
      for (int i = 0; i < nin; ++i) gwj[i] += d * ain[i];
    }
    if (l > 0) {
      auto& dprev = s.delta[l];
      for (int i = 0; i < nin; ++i) dprev[i] = T(0.0);
      for (int j = 0; j < nout; ++j) {
        const T d = dz[j];
        const T* wj = W + static_cast<std::ptrdiff_t>(j) * nin;
        for (int i = 0; i < nin; ++i) dprev[i] += wj[i] * d;
      }
      if (spec.activation == Activation::relu) {
        for (int i = 0; i < nin; ++i)
          if (!(ain[i] > 0.0)) dprev[i] = T(0.0);
      } else {
        for (int i = 0; i < nin; ++i) dprev[i] = dprev[i] * (T(1.0) - ain[i] * ain[i]);
      }
    }
  }
}

// Batch-mean MSE (mean over samples and output coordinates) and, if g is
// non-null, its gradient with respect to the parameters.
template <typename T>
T mse_and_grad(const NetSpec& spec, const T* p, const Batch& batch, T* g) {
  const int L = spec.num_layers();
  const int d = spec.output_dim();
  const std::size_t n = batch.size();
  const double scale = 1.0 / (static_cast<double>(n) * d);
  NetScratch<T> s(spec);
  T loss(0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (int i = 0; i < spec.input_dim(); ++i) s.act[0][i] = T(batch.inputs[k][i]);
    forward_sample(spec, p, s);
    for (int j = 0; j < d; ++j) {
      const T r = s.act[L][j] - T(batch.targets[k][j]);
      loss += r * r;
      s.delta[L][j] = r * T(2.0 * scale);
    }
    if (g != nullptr) backward_sample(spec, p, s, g);
  }
  return loss * T(scale);
}

inline double mse_of(const std::vector<std::vector<double>>& preds,
                     const std::vector<std::vector<double>>& targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw std::invalid_argument("mse_of: prediction/target count mismatch");
  double loss = 0.0;
  std::size_t d = preds.front().size();
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k].size() != d || targets[k].size() != d)
      throw std::invalid_argument("mse_of: inconsistent dims");
    for (std::size_t j = 0; j < d; ++j) {
      const double r = preds[k][j] - targets[k][j];
      loss += r * r;
    }
  }
  return loss / (static_cast<double>(preds.size()) * static_cast<double>(d));
}

}  // namespace detail

inline std::vector<std::vector<double>> forward(const ParamVector& params,
                                                const std::vector<std::vector<double>>& inputs) {
  params.validate();
  if (inputs.empty()) throw std::invalid_argument("forward: empty input");
  const auto& spec = params.spec;
  for (const auto& x : inputs)
    if (static_cast<int>(x.size()) != spec.input_dim())
      throw std::invalid_argument("forward: input dim does not match NetSpec");
  detail::NetScratch<double> s(spec);
  const int L = spec.num_layers();
  std::vector<std::vector<double>> out(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int i = 0; i < spec.input_dim(); ++i) s.act[0][i] = inputs[k][i];
    detail::forward_sample(spec, params.values.data(), s);
    out[k] = s.act[L];
  }
  return out;
}

inline double mse_loss(const ParamVector& params, const Batch& batch) {
  params.validate();
  batch.validate(params.spec);
  return detail::mse_of(forward(params, batch.inputs), batch.targets);
}

inline std::vector<double> grad(const ParamVector& params, const Batch& batch) {
  params.validate();
  batch.validate(params.spec);
  std::vector<double> g(params.values.size(), 0.0);
  detail::mse_and_grad<double>(params.spec, params.values.data(), batch, g.data());
  return g;
}

// H v for the batch MSE Hessian at params, by backprop over dual numbers.
inline std::vector<double> hessian_vector_product(const ParamVector& params, const Batch& batch,
                                                  std::span<const double> v) {
  params.validate();
  batch.validate(params.spec);
  if (v.size() != params.values.size())
    throw std::invalid_argument("hessian_vector_product: direction length mismatch");
  std::vector<Dual> p(params.values.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual(params.values[i], v[i]);
  std::vector<Dual> g(params.values.size(), Dual(0.0));
  detail::mse_and_grad<Dual>(params.spec, p.data(), batch, g.data());
  std::vector<double> hv(params.values.size());
  for (std::size_t i = 0; i < hv.size(); ++i) hv[i] = g[i].t;
  return hv;
}

enum class GradOrder { first, second };

inline std::string to_string(GradOrder o) { return o == GradOrder::first ? "first" : "second"; }

inline GradOrder grad_order_from_string(const std::string& s) {
  if (s == "first") return GradOrder::first;
  if (s == "second") return GradOrder::second;
  throw std::invalid_argument("unknown grad order '" + s + "' (expected first or second)");
}

// Gradient of the query loss after `steps` inner gradient steps on the support
// loss, with respect to the initial parameters.
//
// order=second differentiates through the unrolled inner loop: with
// J_k = I - lr H_support(theta_k), the result is J_0 ... J_{K-1} gq, applied
// right-to-left via Hessian-vector products. order=first returns the query
// gradient at the adapted parameters unchanged.
inline std::vector<double> meta_grad(const ParamVector& params, const Batch& support,
                                     const Batch& query, int steps, double inner_lr,
                                     GradOrder order, double* query_loss_out = nullptr) {
  params.validate();
  support.validate(params.spec);
  query.validate(params.spec);
  if (steps < 1) throw std::invalid_argument("meta_grad: steps must be >= 1");
  if (inner_lr < 0.0) throw std::invalid_argument("meta_grad: inner_lr must be nonnegative");

  std::vector<std::vector<double>> thetas;
  thetas.reserve(static_cast<std::size_t>(steps) + 1);
  thetas.push_back(params.values);
  ParamVector cur{params.spec, params.values};
  for (int k = 0; k < steps; ++k) {
    const std::vector<double> gs = grad(cur, support);
    for (std::size_t i = 0; i < cur.values.size(); ++i) cur.values[i] -= inner_lr * gs[i];
    if (!vec::all_finite(cur.values))
      throw NumericError("meta_grad: non-finite parameters after inner step " +
                         std::to_string(k + 1));
    if (k + 1 < steps) thetas.push_back(cur.values);
  }

  if (query_loss_out != nullptr) *query_loss_out = mse_loss(cur, query);
  std::vector<double> g = grad(cur, query);
  if (order == GradOrder::second && inner_lr != 0.0) {
    ParamVector at{params.spec, {}};
    for (int k = steps - 1; k >= 0; --k) {
      at.values = thetas[static_cast<std::size_t>(k)];
      const std::vector<double> hv = hessian_vector_product(at, support, g);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= inner_lr * hv[i];
      if (!vec::all_finite(g))
        throw NumericError("meta_grad: non-finite meta-gradient while backing through step " +
                           std::to_string(k + 1));
    }
  }
  if (!vec::all_finite(g)) throw NumericError("meta_grad: non-finite meta-gradient");
  return g;
}

}  // namespace eeml
