#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace eeml::vec {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += a * x
inline void axpy(double a, std::span<const double> x, std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

// Numerically stable softmax; a single entry maps to exactly {1.0}. Entries
// are floored at the smallest normal double so the output is strictly
// positive even when exp underflows — downstream ratios divide by these.
inline std::vector<double> softmax(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (double& x : out) x = std::max(x / sum, std::numeric_limits<double>::min());
  return out;
}

}  // namespace eeml::vec
