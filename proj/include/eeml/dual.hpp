#pragma once

#include <cmath>

namespace eeml {

// First-order dual number: value plus one directional derivative. Running the
// backprop kernel over Dual (params seeded with tangent v) yields gradient
// tangents equal to the Hessian-vector product H v — forward-over-reverse.
struct Dual {
  double v = 0.0;
  double t = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants, tangent 0
  Dual(double value, double tangent) : v(value), t(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    t += o.t;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    t -= o.t;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    t = t * o.v + v * o.t;
    v *= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.t}; }
inline Dual operator/(const Dual& a, double c) { return {a.v / c, a.t / c}; }

inline bool operator>(const Dual& a, double c) { return a.v > c; }
inline bool operator<(const Dual& a, double c) { return a.v < c; }

inline Dual tanh(const Dual& x) {
  const double tv = std::tanh(x.v);
  return {tv, x.t * (1.0 - tv * tv)};
}

}  // namespace eeml
