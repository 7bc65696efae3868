#pragma once

#include <algorithm>
#include <cmath>

namespace ppann {

/// Forward-mode dual number carrying a single tangent direction.
///
/// Used to push a tangent through the hand-written reverse passes of the
/// network, which yields exact mixed second derivatives (forward-over-reverse).
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual operator*(double s, const Dual& a) { return {s * a.v, s * a.d}; }
inline Dual operator*(const Dual& a, double s) { return {s * a.v, s * a.d}; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }
inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.d; }

// Scalar activations. The softplus form avoids overflow for large |z|.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Dual softplus(const Dual& z) { return {softplus(z.v), sigmoid(z.v) * z.d}; }

inline Dual sigmoid(const Dual& z) {
  const double s = sigmoid(z.v);
  return {s, s * (1.0 - s) * z.d};
}

/// Derivative of the sigmoid, s(1 - s).
inline double sigmoid_prime(double z) {
  const double s = sigmoid(z);
  return s * (1.0 - s);
}

inline Dual sigmoid_prime(const Dual& z) {
  const double s = sigmoid(z.v);
  const double sp = s * (1.0 - s);
  return {sp, sp * (1.0 - 2.0 * s) * z.d};
}

// ReLU branches on the primal value; the kink at 0 takes the closed side.
inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline Dual relu(const Dual& z) { return z.v > 0.0 ? z : Dual{}; }
inline double relu_step(double z) { return z > 0.0 ? 1.0 : 0.0; }
inline double relu_step(const Dual& z) { return relu_step(z.v); }

}  // namespace ppann
