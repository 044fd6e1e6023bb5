#pragma once

#include <cmath>
#include <numbers>

namespace vitsi {

namespace detail {
[[noreturn]] void throw_domain(const char* what);
}  // namespace detail

/// Forward-mode dual number: a value and its derivative with respect to one
/// scalar parameter z. Running a computation on Dual inputs seeded with
/// deriv = dx/dz produces d(output)/dz alongside the output.
///
/// The value part of every operation is computed with exactly the same
/// floating-point expression as the plain `double` overloads, so a Dual run
/// reproduces the real run bit for bit.
struct Dual {
  double value = 0.0;
  double deriv = 0.0;

  constexpr Dual() = default;
  // Implicit on purpose: constants promote with zero derivative.
  constexpr Dual(double v) : value(v) {}  // NOLINT
  constexpr Dual(double v, double d) : value(v), deriv(d) {}

  constexpr Dual& operator+=(const Dual& o) {
    value += o.value;
    deriv += o.deriv;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    value -= o.value;
    deriv -= o.deriv;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    deriv = deriv * o.value + value * o.deriv;
    value *= o.value;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    if (o.value == 0.0) detail::throw_domain("Dual division by zero");
    const double q = value / o.value;
    deriv = (deriv - q * o.deriv) / o.value;
    value = q;
    return *this;
  }
  constexpr Dual& operator*=(double s) {
    value *= s;
    deriv *= s;
    return *this;
  }
};

constexpr Dual operator-(const Dual& a) { return {-a.value, -a.deriv}; }
constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }

constexpr Dual operator+(Dual a, double b) { return {a.value + b, a.deriv}; }
constexpr Dual operator+(double a, Dual b) { return {a + b.value, b.deriv}; }
constexpr Dual operator-(Dual a, double b) { return {a.value - b, a.deriv}; }
constexpr Dual operator-(double a, Dual b) { return {a - b.value, -b.deriv}; }
constexpr Dual operator*(Dual a, double b) { return {a.value * b, a.deriv * b}; }
constexpr Dual operator*(double a, Dual b) { return {a * b.value, a * b.deriv}; }
inline Dual operator/(Dual a, double b) {
  if (b == 0.0) detail::throw_domain("Dual division by zero");
  return {a.value / b, a.deriv / b};
}
inline Dual operator/(double a, Dual b) { return Dual(a) / b; }

constexpr double value_of(double x) { return x; }
constexpr double value_of(const Dual& x) { return x.value; }

inline Dual exp(const Dual& x) {
  const double e = std::exp(x.value);
  return {e, e * x.deriv};
}

inline Dual log(const Dual& x) {
  if (!(x.value > 0.0)) detail::throw_domain("Dual log of non-positive value");
  return {std::log(x.value), x.deriv / x.value};
}

inline Dual sqrt(const Dual& x) {
  if (x.value < 0.0) detail::throw_domain("Dual sqrt of negative value");
  const double s = std::sqrt(x.value);
  if (s == 0.0 && x.deriv != 0.0) detail::throw_domain("Dual sqrt not differentiable at 0");
  return {s, s == 0.0 ? 0.0 : 0.5 * x.deriv / s};
}

inline Dual tanh(const Dual& x) {
  const double t = std::tanh(x.value);
  return {t, (1.0 - t * t) * x.deriv};
}

inline Dual erf(const Dual& x) {
  constexpr double k2OverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;
  return {std::erf(x.value), k2OverSqrtPi * std::exp(-x.value * x.value) * x.deriv};
}

// Real overloads so templated code can call exp/sqrt/... unqualified on either
// scalar type.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double erf(double x) { return std::erf(x); }

}  // namespace vitsi
