#pragma once

#include <array>
#include <cmath>
#include <cstddef>

// Forward-mode dual numbers with a compile-time derivative width. Assembly
// kernels are templated on the scalar type; instantiating them with Dual<N>
// yields exact derivatives with respect to the N seeded inputs.

namespace hoist {

template <int N>
struct Dual {
  double val = 0.0;
  std::array<double, N> der{};

  Dual() = default;
  Dual(double v) : val(v) {}  // NOLINT: implicit by design (passive constant)

  static Dual seed(double v, int slot) {
    Dual d(v);
    d.der[slot] = 1.0;
    return d;
  }

  Dual& operator+=(const Dual& o) {
    val += o.val;
    for (int i = 0; i < N; ++i) der[i] += o.der[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    for (int i = 0; i < N; ++i) der[i] -= o.der[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) der[i] = der[i] * o.val + val * o.der[i];
    val *= o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.val;
    for (int i = 0; i < N; ++i) der[i] = (der[i] - val * inv * o.der[i]) * inv;
    val *= inv;
    return *this;
  }
  Dual operator-() const {
    Dual r;
    r.val = -val;
    for (int i = 0; i < N; ++i) r.der[i] = -der[i];
    return r;
  }
};

template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
inline Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N>
inline Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <int N> inline Dual<N> operator+(Dual<N> a, double b) { a.val += b; return a; }
template <int N> inline Dual<N> operator+(double a, Dual<N> b) { b.val += a; return b; }
template <int N> inline Dual<N> operator-(Dual<N> a, double b) { a.val -= b; return a; }
template <int N> inline Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <int N>
inline Dual<N> operator*(Dual<N> a, double b) {
  a.val *= b;
  for (int i = 0; i < N; ++i) a.der[i] *= b;
  return a;
}
template <int N> inline Dual<N> operator*(double a, Dual<N> b) { return b * a; }
template <int N> inline Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <int N> inline Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }

template <int N> inline bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.val < b.val; }
template <int N> inline bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.val > b.val; }
template <int N> inline bool operator<(const Dual<N>& a, double b) { return a.val < b; }
template <int N> inline bool operator>(const Dual<N>& a, double b) { return a.val > b; }
template <int N> inline bool operator<=(const Dual<N>& a, double b) { return a.val <= b; }
template <int N> inline bool operator>=(const Dual<N>& a, double b) { return a.val >= b; }

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r;
  r.val = std::sqrt(a.val);
  const double s = 0.5 / r.val;
  for (int i = 0; i < N; ++i) r.der[i] = s * a.der[i];
  return r;
}

template <int N>
inline Dual<N> exp(const Dual<N>& a) {
  Dual<N> r;
  r.val = std::exp(a.val);
  for (int i = 0; i < N; ++i) r.der[i] = r.val * a.der[i];
  return r;
}

template <int N>
inline Dual<N> log(const Dual<N>& a) {
  Dual<N> r;
  r.val = std::log(a.val);
  const double s = 1.0 / a.val;
  for (int i = 0; i < N; ++i) r.der[i] = s * a.der[i];
  return r;
}

template <int N>
inline Dual<N> sin(const Dual<N>& a) {
  Dual<N> r;
  r.val = std::sin(a.val);
  const double c = std::cos(a.val);
  for (int i = 0; i < N; ++i) r.der[i] = c * a.der[i];
  return r;
}

template <int N>
inline Dual<N> cos(const Dual<N>& a) {
  Dual<N> r;
  r.val = std::cos(a.val);
  const double s = -std::sin(a.val);
  for (int i = 0; i < N; ++i) r.der[i] = s * a.der[i];
  return r;
}

template <int N>
inline Dual<N> pow(const Dual<N>& a, double p) {
  Dual<N> r;
  r.val = std::pow(a.val, p);
  const double s = p * std::pow(a.val, p - 1.0);
  for (int i = 0; i < N; ++i) r.der[i] = s * a.der[i];
  return r;
}

template <int N>
inline Dual<N> abs(const Dual<N>& a) { return a.val < 0.0 ? -a : a; }

template <int N>
inline Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return a.val >= b.val ? a : b; }
template <int N>
inline Dual<N> min(const Dual<N>& a, const Dual<N>& b) { return a.val <= b.val ? a : b; }
template <int N>
inline Dual<N> max(const Dual<N>& a, double b) { return a.val >= b ? a : Dual<N>(b); }

// Passive-value access uniform over double and Dual.
inline double value(double x) { return x; }
template <int N>
inline double value(const Dual<N>& x) { return x.val; }

using std::abs;
using std::cos;
using std::exp;
using std::log;
using std::max;
using std::min;
using std::pow;
using std::sin;
using std::sqrt;

// Smoothed |z| and max used inside numerical-flux dissipation terms.
template <class S>
inline S smooth_abs(const S& z, double eps) {
  return sqrt(z * z + eps * eps);
}
template <class S>
inline S smooth_max(const S& a, const S& b, double eps) {
  return 0.5 * (a + b + smooth_abs(a - b, eps));
}

}  // namespace hoist
