#pragma once

// Compactly supported spline profiles used for every bump in the library.

#include <cmath>
#include <stdexcept>

namespace stf::profile {

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// r-th derivative of the cardinal B-spline M_n on [0, n] (truncated powers).
inline double cardinal_bspline(int n, double t, int r = 0) {
  if (n < 1 || r < 0) throw std::invalid_argument("cardinal_bspline: bad order");
  if (t <= 0.0 || t >= n) return 0.0;
  int deg = n - 1 - r;
  if (deg < 0) return 0.0;
  double s = 0.0;
  for (int k = 0; k <= n && k < t; ++k) {
    double term = binom(n, k) * std::pow(t - k, deg);
    s += (k % 2 ? -term : term);
  }
  return s / factorial(deg);
}

// Antiderivative of M_n: smooth monotone step from 0 (t <= 0) to 1 (t >= n).
inline double cardinal_step(int n, double t) {
  if (t <= 0.0) return 0.0;
  if (t >= n) return 1.0;
  if (t > 0.5 * n) return 1.0 - cardinal_step(n, n - t);
  double s = 0.0;
  for (int k = 0; k <= n && k < t; ++k) {
    double term = binom(n, k) * std::pow(t - k, n);
    s += (k % 2 ? -term : term);
  }
  return s / factorial(n);
}

// Centered B-spline of order n supported on [-w/2, w/2], unit integral.
inline double bspline(int n, double w, double x, int r = 0) {
  double scale = n / w;
  return std::pow(scale, r + 1) * cardinal_bspline(n, scale * x + 0.5 * n, r);
}

// Same shape, value 1 at the center.
inline double bump(int n, double w, double x, int r = 0) {
  return bspline(n, w, x, r) / bspline(n, w, 0.0);
}

// Step rising from 0 at x = a to 1 at x = a + eps.
inline double step(int n, double a, double eps, double x) {
  return cardinal_step(n, n * (x - a) / eps);
}

// Derivative of order r >= 1 of step().
inline double step_derivative(int n, double a, double eps, double x, int r) {
  double scale = n / eps;
  return std::pow(scale, r) * cardinal_bspline(n, scale * (x - a), r - 1);
}

// Equal to 1 on [a, b], 0 outside [a - eps, b + eps], smooth in between.
inline double plateau(int n, double a, double b, double eps, double x) {
  return step(n, a - eps, eps, x) * step(n, -(b + eps), eps, -x);
}

inline constexpr int kOrder = 8;

// Fourier transform of the centered order-n B-spline of width w:
// sinc(w xi / n)^n with sinc(t) = sin(pi t)/(pi t).
inline double bspline_hat(int n, double w, double xi) {
  double t = w * xi / n;
  if (std::abs(t) < 1e-12) return 1.0;
  double s = std::sin(M_PI * t) / (M_PI * t);
  return std::pow(s, n);
}

}  // namespace stf::profile
