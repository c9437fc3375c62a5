#pragma once

// Periodic grid model: samples on a torus of length L with N points, the
// lattice DFT, L^p / W_p norms and a dyadic Hardy-Littlewood maximal function.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "fft.hpp"

namespace stf {

inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline cplx expi(double t) { return {std::cos(t), std::sin(t)}; }

// e^{2 pi i t} with the argument reduced first, so large t keeps full precision.
inline cplx cis(double t) {
  double r = t - std::round(t);
  return expi(two_pi * r);
}

struct GridSpec {
  std::size_t num_points = 0;
  double period = 1.0;

  GridSpec() = default;
  GridSpec(std::size_t n, double l) : num_points(n), period(l) { validate(); }

  void validate() const {
    if (!is_pow2(num_points))
      throw std::invalid_argument("GridSpec: num_points must be a power of two");
    if (!(period > 0.0) || !std::isfinite(period))
      throw std::invalid_argument("GridSpec: period must be positive");
  }

  double dx() const { return period / static_cast<double>(num_points); }
  double dxi() const { return 1.0 / period; }
  long kmin() const { return -static_cast<long>(num_points / 2); }
  long kmax() const { return static_cast<long>(num_points / 2) - 1; }
  double x(std::size_t j) const { return static_cast<double>(j) * dx(); }
  double xi(long k) const { return static_cast<double>(k) * dxi(); }

  bool operator==(const GridSpec& o) const {
    return num_points == o.num_points && period == o.period;
  }
};

inline void require_same(const GridSpec& a, const GridSpec& b, const char* where) {
  if (!(a == b)) throw std::invalid_argument(std::string(where) + ": grid spec mismatch");
}

struct GridFunction {
  GridSpec spec;
  std::vector<cplx> samples;

  GridFunction() = default;
  explicit GridFunction(const GridSpec& s) : spec(s), samples(s.num_points, cplx(0.0)) {}
  GridFunction(const GridSpec& s, std::vector<cplx> v) : spec(s), samples(std::move(v)) {
    if (samples.size() != spec.num_points)
      throw std::invalid_argument("GridFunction: sample count mismatch");
  }

  std::size_t size() const { return samples.size(); }
  cplx& operator[](std::size_t j) { return samples[j]; }
  const cplx& operator[](std::size_t j) const { return samples[j]; }

  template <class F>
  static GridFunction sample(const GridSpec& s, F&& fn) {
    GridFunction g(s);
    for (std::size_t j = 0; j < s.num_points; ++j) g.samples[j] = fn(s.x(j));
    return g;
  }
};

// Coefficients indexed by k in [-N/2, N/2); storage index i = k + N/2.
struct SpectralFunction {
  GridSpec spec;
  std::vector<cplx> coeffs;

  SpectralFunction() = default;
  explicit SpectralFunction(const GridSpec& s) : spec(s), coeffs(s.num_points, cplx(0.0)) {}

  std::size_t offset() const { return spec.num_points / 2; }
  cplx at(long k) const {
    if (k < spec.kmin() || k > spec.kmax()) return cplx(0.0);
    return coeffs[static_cast<std::size_t>(k + static_cast<long>(offset()))];
  }
  cplx& ref(long k) { return coeffs[static_cast<std::size_t>(k + static_cast<long>(offset()))]; }

  template <class F>
  static SpectralFunction sample(const GridSpec& s, F&& fn) {
    SpectralFunction S(s);
    for (long k = s.kmin(); k <= s.kmax(); ++k) S.ref(k) = fn(s.xi(k));
    return S;
  }
};

// F(k) = dx * sum_j f_j e^{-2 pi i k j / N}.
inline SpectralFunction dft(const GridFunction& f) {
  const auto& s = f.spec;
  std::size_t n = s.num_points;
  std::vector<cplx> a = f.samples;
  fft_forward(a);
  SpectralFunction out(s);
  double dx = s.dx();
  std::size_t h = n / 2;
  for (std::size_t i = 0; i < n; ++i) out.coeffs[i] = dx * a[(i + h) % n];
  return out;
}

// f_j = dxi * sum_k F(k) e^{2 pi i k j / N}.
inline GridFunction idft(const SpectralFunction& F) {
  const auto& s = F.spec;
  std::size_t n = s.num_points;
  std::size_t h = n / 2;
  std::vector<cplx> a(n);
  for (std::size_t i = 0; i < n; ++i) a[(i + h) % n] = F.coeffs[i];
  fft_backward(a);
  double dxi = s.dxi();
  for (auto& v : a) v *= dxi;
  return GridFunction(s, std::move(a));
}

// Same function on a grid refined by `factor` (spectrum zero-padded).
inline SpectralFunction pad_spectrum(const SpectralFunction& F, std::size_t factor) {
  if (!is_pow2(factor)) throw std::invalid_argument("pad_spectrum: factor must be a power of two");
  GridSpec big(F.spec.num_points * factor, F.spec.period);
  SpectralFunction out(big);
  for (long k = F.spec.kmin(); k <= F.spec.kmax(); ++k) out.ref(k) = F.at(k);
  return out;
}

inline SpectralFunction truncate_spectrum(const SpectralFunction& F, const GridSpec& small) {
  if (small.period != F.spec.period || small.num_points > F.spec.num_points)
    throw std::invalid_argument("truncate_spectrum: incompatible spec");
  SpectralFunction out(small);
  for (long k = small.kmin(); k <= small.kmax(); ++k) out.ref(k) = F.at(k);
  return out;
}

inline double conjugate_exponent(double p) {
  if (p == 1.0) return inf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

inline double weighted_lp(const std::vector<cplx>& v, double p, double w) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp norm: p must be >= 1");
  if (std::isinf(p)) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
  }
  double s = 0.0;
  if (p == 2.0) {
    for (const auto& z : v) s += std::norm(z);
    return std::sqrt(s * w);
  }
  for (const auto& z : v) s += std::pow(std::abs(z), p);
  return std::pow(s * w, 1.0 / p);
}

inline double lp_norm(const GridFunction& f, double p) {
  return weighted_lp(f.samples, p, f.spec.dx());
}

// Integral of |f|^p, usable for 0 < p < 1 where lp_norm refuses.
inline double lp_integral(const GridFunction& f, double p) {
  if (!(p > 0.0) || std::isinf(p)) throw std::invalid_argument("lp_integral: p in (0, inf)");
  double s = 0.0;
  for (const auto& z : f.samples) s += std::pow(std::abs(z), p);
  return s * f.spec.dx();
}

// ||f||_{W_p} = ||F||_{l^{p'}} with the frequency step as weight.
inline double wp_norm(const SpectralFunction& F, double p) {
  return weighted_lp(F.coeffs, conjugate_exponent(p), F.spec.dxi());
}
inline double wp_norm(const GridFunction& f, double p) { return wp_norm(dft(f), p); }

enum class NormType { L, W };

struct ExponentTuple {
  std::vector<double> p;
  std::vector<NormType> flags;

  ExponentTuple() = default;
  ExponentTuple(std::vector<double> ps, std::vector<NormType> fl) : p(std::move(ps)), flags(std::move(fl)) {
    if (flags.empty()) flags.assign(p.size(), NormType::L);
    validate();
  }

  void validate() const {
    if (p.size() != flags.size()) throw std::invalid_argument("ExponentTuple: flag count mismatch");
    for (double v : p)
      if (!(v > 1.0)) throw std::invalid_argument("ExponentTuple: p must lie in (1, inf]");
  }

  double conj(std::size_t i) const { return conjugate_exponent(p[i]); }

  double holder_target() const {
    double s = 0.0;
    for (double v : p) s += std::isinf(v) ? 0.0 : 1.0 / v;
    return s == 0.0 ? inf : 1.0 / s;
  }

  double norm_of(std::size_t i, const GridFunction& f) const {
    return flags[i] == NormType::W ? wp_norm(f, p[i]) : lp_norm(f, p[i]);
  }
};

// Quasi-norm (sum |f|^r dx)^{1/r}, valid for every r > 0.
inline double lr_quasi_norm(const GridFunction& f, double r) {
  if (std::isinf(r)) return lp_norm(f, inf);
  return std::pow(lp_integral(f, r), 1.0 / r);
}

inline GridFunction translate(const GridFunction& f, long h) {
  GridFunction g(f.spec);
  long n = static_cast<long>(f.size());
  for (long j = 0; j < n; ++j) g.samples[static_cast<std::size_t>(((j + h) % n + n) % n)] = f.samples[static_cast<std::size_t>(j)];
  return g;
}

// f(x) e^{2 pi i k x / L}.
inline GridFunction modulate(const GridFunction& f, long k) {
  GridFunction g(f.spec);
  long n = static_cast<long>(f.size());
  for (long j = 0; j < n; ++j) {
    long r = ((k * j) % n + n) % n;
    g.samples[static_cast<std::size_t>(j)] =
        f.samples[static_cast<std::size_t>(j)] * expi(two_pi * static_cast<double>(r) / static_cast<double>(n));
  }
  return g;
}

inline GridFunction pointwise(const GridFunction& a, const GridFunction& b) {
  require_same(a.spec, b.spec, "pointwise");
  GridFunction g(a.spec);
  for (std::size_t j = 0; j < a.size(); ++j) g.samples[j] = a.samples[j] * b.samples[j];
  return g;
}

inline GridFunction abs_of(const GridFunction& a) {
  GridFunction g(a.spec);
  for (std::size_t j = 0; j < a.size(); ++j) g.samples[j] = std::abs(a.samples[j]);
  return g;
}

inline double max_abs_diff(const GridFunction& a, const GridFunction& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a.samples[j] - b.samples[j]));
  return m;
}

// Supremum of window averages of |f| over dyadic windows and their
// threefold dilates; periodic wrap, windows capped at the whole torus.
inline GridFunction hl_maximal(const GridFunction& f) {
  std::size_t n = f.size();
  std::vector<double> a(n), pre(2 * n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) a[j] = std::abs(f.samples[j]);
  for (std::size_t j = 0; j < 2 * n; ++j) pre[j + 1] = pre[j] + a[j % n];
  double total = pre[n];
  std::vector<double> m(n, 0.0);
  auto window_sum = [&](long start, std::size_t len) {
    std::size_t s = static_cast<std::size_t>(((start % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n));
    return pre[s + len] - pre[s];
  };
  for (std::size_t len = 1; len <= n; len <<= 1) {
    for (std::size_t b = 0; b < n; b += len) {
      double avg = window_sum(static_cast<long>(b), len) / static_cast<double>(len);
      for (std::size_t j = b; j < b + len; ++j) m[j] = std::max(m[j], avg);
      if (3 * len >= n) {
        double all = total / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) m[j] = std::max(m[j], all);
      } else {
        long s = static_cast<long>(b) - static_cast<long>(len);
        double avg3 = window_sum(s, 3 * len) / static_cast<double>(3 * len);
        for (std::size_t t = 0; t < 3 * len; ++t) {
          std::size_t j = static_cast<std::size_t>(((s + static_cast<long>(t)) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n));
          m[j] = std::max(m[j], avg3);
        }
      }
    }
  }
  GridFunction out(f.spec);
  for (std::size_t j = 0; j < n; ++j) out.samples[j] = m[j];
  return out;
}

// Full maximal function over every periodic window; O(N^2), test oracle.
inline std::vector<double> hl_maximal_all_windows(const GridFunction& f) {
  std::size_t n = f.size();
  std::vector<double> a(n), m(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) a[j] = std::abs(f.samples[j]);
  for (std::size_t s = 0; s < n; ++s) {
    double sum = 0.0;
    for (std::size_t len = 1; len <= n; ++len) {
      sum += a[(s + len - 1) % n];
      double avg = sum / static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) m[(s + t) % n] = std::max(m[(s + t) % n], avg);
    }
  }
  return m;
}

inline GridFunction indicator(const GridSpec& s, const std::vector<bool>& mask) {
  GridFunction g(s);
  for (std::size_t j = 0; j < s.num_points; ++j) g.samples[j] = mask[j] ? 1.0 : 0.0;
  return g;
}

inline double measure(const GridSpec& s, const std::vector<bool>& mask) {
  return static_cast<double>(std::count(mask.begin(), mask.end(), true)) * s.dx();
}

}  // namespace stf
