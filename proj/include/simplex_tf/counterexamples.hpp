#pragma once

// The two blow-up constructions: the bilinear multiplier built from modulated
// product bumps on squares near xi1 + xi2 = 0 with its wave-train inputs, and
// the lacunary bilinear family driven by dyadic carriers 2^n.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "grid.hpp"
#include "profiles.hpp"
#include "symbols.hpp"

namespace stf {

// ---------------------------------------------------------------- first construction

struct Sec2Params {
  double gamma_shift = 12.5;
  int k_min = 5;
  int k_max = 8;
  long m_lo = 0, m_hi = -1;  // empty range means every m inside the lattice box

  json to_json() const {
    return {{"gamma_shift", gamma_shift}, {"k_min", k_min}, {"k_max", k_max}, {"m_lo", m_lo}, {"m_hi", m_hi}};
  }
  long lambda_bound(int k) const { return 1L << (k - k_min); }  // |lambda| < bound
  long lambda_count(int k) const { return 2 * lambda_bound(k) - 1; }
};

// Frequency-side bump Phi: order-8 B-spline on [-1/2, 1/2], unit integral;
// its transform sinc(x/8)^8 is real, even and positive at 0.
inline double sec2_phi(double y) { return profile::bspline(profile::kOrder, 1.0, y); }
inline double sec2_phi_hat(double x) { return profile::bspline_hat(profile::kOrder, 1.0, x); }

// Plateau psi-hat: 1 on [-1/2 + eps, 1/2 - eps], 0 off [-1/2, 1/2].
inline constexpr double kSec2Eps = 0.01;
inline double sec2_psi_hat(double xi) {
  return profile::plateau(profile::kOrder, -0.5 + kSec2Eps, 0.5 - kSec2Eps, kSec2Eps, xi);
}

inline void sec2_validate(const Sec2Params& p, const GridSpec& spec) {
  if (p.k_max < p.k_min) return;
  if (spec.period * std::ldexp(1.0, -p.k_max) < 4.0)
    throw std::invalid_argument("counterexample_symbol_sec2: lattice too coarse for scale 2^-k_max");
}

// m = sum_{k, m, lambda} Phi(2^k(xi1 - c1)) Phi(2^k(xi2 - c2)) e^{2 pi i Gamma 2^-k m},
// c1 = m + lambda 2^-k, c2 = -c1 + Gamma 2^-k.
inline Symbol2 counterexample_symbol_sec2(const Sec2Params& prm, const GridSpec& spec) {
  sec2_validate(prm, spec);
  Sec2Params p = prm;
  double box = spec.xi(spec.kmax());
  if (p.m_hi < p.m_lo) {
    p.m_lo = -static_cast<long>(std::floor(box));
    p.m_hi = static_cast<long>(std::floor(box));
  }
  struct Index {
    int k;
    long m, lambda;
  };
  auto idx = std::make_shared<std::vector<Index>>();
  for (int k = p.k_min; k <= p.k_max; ++k)
    for (long m = p.m_lo; m <= p.m_hi; ++m)
      for (long l = -p.lambda_bound(k) + 1; l < p.lambda_bound(k); ++l) idx->push_back({k, m, l});

  auto band = [spec](double center, double half_width, double scale, cplx phase) {
    LatticeBand b;
    long lo = static_cast<long>(std::ceil((center - half_width) * spec.period));
    long hi = static_cast<long>(std::floor((center + half_width) * spec.period));
    lo = std::max(lo, spec.kmin());
    hi = std::min(hi, spec.kmax());
    b.start = lo;
    for (long k = lo; k <= hi; ++k) b.values.push_back(phase * sec2_phi(scale * (spec.xi(k) - center)));
    return b;
  };
  auto fac = std::make_shared<FactoredSymbol2>();
  fac->count = idx->size();
  fac->term = [idx, p, band](std::size_t i) {
    auto [k, m, l] = (*idx)[i];
    double s = std::ldexp(1.0, -k);
    double c1 = double(m) + double(l) * s;
    double c2 = -c1 + p.gamma_shift * s;
    ProductTerm t;
    t.first = band(c1, 0.5 * s, 1.0 / s, 1.0);
    t.second = band(c2, 0.5 * s, 1.0 / s, cis(p.gamma_shift * s * double(m)));
    return t;
  };
  auto fn = [p](double a, double b) -> cplx {
    cplx acc = 0.0;
    for (int k = p.k_min; k <= p.k_max; ++k) {
      double s = std::ldexp(1.0, -k);
      long j0 = std::lround(a / s);
      for (long j = j0 - 1; j <= j0 + 1; ++j) {
        double c1 = double(j) * s;
        if (std::abs(a - c1) >= 0.5 * s) continue;
        long m = std::lround(c1);
        long l = j - m * (1L << k);
        if (std::labs(l) >= p.lambda_bound(k) || m < p.m_lo || m > p.m_hi) continue;
        double c2 = -c1 + p.gamma_shift * s;
        if (std::abs(b - c2) >= 0.5 * s) continue;
        acc += sec2_phi((a - c1) / s) * sec2_phi((b - c2) / s) * cis(p.gamma_shift * s * double(m));
      }
    }
    return acc;
  };
  Symbol2 sym;
  sym.spec = spec;
  sym.fn = fn;
  sym.factored = fac;
  sym.descriptor = {{"constructor", "counterexample_sec2"}, {"params", p.to_json()}};
  return sym;
}

// Lattice points inside the supports, for a certificate that actually sees the bumps.
inline std::vector<std::pair<long, long>> sec2_support_points(const Sec2Params& p, const GridSpec& spec,
                                                              std::size_t per_scale, std::uint64_t seed) {
  std::vector<std::pair<long, long>> pts;
  Rng rng(seed);
  double box = spec.xi(spec.kmax()) - 1.0;
  for (int k = p.k_min; k <= p.k_max; ++k) {
    double s = std::ldexp(1.0, -k);
    for (std::size_t i = 0; i < per_scale; ++i) {
      long m = rng.integer(std::max(p.m_lo, long(-box)), std::min(p.m_hi, long(box)));
      long l = rng.integer(-p.lambda_bound(k) + 1, p.lambda_bound(k) - 1);
      double c1 = double(m) + double(l) * s, c2 = -c1 + p.gamma_shift * s;
      double a = c1 + rng.uniform(-0.5, 0.5) * s, b = c2 + rng.uniform(-0.5, 0.5) * s;
      pts.emplace_back(std::lround(a * spec.period), std::lround(b * spec.period));
    }
  }
  return pts;
}

// f1 = sum_n psi(x - n) e^{2 pi i n x}, f2 = sum_n psi(x - n) e^{-2 pi i n x},
// built from their exact spectra.
inline std::pair<GridFunction, GridFunction> counterexample_pair_sec2(long n_wave, const GridSpec& spec) {
  if (n_wave < 1) throw std::invalid_argument("counterexample_pair_sec2: N_wave >= 1");
  if (spec.period < double(n_wave) + 2.0)
    throw std::invalid_argument("counterexample_pair_sec2: torus too short for the bump train");
  if (spec.period * kSec2Eps < 4.0)
    throw std::invalid_argument("counterexample_pair_sec2: insufficient resolution for the psi-hat plateau");
  if (spec.xi(spec.kmax()) < double(n_wave) + 0.5)
    throw std::invalid_argument("counterexample_pair_sec2: frequency box too small");
  SpectralFunction F1(spec), F2(spec);
  for (long n = 1; n <= n_wave; ++n) {
    long lo = static_cast<long>(std::ceil((double(n) - 0.5) * spec.period));
    long hi = static_cast<long>(std::floor((double(n) + 0.5) * spec.period));
    for (long k = lo; k <= hi; ++k) {
      double xi = spec.xi(k);
      double v = sec2_psi_hat(xi - double(n));
      if (v == 0.0) continue;
      F1.ref(k) += v * cis(-xi * double(n));
      F2.ref(-k) += v * cis(xi * double(n));  // frequency -xi, phase e^{-2 pi i (-xi) n}
    }
  }
  return {idft(F1), idft(F2)};
}

// Continuum profile psi (inverse transform of the plateau) by quadrature.
inline double sec2_psi(double x) {
  double a = -0.5, b = 0.5;
  const int n = 4000;
  double h = (b - a) / n, s = 0.0;
  for (int i = 0; i <= n; ++i) {
    double xi = a + i * h;
    double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * sec2_psi_hat(xi) * std::cos(two_pi * xi * x);
  }
  return s * h;
}

// ---------------------------------------------------------------- lacunary family

struct Sec8Family {
  int k0_lo = 5, k0_hi = 8;
  double chi_scale = 1.0;  // c in chi = c * B8, fixed so chi-check >= 1 on [-1, 1]

  Sec8Family() = default;
  Sec8Family(int lo, int hi) : k0_lo(lo), k0_hi(hi) {
    chi_scale = 1.0 / profile::bspline_hat(profile::kOrder, 1.0, 1.0);
  }

  bool empty() const { return k0_hi < k0_lo; }

  // 1 on [7/8, 9/8], 0 off [3/4, 3/2].
  static double one_tilde(double xi) {
    return profile::step(profile::kOrder, 0.75, 0.125, xi) * (1.0 - profile::step(profile::kOrder, 1.125, 0.375, xi));
  }
  // L^inf-normalized eta-hat^k(xi) = one_tilde(2^-k xi).
  static double eta_hat(int k, double xi) { return k < 0 ? 0.0 : one_tilde(std::ldexp(xi, -k)); }

  double chi(double z) const { return chi_scale * profile::bspline(profile::kOrder, 1.0, z); }
  double chi_check(double x) const { return chi_scale * profile::bspline_hat(profile::kOrder, 1.0, x); }

  // eta-hat^{-k0}_k(xi) = e^{2 pi i 2^-k0 k} chi(2^k0 (xi - 2^-k0)).
  cplx filter_hat(int k0, long k, double xi) const {
    double s = std::ldexp(1.0, -k0);
    return cis(s * double(k)) * chi((xi - s) / s);
  }

  // Skinny peak (unit mass on the lattice) and wide plateau.
  static double phi1_hat_raw(double xi) { return profile::bspline(profile::kOrder, 1.0 / 16.0, xi); }
  static double phi2_hat(double xi) {
    return profile::plateau(profile::kOrder, -3.0 / 32.0, 3.0 / 32.0, 1.0 / 32.0, xi);
  }

  json to_json() const { return {{"constructor", "counterexample_sec8"}, {"k0_lo", k0_lo}, {"k0_hi", k0_hi}}; }
};

inline Sec8Family counterexample_family_sec8(int k0_lo, int k0_hi, const GridSpec& baseband) {
  Sec8Family fam(k0_lo, k0_hi);
  if (!fam.empty() && baseband.period * std::ldexp(1.0, -k0_hi) < 4.0)
    throw std::invalid_argument("counterexample_family_sec8: lattice does not resolve 2^-k0");
  if (!fam.empty() && k0_lo < 5)
    throw std::invalid_argument("counterexample_family_sec8: k0 >= 5 keeps the filter inside the flat band");
  return fam;
}

// Test pair in banded form: f = sum_n e^{2 pi i s 2^n x} g_n(x), with
// s = +1, g_n = phi1(. - n) for f1 and s = -1, g_n = phi2(. - n) for f2.
struct Sec8Pair {
  long n_wave = 0;
  GridSpec baseband;
  SpectralFunction phi1_hat, phi2_hat;  // lattice spectra of the unshifted envelopes
  GridFunction phi1, phi2;

  GridFunction envelope(int which, long n) const {
    return translate(which == 1 ? phi1 : phi2, std::lround(double(n) / baseband.dx()));
  }
};

inline Sec8Pair counterexample_pair_sec8(long n_wave, const GridSpec& baseband) {
  if (baseband.dx() > 0.5) throw std::invalid_argument("counterexample_pair_sec8: baseband step must be <= 1/2");
  if (baseband.period < double(n_wave) + 64.0)
    throw std::invalid_argument("counterexample_pair_sec8: torus too short");
  Sec8Pair p;
  p.n_wave = n_wave;
  p.baseband = baseband;
  p.phi1_hat = SpectralFunction::sample(baseband, [](double xi) { return cplx(Sec8Family::phi1_hat_raw(xi)); });
  double mass = 0.0;
  for (auto& c : p.phi1_hat.coeffs) mass += c.real() * baseband.dxi();
  for (auto& c : p.phi1_hat.coeffs) c /= mass;
  p.phi2_hat = SpectralFunction::sample(baseband, [](double xi) { return cplx(Sec8Family::phi2_hat(xi)); });
  p.phi1 = idft(p.phi1_hat);
  p.phi2 = idft(p.phi2_hat);
  return p;
}

// Exact L^2 and L^4 norms of sum_n e^{2 pi i s 2^n x} g_n through the
// lacunary identities ||f||_2^2 = sum ||g_n||^2 and
// ||f||_4^4 = int 2 (sum |g_n|^2)^2 - sum |g_n|^4 (carrier sums never cancel).
inline double sec8_banded_norm(const Sec8Pair& pair, int which, double p) {
  const auto& s = pair.baseband;
  std::vector<double> sq(s.num_points, 0.0), quart(s.num_points, 0.0);
  for (long n = 1; n <= pair.n_wave; ++n) {
    auto g = pair.envelope(which, n);
    for (std::size_t j = 0; j < s.num_points; ++j) {
      double a = std::norm(g[j]);
      sq[j] += a;
      quart[j] += a * a;
    }
  }
  double dx = s.dx();
  if (p == 2.0) {
    double t = 0.0;
    for (double v : sq) t += v * dx;
    return std::sqrt(t);
  }
  if (p == 4.0) {
    double t = 0.0;
    for (std::size_t j = 0; j < s.num_points; ++j) t += (2.0 * sq[j] * sq[j] - quart[j]) * dx;
    return std::pow(t, 0.25);
  }
  throw std::invalid_argument("sec8_banded_norm: exact identity available for p in {2, 4}");
}

// Output of the k0 block on the test pair: the selected band products
// phi1(x-n) phi2(x-n) filtered by eta^{-k0}_n, summed over n. Baseband result.
inline GridFunction sec8_block(const Sec8Family& fam, const Sec8Pair& pair, int k0) {
  const auto& s = pair.baseband;
  auto prod = dft(pointwise(pair.phi1, pair.phi2));
  SpectralFunction out(s);
  double sh = std::ldexp(1.0, -k0);
  for (long k = s.kmin(); k <= s.kmax(); ++k) {
    double xi = s.xi(k);
    double c = fam.chi((xi - sh) / sh);
    if (c == 0.0) continue;
    cplx sum = 0.0;
    for (long n = 1; n <= pair.n_wave; ++n) sum += cis((sh - xi) * double(n));
    out.ref(k) = c * prod.at(k) * sum;
  }
  return idft(out);
}

inline GridFunction sec8_operator(const Sec8Family& fam, const Sec8Pair& pair, std::vector<GridFunction>* blocks = nullptr) {
  GridFunction total(pair.baseband);
  if (fam.empty()) return total;
  for (int k0 = fam.k0_lo; k0 <= fam.k0_hi; ++k0) {
    auto b = sec8_block(fam, pair, k0);
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += b[j];
    if (blocks) blocks->push_back(std::move(b));
  }
  return total;
}

// Direct evaluation on a lattice fine enough to carry the carriers: builds
// f1, f2, applies every eta^k and eta^{-k0}_k literally. Small N only.
struct Sec8Direct {
  GridFunction f1, f2, output;
};

inline Sec8Direct sec8_direct(const Sec8Family& fam, const Sec8Pair& pair, const GridSpec& fine) {
  if (fine.period != pair.baseband.period) throw std::invalid_argument("sec8_direct: period mismatch");
  double top = std::ldexp(1.0, static_cast<int>(pair.n_wave)) * 1.5 + 1.0;
  if (fine.xi(fine.kmax()) < top) throw std::invalid_argument("sec8_direct: fine lattice cannot carry 2^N");
  SpectralFunction F1(fine), F2(fine);
  long half = static_cast<long>(pair.baseband.num_points / 2) - 1;
  for (long n = 1; n <= pair.n_wave; ++n) {
    long carrier = std::lround(std::ldexp(1.0, static_cast<int>(n)) * fine.period);
    for (long k = -half; k <= half; ++k) {
      double xi = fine.xi(k);
      cplx ph = cis(-xi * double(n));
      cplx a = pair.phi1_hat.at(k), b = pair.phi2_hat.at(k);
      if (a != cplx(0.0)) F1.ref(carrier + k) += a * ph;
      if (b != cplx(0.0)) F2.ref(-carrier + k) += b * ph;
    }
  }
  Sec8Direct d;
  d.f1 = idft(F1);
  d.f2 = idft(F2);
  SpectralFunction acc(fine);
  for (long kk = 0; kk <= pair.n_wave + 1; ++kk) {
    SpectralFunction A(fine), B(fine);
    for (long k = fine.kmin(); k <= fine.kmax(); ++k) {
      double xi = fine.xi(k);
      A.ref(k) = F1.at(k) * Sec8Family::eta_hat(int(kk), xi);
      B.ref(k) = F2.at(k) * Sec8Family::eta_hat(int(kk), -xi);
    }
    auto prod = dft(pointwise(idft(A), idft(B)));
    for (int k0 = fam.k0_lo; k0 <= fam.k0_hi; ++k0)
      for (long k = fine.kmin(); k <= fine.kmax(); ++k) {
        double xi = fine.xi(k);
        cplx f = fam.filter_hat(k0, kk, xi);
        if (f != cplx(0.0)) acc.ref(k) += f * prod.at(k);
      }
  }
  d.output = idft(acc);
  return d;
}

}  // namespace stf
