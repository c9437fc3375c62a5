#pragma once

// Bilinear and trilinear multiplier operators on the periodic lattice, the
// maximal Bi-Carleson sweep, and dual forms. Every operator has a brute-force
// lattice-sum oracle; factored and sum-type symbols also get fast paths.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "grid.hpp"
#include "symbols.hpp"

namespace stf {

enum class Path { oracle, fft_fast, automatic };

inline const char* path_name(Path p) {
  switch (p) {
    case Path::oracle: return "oracle";
    case Path::fft_fast: return "fft_fast";
    default: return "automatic";
  }
}

struct OperatorOptions {
  Path path = Path::automatic;
  std::size_t padding = 4;        // output grid has num_points * padding samples
  std::size_t output_points = 0;  // nonzero: coarser output grid, spectrum must fit
  unsigned threads = 1;
};

struct OperatorResult {
  GridFunction output;
  Path path_used = Path::oracle;
  std::uint64_t flop_estimate = 0;
  double dropped = 0.0;  // largest output coefficient that fell outside a custom output grid
};

namespace detail {

// Splits [0, n) into `threads` contiguous chunks; each index is owned by one
// thread, so results do not depend on the schedule.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Output spectrum over a dense index range, folded onto the output grid at the end.
struct SpectrumAccumulator {
  long lo = 0;
  std::vector<cplx> v;

  SpectrumAccumulator(long l, long h) : lo(l), v(static_cast<std::size_t>(h - l + 1), cplx(0.0)) {}
  void add(long k, cplx c) { v[static_cast<std::size_t>(k - lo)] += c; }
  void add_run(long start, const std::vector<cplx>& run, double scale) {
    for (std::size_t i = 0; i < run.size(); ++i) v[static_cast<std::size_t>(start - lo) + i] += scale * run[i];
  }
};

inline GridSpec output_spec(const GridSpec& in, const OperatorOptions& opt) {
  if (opt.output_points) return GridSpec(opt.output_points, in.period);
  if (!is_pow2(opt.padding)) throw std::invalid_argument("padding must be a power of two");
  return GridSpec(in.num_points * opt.padding, in.period);
}

// Padded grids wrap modulo their size (torus aliasing); a custom output grid
// keeps its window and reports the largest coefficient it had to drop.
inline OperatorResult finish(const SpectrumAccumulator& acc, const GridSpec& out, bool custom) {
  OperatorResult r;
  SpectralFunction S(out);
  long M = static_cast<long>(out.num_points);
  for (std::size_t i = 0; i < acc.v.size(); ++i) {
    cplx c = acc.v[i];
    if (c == cplx(0.0)) continue;
    long k = acc.lo + static_cast<long>(i);
    if (custom) {
      if (k < out.kmin() || k > out.kmax()) {
        r.dropped = std::max(r.dropped, std::abs(c));
        continue;
      }
    } else {
      k = ((k - out.kmin()) % M + M) % M + out.kmin();
    }
    S.ref(k) += c;
  }
  r.output = idft(S);
  return r;
}

inline std::vector<cplx> band_times(const LatticeBand& b, const SpectralFunction& F) {
  std::vector<cplx> v(b.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = b.values[i] * F.at(b.start + static_cast<long>(i));
  return v;
}

inline std::vector<cplx> spectrum_on(const GridFunction& f, const GridSpec& big) {
  auto F = dft(f);
  SpectralFunction P(big);
  for (long k = f.spec.kmin(); k <= f.spec.kmax(); ++k) P.ref(k) = F.at(k);
  return P.coeffs;
}

}  // namespace detail

// ---------------------------------------------------------------- bilinear

inline OperatorResult apply_bilinear(const Symbol2& m, const GridFunction& f1, const GridFunction& f2,
                                     const OperatorOptions& opt = {}) {
  require_same(f1.spec, f2.spec, "apply_bilinear");
  require_same(m.spec, f1.spec, "apply_bilinear");
  const auto& s = f1.spec;
  Path path = opt.path;
  bool fast_ok = m.factored || m.sum_profile;
  if (path == Path::fft_fast && !fast_ok)
    throw std::invalid_argument("apply_bilinear: fft path requested for non-factorable symbol");
  if (path == Path::automatic) path = fast_ok ? Path::fft_fast : Path::oracle;

  GridSpec out = detail::output_spec(s, opt);
  bool custom = opt.output_points != 0;
  double dxi = s.dxi();
  auto F1 = dft(f1), F2 = dft(f2);
  detail::SpectrumAccumulator acc(2 * s.kmin(), 2 * s.kmax());
  std::uint64_t flops = 0;

  if (path == Path::oracle) {
    std::size_t n = s.num_points;
    long lo = 2 * s.kmin();
    // one output frequency per task, fixed inner order
    detail::parallel_for(acc.v.size(), opt.threads, [&](std::size_t i) {
      long eta = lo + static_cast<long>(i);
      cplx sum = 0.0;
      long k1lo = std::max(s.kmin(), eta - s.kmax()), k1hi = std::min(s.kmax(), eta - s.kmin());
      for (long k1 = k1lo; k1 <= k1hi; ++k1) {
        long k2 = eta - k1;
        cplx a = F1.at(k1), b = F2.at(k2);
        if (a == cplx(0.0) || b == cplx(0.0)) continue;
        sum += m.at(k1, k2) * a * b;
      }
      acc.v[i] = dxi * sum;
    });
    flops = static_cast<std::uint64_t>(n) * n * 8;
  } else if (m.factored) {
    const auto& fac = *m.factored;
    for (std::size_t i = 0; i < fac.count; ++i) {
      auto t = fac.term(i);
      if (t.first.empty() || t.second.empty()) continue;
      auto a = detail::band_times(t.first, F1), b = detail::band_times(t.second, F2);
      acc.add_run(t.first.start + t.second.start, linear_convolve(a, b), dxi);
      flops += static_cast<std::uint64_t>(a.size() + b.size()) * 40;
    }
  } else {
    // m = s(xi1 + xi2): multiply the spectrum of the product
    GridSpec big(s.num_points * 2, s.period);
    SpectralFunction A(big), B(big);
    A.coeffs = detail::spectrum_on(f1, big);
    B.coeffs = detail::spectrum_on(f2, big);
    auto prod = dft(pointwise(idft(A), idft(B)));
    for (long k = acc.lo; k < acc.lo + static_cast<long>(acc.v.size()); ++k)
      acc.add(k, m.sum_profile(s.xi(k)) * prod.at(k));
    flops = static_cast<std::uint64_t>(big.num_points) * 3 * 5 * static_cast<std::uint64_t>(std::log2(double(big.num_points)));
  }
  auto r = detail::finish(acc, out, custom);
  r.path_used = path;
  r.flop_estimate = flops;
  return r;
}

// ---------------------------------------------------------------- trilinear

inline constexpr std::size_t kTrilinearOracleMax = 128;

inline OperatorResult apply_trilinear(const Symbol3& m, const GridFunction& f1, const GridFunction& f2,
                                      const GridFunction& f3, const OperatorOptions& opt = {}) {
  require_same(f1.spec, f2.spec, "apply_trilinear");
  require_same(f1.spec, f3.spec, "apply_trilinear");
  require_same(m.spec, f1.spec, "apply_trilinear");
  const auto& s = f1.spec;
  bool sum_pair = m.a1 && m.a2 && m.a1->sum_profile && m.a2->sum_profile;
  bool fac_pair = m.a1 && m.a2 && m.a1->factored && m.a2->factored;
  Path path = opt.path;
  if (path == Path::fft_fast && !sum_pair && !fac_pair)
    throw std::invalid_argument("apply_trilinear: fft path requested for non-factorable symbol");
  if (path == Path::automatic) path = (sum_pair || fac_pair) ? Path::fft_fast : Path::oracle;
  if (path == Path::oracle && s.num_points > kTrilinearOracleMax)
    throw std::invalid_argument("apply_trilinear: N too large for the oracle");

  GridSpec out = detail::output_spec(s, opt);
  bool custom = opt.output_points != 0;
  double dxi = s.dxi();
  auto F1 = dft(f1), F2 = dft(f2), F3 = dft(f3);
  detail::SpectrumAccumulator acc(3 * s.kmin(), 3 * s.kmax());
  std::uint64_t flops = 0;
  OperatorResult r;

  if (path == Path::oracle) {
    long lo = 3 * s.kmin();
    detail::parallel_for(acc.v.size(), opt.threads, [&](std::size_t i) {
      long eta = lo + static_cast<long>(i);
      cplx sum = 0.0;
      for (long k1 = s.kmin(); k1 <= s.kmax(); ++k1) {
        cplx a = F1.at(k1);
        if (a == cplx(0.0)) continue;
        long rest = eta - k1;
        long k2lo = std::max(s.kmin(), rest - s.kmax()), k2hi = std::min(s.kmax(), rest - s.kmin());
        for (long k2 = k2lo; k2 <= k2hi; ++k2) {
          long k3 = rest - k2;
          cplx b = F2.at(k2), c = F3.at(k3);
          if (b == cplx(0.0) || c == cplx(0.0)) continue;
          sum += m.at(k1, k2, k3) * a * b * c;
        }
      }
      acc.v[i] = dxi * dxi * sum;
    });
    flops = static_cast<std::uint64_t>(s.num_points) * s.num_points * s.num_points * 10;
    r = detail::finish(acc, out, custom);
  } else if (sum_pair) {
    // For each xi2: IFFT of s1(. + xi2) F1 and of s2(xi2 + .) F3, multiply, add.
    GridSpec big = out;
    if (custom) big = GridSpec(s.num_points * opt.padding, s.period);
    auto s1 = m.a1->sum_profile, s2 = m.a2->sum_profile;
    std::vector<cplx> total(big.num_points, cplx(0.0));
    std::size_t M = big.num_points;
    std::vector<cplx> xs(M);
    for (long k2 = s.kmin(); k2 <= s.kmax(); ++k2) {
      cplx b = F2.at(k2);
      if (b == cplx(0.0)) continue;
      SpectralFunction A(big), C(big);
      for (long k = s.kmin(); k <= s.kmax(); ++k) {
        A.ref(k) = s1(s.xi(k + k2)) * F1.at(k);
        C.ref(k) = s2(s.xi(k2 + k)) * F3.at(k);
      }
      auto ga = idft(A), gc = idft(C);
      cplx w = b * dxi;
      std::size_t sh = static_cast<std::size_t>(((k2 % long(M)) + long(M)) % long(M));
      for (std::size_t j = 0; j < M; ++j) {
        // e^{2 pi i k2 x_j / L} = e^{2 pi i k2 j / M}
        std::size_t ph = (sh * j) % M;
        total[j] += w * ga[j] * gc[j] * expi(two_pi * double(ph) / double(M));
      }
      flops += static_cast<std::uint64_t>(M) * 2 * 5 * static_cast<std::uint64_t>(std::log2(double(M))) + 6 * M;
    }
    GridFunction g(big, std::move(total));
    if (custom) {
      auto S = dft(g);
      detail::SpectrumAccumulator fold(big.kmin(), big.kmax());
      for (long k = big.kmin(); k <= big.kmax(); ++k) fold.add(k, S.at(k));
      r = detail::finish(fold, out, true);
    } else {
      r.output = std::move(g);
    }
  } else {
    // Products of three bands: u_i(xi1) (v_i w_j)(xi2) z_j(xi3).
    const auto& A1 = *m.a1->factored;
    const auto& A2 = *m.a2->factored;
    std::vector<ProductTerm> t2(A2.count);
    for (std::size_t j = 0; j < A2.count; ++j) t2[j] = A2.term(j);
    for (std::size_t i = 0; i < A1.count; ++i) {
      auto t = A1.term(i);
      if (t.first.empty() || t.second.empty()) continue;
      auto a = detail::band_times(t.first, F1);
      for (const auto& u : t2) {
        long lo2 = std::max(t.second.start, u.first.start), hi2 = std::min(t.second.end(), u.first.end());
        if (lo2 >= hi2 || u.second.empty()) continue;
        std::vector<cplx> b(static_cast<std::size_t>(hi2 - lo2));
        for (long k = lo2; k < hi2; ++k)
          b[static_cast<std::size_t>(k - lo2)] = t.second.at(k) * u.first.at(k) * F2.at(k);
        auto c = detail::band_times(u.second, F3);
        acc.add_run(t.first.start + lo2 + u.second.start, linear_convolve(linear_convolve(a, b), c), dxi * dxi);
        flops += static_cast<std::uint64_t>(a.size() + b.size() + c.size()) * 60;
      }
    }
    r = detail::finish(acc, out, custom);
  }
  r.path_used = path;
  r.flop_estimate = flops;
  return r;
}

// ---------------------------------------------------------------- maximal

struct MaximalResult {
  GridFunction output;
  std::size_t cutoffs = 0;
  std::uint64_t flop_estimate = 0;
};

// sup over half-integer cutoffs c of |T_{m 1_{xi2 < xi1 < c}}(f1, f2)|. Raising
// c past lattice index k1 adds the column k1; a running sum gives every member.
inline MaximalResult apply_maximal_bicarleson(const Symbol2& m, const GridFunction& f1, const GridFunction& f2,
                                              std::size_t padding = 4) {
  require_same(f1.spec, f2.spec, "apply_maximal_bicarleson");
  require_same(m.spec, f1.spec, "apply_maximal_bicarleson");
  const auto& s = f1.spec;
  GridSpec big(s.num_points * padding, s.period);
  std::size_t M = big.num_points;
  auto F1 = dft(f1), F2 = dft(f2);
  std::vector<cplx> run(M, cplx(0.0));
  std::vector<double> best(M, 0.0);
  MaximalResult res;
  for (long k1 = s.kmin(); k1 <= s.kmax(); ++k1) {
    cplx a = F1.at(k1);
    ++res.cutoffs;
    if (a == cplx(0.0)) continue;
    SpectralFunction col(big);
    bool any = false;
    for (long k2 = s.kmin(); k2 < k1; ++k2) {
      cplx b = F2.at(k2);
      if (b == cplx(0.0)) continue;
      col.ref(k1 + k2) += s.dxi() * m.at(k1, k2) * a * b;
      any = true;
    }
    if (!any) continue;
    auto g = idft(col);
    for (std::size_t j = 0; j < M; ++j) {
      run[j] += g[j];
      best[j] = std::max(best[j], std::abs(run[j]));
    }
    res.flop_estimate += static_cast<std::uint64_t>(M) * 5 * static_cast<std::uint64_t>(std::log2(double(M))) + 8 * M;
  }
  res.output = GridFunction(big);
  for (std::size_t j = 0; j < M; ++j) res.output[j] = best[j];
  return res;
}

// ---------------------------------------------------------------- dual forms

// Lambda = int T(f...) f_last dx = dxi * sum_eta That(eta) Flast(-eta).
inline cplx pair_with(const GridFunction& out, const GridFunction& last) {
  auto T = dft(out);
  auto G = dft(last);
  cplx s = 0.0;
  for (long k = last.spec.kmin(); k <= last.spec.kmax(); ++k) s += T.at(k) * G.at(-k);
  return s * last.spec.dxi();
}

inline cplx dual_form(const Symbol2& m, const GridFunction& f1, const GridFunction& f2, const GridFunction& f3,
                      const OperatorOptions& opt = {}) {
  require_same(f1.spec, f3.spec, "dual_form");
  return pair_with(apply_bilinear(m, f1, f2, opt).output, f3);
}

inline cplx dual_form(const Symbol3& m, const GridFunction& f1, const GridFunction& f2, const GridFunction& f3,
                      const GridFunction& f4, const OperatorOptions& opt = {}) {
  require_same(f1.spec, f4.spec, "dual_form");
  return pair_with(apply_trilinear(m, f1, f2, f3, opt).output, f4);
}

}  // namespace stf
