#pragma once

// Multiplier symbols on the frequency lattice: the M_Gamma class adapted to
// xi1 + xi2 = 0, Whitney squares and their Fourier-series expansion, tensor
// symbols a1(xi1,xi2) a2(xi2,xi3) and the twelve region cutoffs.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "profiles.hpp"
#include "util.hpp"

namespace stf {

// A run of consecutive lattice frequencies [start, start + values.size()).
struct LatticeBand {
  long start = 0;
  std::vector<cplx> values;

  long end() const { return start + static_cast<long>(values.size()); }
  bool empty() const { return values.empty(); }
  cplx at(long k) const {
    if (k < start || k >= end()) return cplx(0.0);
    return values[static_cast<std::size_t>(k - start)];
  }
};

struct ProductTerm {
  LatticeBand first, second;
};

// m = sum_i first_i(xi1) second_i(xi2); terms are produced on demand.
struct FactoredSymbol2 {
  std::size_t count = 0;
  std::function<ProductTerm(std::size_t)> term;

  cplx at(long k1, long k2) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      auto t = term(i);
      s += t.first.at(k1) * t.second.at(k2);
    }
    return s;
  }
};

struct MikhlinCertificate {
  int max_order = 0;
  std::vector<std::array<int, 2>> alphas;
  std::vector<double> constants;
  std::size_t points_checked = 0;
  bool sampled = false;

  double constant(int a1, int a2) const {
    for (std::size_t i = 0; i < alphas.size(); ++i)
      if (alphas[i][0] == a1 && alphas[i][1] == a2) return constants[i];
    throw std::out_of_range("MikhlinCertificate: order not checked");
  }
  double max_constant() const {
    double m = 0.0;
    for (double c : constants) m = std::max(m, c);
    return m;
  }
  json to_json() const {
    json j;
    j["max_order"] = max_order;
    j["points_checked"] = points_checked;
    j["sampled"] = sampled;
    for (std::size_t i = 0; i < alphas.size(); ++i)
      j["constants"].push_back({{"alpha", {alphas[i][0], alphas[i][1]}}, {"value", constants[i]}});
    return j;
  }
};

struct Symbol2 {
  GridSpec spec;
  std::function<cplx(double, double)> fn;
  json descriptor;
  std::string adapted_line = "xi1+xi2=0";
  std::shared_ptr<const FactoredSymbol2> factored;
  std::function<cplx(double)> sum_profile;  // set when m depends on xi1 + xi2 only
  std::optional<MikhlinCertificate> cert;

  cplx operator()(double a, double b) const { return fn(a, b); }
  cplx at(long k1, long k2) const { return fn(spec.xi(k1), spec.xi(k2)); }
};

// Nearest lattice index for a frequency that is known to lie on the lattice.
inline long lattice_index(const GridSpec& s, double xi) { return std::lround(xi * s.period); }

inline Symbol2 constant_symbol(const GridSpec& spec, cplx c = 1.0) {
  Symbol2 m;
  m.spec = spec;
  m.fn = [c](double, double) { return c; };
  m.sum_profile = [c](double) { return c; };
  m.descriptor = {{"constructor", "constant"}, {"value", {c.real(), c.imag()}}};
  return m;
}

inline double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

inline Symbol2 sgn_symbol(const GridSpec& spec) {
  Symbol2 m;
  m.spec = spec;
  m.fn = [](double a, double b) { return cplx(sgn(a + b)); };
  m.sum_profile = [](double t) { return cplx(sgn(t)); };
  m.descriptor = {{"constructor", "sgn_sum"}};
  return m;
}

// m = 1_{xi2 < xi1} * base; used by the maximal Bi-Carleson checks.
inline Symbol2 times_lower_triangle(const Symbol2& base) {
  Symbol2 m;
  m.spec = base.spec;
  auto f = base.fn;
  m.fn = [f](double a, double b) { return b < a ? f(a, b) : cplx(0.0); };
  m.descriptor = {{"constructor", "lower_triangle"}, {"base", base.descriptor}};
  return m;
}

// Random factored symbol: `terms` products of random bands inside the lattice box.
inline Symbol2 random_factored_symbol(const GridSpec& spec, std::uint64_t seed, std::size_t terms,
                                      std::size_t max_band) {
  auto fac = std::make_shared<FactoredSymbol2>();
  Rng rng(seed);
  std::vector<ProductTerm> store;
  long lo = spec.kmin(), hi = spec.kmax();
  for (std::size_t i = 0; i < terms; ++i) {
    ProductTerm t;
    for (auto* b : {&t.first, &t.second}) {
      long len = rng.integer(1, static_cast<long>(max_band));
      b->start = rng.integer(lo, hi - len + 1);
      b->values.resize(static_cast<std::size_t>(len));
      for (auto& v : b->values) v = rng.unit_disk();
    }
    store.push_back(std::move(t));
  }
  auto shared = std::make_shared<std::vector<ProductTerm>>(std::move(store));
  fac->count = shared->size();
  fac->term = [shared](std::size_t i) { return (*shared)[i]; };
  Symbol2 m;
  m.spec = spec;
  m.factored = fac;
  m.fn = [fac, spec](double a, double b) { return fac->at(lattice_index(spec, a), lattice_index(spec, b)); };
  m.descriptor = {{"constructor", "random_factored"}, {"seed", seed}, {"terms", terms}, {"max_band", max_band}};
  return m;
}

// ---------------------------------------------------------------- Mikhlin

inline double dist_to_gamma(double a, double b) { return std::abs(a + b) / std::sqrt(2.0); }

// Forward differences with step dxi; a stencil that touches or straddles the
// line xi1 + xi2 = 0 is skipped, the distance used is the stencil minimum.
inline MikhlinCertificate measure_mikhlin(const Symbol2& m, int max_order,
                                          std::size_t max_points = 1u << 15,
                                          std::uint64_t seed = 0x5eed) {
  const auto& s = m.spec;
  double h = s.dxi();
  MikhlinCertificate cert;
  cert.max_order = max_order;
  for (int ord = 0; ord <= max_order; ++ord)
    for (int a1 = ord; a1 >= 0; --a1) cert.alphas.push_back({a1, ord - a1});
  cert.constants.assign(cert.alphas.size(), 0.0);

  std::vector<std::pair<long, long>> pts;
  long lo = s.kmin(), hi = s.kmax() - max_order;
  std::size_t total = static_cast<std::size_t>(hi - lo + 1) * static_cast<std::size_t>(hi - lo + 1);
  if (total <= max_points) {
    for (long k1 = lo; k1 <= hi; ++k1)
      for (long k2 = lo; k2 <= hi; ++k2) pts.emplace_back(k1, k2);
  } else {
    cert.sampled = true;
    Rng rng(seed);
    for (std::size_t i = 0; i < max_points; ++i) pts.emplace_back(rng.integer(lo, hi), rng.integer(lo, hi));
  }
  int w = max_order + 1;
  std::vector<cplx> stencil(static_cast<std::size_t>(w * w));
  for (auto [k1, k2] : pts) {
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < w; ++j) stencil[static_cast<std::size_t>(i * w + j)] = m.at(k1 + i, k2 + j);
    for (std::size_t a = 0; a < cert.alphas.size(); ++a) {
      int a1 = cert.alphas[a][0], a2 = cert.alphas[a][1];
      long t0 = k1 + k2, t1 = k1 + k2 + a1 + a2;
      if (a1 + a2 > 0 && t0 <= 0 && t1 >= 0) continue;
      if (a1 + a2 == 0 && t0 == 0) continue;
      cplx d = 0.0;
      for (int i = 0; i <= a1; ++i)
        for (int j = 0; j <= a2; ++j) {
          double c = profile::binom(a1, i) * profile::binom(a2, j) * (((a1 - i) + (a2 - j)) % 2 ? -1.0 : 1.0);
          d += c * stencil[static_cast<std::size_t>(i * w + j)];
        }
      double dist = std::min(std::abs(double(t0)), std::abs(double(t1))) * h / std::sqrt(2.0);
      int ord = a1 + a2;
      double ratio = std::abs(d) / std::pow(h, ord) * std::pow(dist, ord);
      cert.constants[a] = std::max(cert.constants[a], ratio);
    }
  }
  cert.points_checked = pts.size();
  return cert;
}

// Random M_Gamma symbol: spline partition of unity in s = log2(|t|/dxi) and
// theta = (4/pi) atan(u/|t|), t = xi1 + xi2, u = xi1 - xi2, with independent
// coefficient tables on the two sides of the line; m = 0 on the line.
inline Symbol2 build_mikhlin_symbol(std::uint64_t seed, int smoothness_order, const GridSpec& spec) {
  if (smoothness_order < 2) throw std::invalid_argument("build_mikhlin_symbol: smoothness_order >= 2");
  const int n = profile::kOrder;
  const int jlo = -n / 2, jhi = static_cast<int>(std::log2(double(spec.num_points))) + n / 2 + 2;
  const int ilo = -2 - n / 2, ihi = 2 + n / 2;
  const int nj = jhi - jlo + 1, ni = ihi - ilo + 1;
  Rng rng(seed);
  auto table = std::make_shared<std::vector<cplx>>(static_cast<std::size_t>(2 * nj * ni));
  for (auto& c : *table) c = rng.unit_disk();
  double dxi = spec.dxi();
  auto fn = [=](double a, double b) -> cplx {
    double t = a + b;
    if (t == 0.0) return 0.0;
    double u = a - b;
    double sv = std::log2(std::abs(t) / dxi);
    double th = (4.0 / M_PI) * std::atan(u / std::abs(t));
    int side = t > 0 ? 0 : 1;
    cplx acc = 0.0;
    int j0 = static_cast<int>(std::floor(sv)) - n / 2, i0 = static_cast<int>(std::floor(th)) - n / 2;
    double bi[profile::kOrder + 1];
    for (int i = i0; i <= i0 + n; ++i)
      bi[i - i0] = (i < ilo || i > ihi) ? 0.0 : profile::cardinal_bspline(n, th - i + 0.5 * n);
    for (int j = std::max(j0, jlo); j <= std::min(j0 + n, jhi); ++j) {
      double bj = profile::cardinal_bspline(n, sv - j + 0.5 * n);
      if (bj == 0.0) continue;
      const cplx* row = table->data() + (side * nj + (j - jlo)) * ni - ilo;
      for (int i = i0; i <= i0 + n; ++i)
        if (bi[i - i0] != 0.0) acc += row[i] * (bj * bi[i - i0]);
    }
    return acc;
  };
  Symbol2 m;
  m.spec = spec;
  m.fn = fn;
  m.descriptor = {{"constructor", "mikhlin_random"}, {"seed", seed}, {"smoothness_order", smoothness_order}};
  m.cert = measure_mikhlin(m, smoothness_order);
  return m;
}

inline Symbol2 add_symbols(const Symbol2& a, const Symbol2& b) {
  require_same(a.spec, b.spec, "add_symbols");
  Symbol2 m;
  m.spec = a.spec;
  auto fa = a.fn, fb = b.fn;
  m.fn = [fa, fb](double x, double y) { return fa(x, y) + fb(x, y); };
  m.descriptor = {{"constructor", "sum"}, {"terms", {a.descriptor, b.descriptor}}};
  return m;
}

// ---------------------------------------------------------------- Whitney

// Square [a s, (a+1) s) x [b s, (b+1) s) in lattice-index units, s = 2^e,
// for the positive region; sign = -1 stores the mirror image of that square.
struct WhitneySquare {
  int e = 0;
  long a = 0, b = 0;
  int sign = 1;
  double center1 = 0, center2 = 0;  // frequency units
  double side = 0;                  // frequency units
  double distance_to_line = 0;      // frequency units

  double side_index() const { return std::ldexp(1.0, e); }

  // Half-open range of lattice indices covered along one axis.
  std::pair<long, long> index_range(int axis) const {
    long p = axis == 0 ? a : b;
    long lo, hi;
    if (e >= 0) {
      long s = 1L << e;
      lo = p * s;
      hi = (p + 1) * s;
    } else if (p % 2 == 0) {
      lo = p / 2;
      hi = lo + 1;
    } else {
      return {0, 0};
    }
    if (sign > 0) return {lo, hi};
    return {-hi + 1, -lo + 1};
  }
  bool contains_index(long k1, long k2) const {
    auto r1 = index_range(0), r2 = index_range(1);
    return k1 >= r1.first && k1 < r1.second && k2 >= r2.first && k2 < r2.second;
  }
};

inline long floor_div2(long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

// Maximal dyadic squares Q in the region sign*(xi1+xi2) > 0 with
// dist(Q, line) >= side; smallest side 1/2 lattice step, clipped to the box.
// The sign = -1 family is the exact mirror image, so it covers the mirror of
// the clipped positive region (the row and column at index -N/2 stay out).
inline std::vector<WhitneySquare> whitney_decompose(int region_sign, const GridSpec& spec) {
  if (region_sign != 1 && region_sign != -1) throw std::invalid_argument("whitney_decompose: sign must be +-1");
  long half = static_cast<long>(spec.num_points / 2);
  int emax = static_cast<int>(std::log2(double(half)));
  double dxi = spec.dxi();
  std::vector<WhitneySquare> out;
  for (int e = emax; e >= -1; --e) {
    long count = e >= 0 ? (half >> e) : 2 * half;
    for (long a = -count; a < count; ++a) {
      for (long b = -count; b < count; ++b) {
        long sa = a + b;
        if (sa < 2) continue;
        if (e != emax && floor_div2(a) + floor_div2(b) >= 2) continue;
        WhitneySquare q;
        q.e = e;
        q.a = a;
        q.b = b;
        q.sign = region_sign;
        double s = std::ldexp(1.0, e);
        q.center1 = region_sign * (a + 0.5) * s * dxi;
        q.center2 = region_sign * (b + 0.5) * s * dxi;
        q.side = s * dxi;
        q.distance_to_line = double(sa) * s * dxi / std::sqrt(2.0);
        out.push_back(q);
      }
    }
  }
  return out;
}

// Exact Whitney check: side <= dist <= 4 side with dist^2 = (a+b)^2 s^2 / 2.
inline bool whitney_property_exact(const WhitneySquare& q) {
  long sa = q.a + q.b;
  return sa > 0 && sa * sa >= 2 && sa * sa <= 32;
}

// ---------------------------------------------------------------- series

struct SquareSeries {
  WhitneySquare square;
  double period = 0;             // 2 * side, frequency units
  std::vector<cplx> coeffs;      // (2K+1)^2, index (l1+K)*(2K+1) + (l2+K)
};

struct BumpSeries {
  GridSpec spec;
  int K = 0;
  int grid = 128;
  std::vector<SquareSeries> squares;
  double reconstruction_error = 0.0;
  int decay_order = profile::kOrder;
  double decay_constant = 0.0;  // max |C_l| (1+|l|)^M over all squares

  cplx coeff(const SquareSeries& s, int l1, int l2) const {
    return s.coeffs[static_cast<std::size_t>((l1 + K) * (2 * K + 1) + (l2 + K))];
  }
};

// Window equal to 1 on the square, 0 off its triple; its translates by
// 2 * side sum to 1, so symbols already periodic on the doubled square pass through.
inline double square_cutoff(double y, double side) {
  return profile::plateau(profile::kOrder, -0.5 * side, 0.5 * side, side, y);
}

inline void fft2_forward(std::vector<cplx>& a, std::size_t g) {
  std::vector<cplx> row(g);
  for (std::size_t i = 0; i < g; ++i) {
    std::copy(a.begin() + static_cast<long>(i * g), a.begin() + static_cast<long>((i + 1) * g), row.begin());
    fft_forward(row);
    std::copy(row.begin(), row.end(), a.begin() + static_cast<long>(i * g));
  }
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t i = 0; i < g; ++i) row[i] = a[i * g + j];
    fft_forward(row);
    for (std::size_t i = 0; i < g; ++i) a[i * g + j] = row[i];
  }
}

inline cplx series_value(const BumpSeries& bs, const SquareSeries& sq, double x1, double x2) {
  cplx acc = 0.0;
  int K = bs.K;
  double y1 = (x1 - sq.square.center1) / sq.period, y2 = (x2 - sq.square.center2) / sq.period;
  for (int l1 = -K; l1 <= K; ++l1) {
    cplx inner = 0.0;
    for (int l2 = -K; l2 <= K; ++l2) inner += bs.coeff(sq, l1, l2) * cis(l2 * y2);
    acc += inner * cis(l1 * y1);
  }
  return acc;
}

// Per square: g = periodization of m * window with period 2 * side, so g = m
// on the square; double Fourier coefficients from a grid x grid sample,
// truncated to |l| <= K.
inline BumpSeries expand_whitney_series(const Symbol2& m, const std::vector<WhitneySquare>& squares,
                                        int K, int grid = 128) {
  if (K <= 0) throw std::invalid_argument("expand_whitney_series: K must be positive");
  if (2 * K + 1 > grid) throw std::invalid_argument("expand_whitney_series: K too large for sample grid");
  BumpSeries bs;
  bs.spec = m.spec;
  bs.K = K;
  bs.grid = grid;
  std::size_t g = static_cast<std::size_t>(grid);
  std::vector<cplx> buf(g * g);
  for (const auto& q : squares) {
    SquareSeries sq;
    sq.square = q;
    sq.period = 2.0 * q.side;
    const double P = sq.period;
    for (std::size_t i = 0; i < g; ++i) {
      double y1 = (double(i) / double(g) - 0.5) * P;
      for (std::size_t j = 0; j < g; ++j) {
        double y2 = (double(j) / double(g) - 0.5) * P;
        cplx v = 0.0;
        for (int j1 = -1; j1 <= 1; ++j1) {
          double w1 = square_cutoff(y1 - j1 * P, q.side);
          if (w1 == 0.0) continue;
          for (int j2 = -1; j2 <= 1; ++j2) {
            double w2 = square_cutoff(y2 - j2 * P, q.side);
            if (w2 == 0.0) continue;
            v += w1 * w2 * m(q.center1 + y1 - j1 * P, q.center2 + y2 - j2 * P);
          }
        }
        // sample index i sits at phase (i - g/2)/g; shift to the FFT origin
        buf[((i + g / 2) % g) * g + (j + g / 2) % g] = v;
      }
    }
    fft2_forward(buf, g);
    sq.coeffs.resize(static_cast<std::size_t>((2 * K + 1) * (2 * K + 1)));
    double inv = 1.0 / double(g * g);
    for (int l1 = -K; l1 <= K; ++l1)
      for (int l2 = -K; l2 <= K; ++l2) {
        std::size_t r = static_cast<std::size_t>((l1 + grid) % grid), c = static_cast<std::size_t>((l2 + grid) % grid);
        cplx v = buf[r * g + c] * inv;
        sq.coeffs[static_cast<std::size_t>((l1 + K) * (2 * K + 1) + (l2 + K))] = v;
        double lmax = std::max(std::abs(l1), std::abs(l2));
        bs.decay_constant = std::max(bs.decay_constant, std::abs(v) * std::pow(1.0 + lmax, bs.decay_order));
      }
    bs.squares.push_back(std::move(sq));
  }
  // reconstruction error over lattice points inside the squares
  double err = 0.0;
  for (const auto& sq : bs.squares) {
    auto r1 = sq.square.index_range(0), r2 = sq.square.index_range(1);
    for (long k1 = r1.first; k1 < r1.second; ++k1)
      for (long k2 = r2.first; k2 < r2.second; ++k2) {
        double x1 = m.spec.xi(k1), x2 = m.spec.xi(k2);
        err = std::max(err, std::abs(series_value(bs, sq, x1, x2) - m(x1, x2)));
      }
  }
  bs.reconstruction_error = err;
  return bs;
}

// The truncated series as a factored symbol: per square, 2K+1 products
// e_{l1}(xi1) 1_{Q1} * [sum_l2 C e_{l2}(xi2)] 1_{Q2}.
inline Symbol2 series_symbol(const BumpSeries& bs) {
  auto terms = std::make_shared<std::vector<ProductTerm>>();
  const auto& spec = bs.spec;
  for (const auto& sq : bs.squares) {
    auto r1 = sq.square.index_range(0), r2 = sq.square.index_range(1);
    if (r1.first >= r1.second || r2.first >= r2.second) continue;
    for (int l1 = -bs.K; l1 <= bs.K; ++l1) {
      ProductTerm t;
      t.first.start = r1.first;
      for (long k = r1.first; k < r1.second; ++k)
        t.first.values.push_back(cis(l1 * (spec.xi(k) - sq.square.center1) / sq.period));
      t.second.start = r2.first;
      for (long k = r2.first; k < r2.second; ++k) {
        cplx s = 0.0;
        for (int l2 = -bs.K; l2 <= bs.K; ++l2)
          s += bs.coeff(sq, l1, l2) * cis(l2 * (spec.xi(k) - sq.square.center2) / sq.period);
        t.second.values.push_back(s);
      }
      terms->push_back(std::move(t));
    }
  }
  auto fac = std::make_shared<FactoredSymbol2>();
  fac->count = terms->size();
  fac->term = [terms](std::size_t i) { return (*terms)[i]; };
  Symbol2 m;
  m.spec = spec;
  m.factored = fac;
  m.fn = [fac, spec](double a, double b) { return fac->at(lattice_index(spec, a), lattice_index(spec, b)); };
  m.descriptor = {{"constructor", "whitney_series"}, {"K", bs.K}, {"squares", bs.squares.size()}};
  return m;
}

// ---------------------------------------------------------------- Symbol3

struct Symbol3 {
  GridSpec spec;
  std::function<cplx(double, double, double)> fn;
  json descriptor;
  std::shared_ptr<const Symbol2> a1, a2;  // set for tensor symbols
  std::string region_tag = "none";

  cplx operator()(double x, double y, double z) const { return fn(x, y, z); }
  cplx at(long k1, long k2, long k3) const { return fn(spec.xi(k1), spec.xi(k2), spec.xi(k3)); }
};

inline Symbol3 constant_symbol3(const GridSpec& spec, cplx c = 1.0) {
  Symbol3 m;
  m.spec = spec;
  m.fn = [c](double, double, double) { return c; };
  m.descriptor = {{"constructor", "constant3"}, {"value", {c.real(), c.imag()}}};
  return m;
}

inline Symbol3 tensor_symbol(const Symbol2& a1, const Symbol2& a2) {
  require_same(a1.spec, a2.spec, "tensor_symbol");
  Symbol3 m;
  m.spec = a1.spec;
  m.a1 = std::make_shared<Symbol2>(a1);
  m.a2 = std::make_shared<Symbol2>(a2);
  auto f1 = a1.fn, f2 = a2.fn;
  m.fn = [f1, f2](double x, double y, double z) { return f1(x, y) * f2(y, z); };
  m.descriptor = {{"constructor", "tensor"}, {"a1", a1.descriptor}, {"a2", a2.descriptor}};
  return m;
}

inline std::vector<cplx> dense_symbol3(const Symbol3& m) {
  std::size_t n = m.spec.num_points;
  std::vector<cplx> d(n * n * n);
  long lo = m.spec.kmin();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        d[(i * n + j) * n + k] = m.at(lo + long(i), lo + long(j), lo + long(k));
  return d;
}

// ---------------------------------------------------------------- regions

struct RegionTag {
  int i = 1;  // 1: xi1 + xi2 > 0, 2: < 0
  int j = 1;  // 1: xi2 + xi3 < 0, 2: > 0
  int k = 1;  // 1: |xi1+xi2| << |xi2+xi3|, 2: comparable, 3: >>

  std::string name() const {
    return "R" + std::to_string(i) + std::to_string(j) + "_" + std::to_string(k);
  }
  static RegionTag parse(const std::string& s) {
    if (s.size() != 5 || s[0] != 'R' || s[3] != '_') throw std::invalid_argument("unknown region tag: " + s);
    RegionTag t{s[1] - '0', s[2] - '0', s[4] - '0'};
    if (t.i < 1 || t.i > 2 || t.j < 1 || t.j > 2 || t.k < 1 || t.k > 3)
      throw std::invalid_argument("unknown region tag: " + s);
    return t;
  }
};

inline std::vector<RegionTag> all_region_tags() {
  std::vector<RegionTag> v;
  for (int i = 1; i <= 2; ++i)
    for (int j = 1; j <= 2; ++j)
      for (int k = 1; k <= 3; ++k) v.push_back({i, j, k});
  return v;
}

inline constexpr double kRegionLogRatio = 5.0;  // "much smaller" means ratio >= 2^5

// phi_1 = 1 for rho <= -5, 0 for rho >= -4; phi_3(rho) = phi_1(-rho).
inline double region_weight(int k, double rho) {
  auto phi1 = [](double r) { return 1.0 - profile::step(profile::kOrder, -kRegionLogRatio, 1.0, r); };
  if (k == 1) return phi1(rho);
  if (k == 3) return phi1(-rho);
  return 1.0 - phi1(rho) - phi1(-rho);
}

struct RegionClassification {
  std::vector<RegionTag> active;
  double ratio = 0;  // |xi1+xi2| / |xi2+xi3|
  bool on_boundary = false;
};

inline double region_value(const RegionTag& t, double x, double y, double z) {
  double s12 = x + y, s23 = y + z;
  if (s12 == 0.0 || s23 == 0.0) return 0.0;
  bool ci = t.i == 1 ? s12 > 0 : s12 < 0;
  bool cj = t.j == 1 ? s23 < 0 : s23 > 0;
  if (!ci || !cj) return 0.0;
  double rho = std::log2(std::abs(s12) / std::abs(s23));
  return region_weight(t.k, rho);
}

inline RegionClassification classify_region(double x, double y, double z) {
  RegionClassification c;
  double s12 = x + y, s23 = y + z;
  c.on_boundary = (s12 == 0.0 || s23 == 0.0);
  c.ratio = s23 == 0.0 ? inf : std::abs(s12) / std::abs(s23);
  for (const auto& t : all_region_tags())
    if (region_value(t, x, y, z) > 0.0) c.active.push_back(t);
  return c;
}

inline Symbol3 region_cutoff(const std::string& tag, const GridSpec& spec) {
  RegionTag t = RegionTag::parse(tag);
  Symbol3 m;
  m.spec = spec;
  m.region_tag = t.name();
  m.fn = [t](double x, double y, double z) { return cplx(region_value(t, x, y, z)); };
  m.descriptor = {{"constructor", "region_cutoff"}, {"tag", t.name()}, {"log2_ratio", kRegionLogRatio}};
  return m;
}

inline Symbol3 multiply(const Symbol3& a, const Symbol3& b) {
  require_same(a.spec, b.spec, "multiply");
  Symbol3 m;
  m.spec = a.spec;
  auto fa = a.fn, fb = b.fn;
  m.fn = [fa, fb](double x, double y, double z) { return fa(x, y, z) * fb(x, y, z); };
  m.region_tag = b.region_tag != "none" ? b.region_tag : a.region_tag;
  m.descriptor = {{"constructor", "product3"}, {"factors", {a.descriptor, b.descriptor}}};
  return m;
}

}  // namespace stf
