#pragma once

// Sizes, maximal intervals, exceptional sets and the stopping-time
// decomposition of a tri-tile universe; the scale-one and toy model forms,
// the local Taylor split of the main model and the energy/tree verifiers.

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "profiles.hpp"
#include "tiles.hpp"
#include "util.hpp"

namespace stf {

inline constexpr int kNullLevel = INT_MAX;

// Smallest n with v >= 2^-n, i.e. v in [2^-n, 2^-n+1); exact at powers of two.
inline int dyadic_level(double v) {
  if (!(v > 0.0)) return kNullLevel;
  int e = 0;
  std::frexp(v, &e);
  return 1 - e;
}

inline double level_value(int n) { return n == kNullLevel ? 0.0 : std::ldexp(1.0, -n); }

// ---- packet variants -----------------------------------------------------

namespace detail {

// Band of lattice samples of `shape((xi - center) len)` times the translation
// to x0, L2-normalized. The support [center - width/2, center + width/2] is closed.
inline PacketBand shaped_band(const GridSpec& s, double center, double width, double len, double x0,
                              const std::function<double(double)>& shape, const char* who) {
  long lo = static_cast<long>(std::ceil((center - 0.5 * width) * s.period - 1e-9));
  long hi = static_cast<long>(std::floor((center + 0.5 * width) * s.period + 1e-9));
  if (hi - lo + 1 < 5) throw std::invalid_argument(std::string(who) + ": band below lattice resolution");
  if (lo < s.kmin() || hi > s.kmax()) throw std::invalid_argument(std::string(who) + ": band outside the lattice");
  PacketBand b;
  b.k0 = lo;
  double energy = 0.0;
  for (long k = lo; k <= hi; ++k) {
    double xi = s.xi(k);
    double v = shape((xi - center) * len);
    b.values.push_back(v * cis(-xi * x0));
    energy += v * v;
  }
  double norm = std::sqrt(energy * s.dxi());
  if (!(norm > 0.0)) throw std::invalid_argument(std::string(who) + ": empty band");
  for (auto& v : b.values) v /= norm;
  return b;
}

}  // namespace detail

// Phi-hat times ((xi - center) |I|)^power; power 1, 2 give the b and c packets.
inline PacketBand variant_band(const Tile& P, const GridSpec& s, int power, std::optional<double> center = std::nullopt) {
  PacketBand b = packet_band(P, s);
  if (power == 0) return b;
  double c = center ? *center : to_double(P.omega.center());
  double len = to_double(P.I.length());
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    double t = (s.xi(b.k0 + static_cast<long>(i)) - c) * len;
    b.values[i] *= std::pow(t, power);
  }
  return b;
}

// conj(Phi): same time localization, frequency support reflected.
inline PacketBand reflected_band(const PacketBand& b, const GridSpec& s) {
  long last = b.k0 + static_cast<long>(b.values.size()) - 1;
  if (-last < s.kmin() || -b.k0 > s.kmax()) throw std::invalid_argument("reflected_band: band outside the lattice");
  PacketBand r;
  r.k0 = -last;
  r.values.resize(b.values.size());
  for (std::size_t i = 0; i < b.values.size(); ++i) r.values[b.values.size() - 1 - i] = std::conj(b.values[i]);
  return r;
}

// Lacunary companion at scale |I|: two order-8 bumps on the annulus 1/2 <= |I xi| <= 2.
inline PacketBand lacunary_band(const DyadicInterval& I, const GridSpec& s) {
  double len = to_double(I.length()), x0 = to_double(I.center());
  auto shape = [](double u) {
    return profile::bspline(profile::kOrder, 1.5, u - 1.25) + profile::bspline(profile::kOrder, 1.5, u + 1.25);
  };
  return detail::shaped_band(s, 0.0, 4.0 / len, len, x0, shape, "lacunary_band");
}

// Low-pass companion: one bump on |I xi| <= 1/2.
inline PacketBand lowpass_band(const DyadicInterval& I, const GridSpec& s) {
  double len = to_double(I.length()), x0 = to_double(I.center());
  auto shape = [](double u) { return profile::bspline(profile::kOrder, 1.0, u); };
  return detail::shaped_band(s, 0.0, 1.0 / len, len, x0, shape, "lowpass_band");
}

// <g, h> for two packets given by their bands.
inline cplx pair_bands(const PacketBand& g, const PacketBand& h, const GridSpec& s) {
  long lo = std::max(g.k0, h.k0);
  long hi = std::min(g.k0 + static_cast<long>(g.values.size()), h.k0 + static_cast<long>(h.values.size())) - 1;
  cplx acc = 0.0;
  for (long k = lo; k <= hi; ++k) acc += g.values[static_cast<std::size_t>(k - g.k0)] * std::conj(h.values[static_cast<std::size_t>(k - h.k0)]);
  return acc * s.dxi();
}

// <f, Phi^{(power)}_{P_component}> for every tri-tile.
inline std::vector<cplx> tile_coefficients(const std::vector<TriTile>& u, const SpectralFunction& F, int component, int power = 0) {
  std::vector<cplx> out;
  out.reserve(u.size());
  for (const auto& P : u) out.push_back(pair_band(F, variant_band(P.tile(component), F.spec, power)));
  return out;
}

// |<f, Phi>|^2, summed over the a, b, c variants when `variants` is 3.
inline std::vector<double> tile_weights(const std::vector<TriTile>& u, const SpectralFunction& F, int component, int variants = 1) {
  if (variants != 1 && variants != 3) throw std::invalid_argument("tile_weights: variants must be 1 or 3");
  std::vector<double> w(u.size(), 0.0);
  for (int r = 0; r < variants; ++r) {
    auto c = tile_coefficients(u, F, component, r);
    for (std::size_t i = 0; i < u.size(); ++i) w[i] += std::norm(c[i]);
  }
  return w;
}

// ---- sizes ---------------------------------------------------------------

struct SizeOptions {
  int component = 0;               // packet slot; 0 means the tree index j
  int variants = 1;                // 3 aggregates the a/b/c packets
  std::optional<Span> within;      // only tiles and tops with I inside
};

struct SizeReport {
  int j = 1;
  double value = 0.0;
  Tree tree;                       // achieving tree; empty when value is 0
};

// le[m * n + t]: P_m <= P_t in component j, over the index list `idx`.
inline std::vector<char> order_matrix(const std::vector<TriTile>& u, const std::vector<std::size_t>& idx, int j) {
  std::size_t n = idx.size();
  std::vector<char> le(n * n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    Tile pa = u[idx[a]].tile(j);
    for (std::size_t b = 0; b < n; ++b) le[a * n + b] = tile_le(pa, u[idx[b]].tile(j));
  }
  return le;
}

inline double tree_value(const std::vector<TriTile>& u, const std::vector<std::size_t>& members, const TriTile& top, const std::vector<double>& weight) {
  double acc = 0.0;
  for (auto m : members) acc += weight[m];
  return std::sqrt(acc / to_double(top.I.length()));
}

// sup over trees: for a fixed top the best tree is everything below it, so
// enumerating the universe as tops is exact.
inline SizeReport size_from_weights(const std::vector<TriTile>& u, const std::vector<double>& weight, int j, const std::optional<Span>& within = std::nullopt) {
  if (u.empty()) throw std::invalid_argument("size_j: empty universe");
  if (j < 1 || j > 3) throw std::invalid_argument("size_j: tree index out of range");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!within || within->contains(u[i].I.span())) idx.push_back(i);
  SizeReport rep;
  rep.j = j;
  if (idx.empty()) return rep;
  auto le = order_matrix(u, idx, j);
  std::size_t n = idx.size();
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t m = 0; m < n; ++m)
      if (le[m * n + t]) acc += weight[idx[m]];
    double v = std::sqrt(acc / to_double(u[idx[t]].I.length()));
    if (v > rep.value) {
      rep.value = v;
      rep.tree.type = j;
      rep.tree.top = u[idx[t]];
      rep.tree.members.clear();
      for (std::size_t m = 0; m < n; ++m)
        if (le[m * n + t]) rep.tree.members.push_back(idx[m]);
    }
  }
  return rep;
}

// j in 1..4 names the input slot; slot 4 pairs with the reflected first packet.
inline SizeReport size_j(const std::vector<TriTile>& u, const SpectralFunction& F, int j, const SizeOptions& opt = {}) {
  if (u.empty()) throw std::invalid_argument("size_j: empty universe");
  if (j < 1 || j > 4) throw std::invalid_argument("size_j: j must be in 1..4");
  int tree_type = j == 4 ? 1 : j;
  int comp = opt.component ? opt.component : tree_type;
  std::vector<double> w;
  if (j == 4) {
    for (const auto& P : u) w.push_back(std::norm(pair_band(F, reflected_band(packet_band(P.tile(comp), F.spec), F.spec))));
  } else {
    w = tile_weights(u, F, comp, opt.variants);
  }
  auto rep = size_from_weights(u, w, tree_type, opt.within);
  rep.j = j;
  return rep;
}

// ---- dyadic averages and maximal intervals -------------------------------

// Lattice interval [start, start + len) in sample units.
struct GridInterval {
  std::size_t start = 0, len = 0;
  double average = 0.0;
  bool contains(const GridInterval& o) const { return start <= o.start && o.start + o.len <= start + len; }
  bool operator==(const GridInterval& o) const { return start == o.start && len == o.len; }
  bool operator<(const GridInterval& o) const { return start != o.start ? start < o.start : len > o.len; }
  double lo(const GridSpec& s) const { return static_cast<double>(start) * s.dx(); }
  double hi(const GridSpec& s) const { return static_cast<double>(start + len) * s.dx(); }
  double length(const GridSpec& s) const { return static_cast<double>(len) * s.dx(); }
};

// Averages of |f| over every dyadic lattice interval, plain or against the
// weight (1 + dist(x, I)/|I|)^-N with periodic distance.
struct DyadicAverages {
  GridSpec spec;
  std::vector<std::vector<double>> table;  // table[level][i], interval [i 2^level, (i+1) 2^level)
  double at(int level, std::size_t i) const { return table[static_cast<std::size_t>(level)][i]; }
  int levels() const { return static_cast<int>(table.size()); }
};

inline DyadicAverages dyadic_averages(const GridSpec& s, const std::vector<double>& a, bool smooth = false, int N = 8) {
  std::size_t n = s.num_points;
  if (a.size() != n) throw std::invalid_argument("dyadic_averages: size mismatch");
  DyadicAverages out;
  out.spec = s;
  std::vector<double> pre(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) pre[j + 1] = pre[j] + std::abs(a[j]);
  std::vector<cplx> A;
  if (smooth) {
    A.assign(a.begin(), a.end());
    for (auto& v : A) v = std::abs(v.real());
    fft_forward(A);
  }
  for (std::size_t len = 1; len <= n; len <<= 1) {
    std::vector<double> row(n / len);
    if (!smooth) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = (pre[(i + 1) * len] - pre[i * len]) / static_cast<double>(len);
    } else {
      // h(b) = sum_y a(b + y) K(y): a correlation, so multiply by conj(K^).
      std::vector<cplx> K(n);
      for (std::size_t y = 0; y < n; ++y) {
        double d = y < len ? 0.0 : static_cast<double>(std::min(y - len + 1, n - y));
        K[y] = std::pow(1.0 + d / static_cast<double>(len), -N);
      }
      fft_forward(K);
      std::vector<cplx> h(n);
      for (std::size_t k = 0; k < n; ++k) h[k] = A[k] * std::conj(K[k]);
      fft_backward(h);
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = std::max(0.0, h[i * len].real()) / static_cast<double>(n) / static_cast<double>(len);
    }
    out.table.push_back(std::move(row));
  }
  return out;
}

inline DyadicAverages dyadic_averages(const GridFunction& f, bool smooth = false, int N = 8) {
  std::vector<double> a(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) a[j] = std::abs(f[j]);
  return dyadic_averages(f.spec, a, smooth, N);
}

inline std::vector<double> mask_values(const std::vector<bool>& m) {
  std::vector<double> a(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) a[j] = m[j] ? 1.0 : 0.0;
  return a;
}

// Dyadic intervals with average >= threshold and no ancestor reaching it.
inline std::vector<GridInterval> select_maximal_intervals(const DyadicAverages& avg, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("select_maximal_intervals: threshold must be positive");
  std::vector<GridInterval> out;
  int top = avg.levels() - 1;
  std::vector<char> covered(1, 0);
  for (int lev = top; lev >= 0; --lev) {
    std::size_t len = std::size_t(1) << lev;
    const auto& row = avg.table[static_cast<std::size_t>(lev)];
    std::vector<char> next(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      bool above = lev < top ? covered[i / 2] != 0 : false;
      if (!above && row[i] >= threshold) out.push_back({i * len, len, row[i]});
      next[i] = above || row[i] >= threshold;
    }
    covered.swap(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<GridInterval> select_maximal_intervals(const GridFunction& f, double threshold, bool smooth = false) {
  return select_maximal_intervals(dyadic_averages(f, smooth), threshold);
}

inline bool intervals_disjoint(const std::vector<GridInterval>& fam) {
  for (std::size_t i = 1; i < fam.size(); ++i)
    if (fam[i - 1].start + fam[i - 1].len > fam[i].start) return false;
  return true;
}

// Every interval of `fine` (higher threshold) sits inside exactly one of `coarse`.
inline bool families_nested(const std::vector<GridInterval>& fine, const std::vector<GridInterval>& coarse) {
  for (const auto& I : fine) {
    int hits = 0;
    for (const auto& J : coarse) hits += J.contains(I);
    if (hits != 1) return false;
  }
  return true;
}

inline double total_length(const std::vector<GridInterval>& fam, const GridSpec& s) {
  double t = 0.0;
  for (const auto& I : fam) t += I.length(s);
  return t;
}

// Lattice image of a time interval; must be whole samples inside [0, L).
inline GridInterval grid_interval(const DyadicInterval& I, const GridSpec& s) {
  if (!lattice_is_rational(s)) throw std::invalid_argument("grid_interval: period must be an integer");
  Rat scale(static_cast<long long>(s.num_points), static_cast<long long>(s.period));
  Rat a = I.left() * scale, l = I.length() * scale;
  if (a.denominator() != 1 || l.denominator() != 1 || l.numerator() < 1)
    throw std::invalid_argument("grid_interval: interval below lattice resolution");
  if (a.numerator() < 0 || a.numerator() + l.numerator() > static_cast<long long>(s.num_points))
    throw std::invalid_argument("grid_interval: interval outside the period");
  return {static_cast<std::size_t>(a.numerator()), static_cast<std::size_t>(l.numerator()), 0.0};
}

// max over dyadic J containing I of the J-average.
inline double max_ancestor_average(const DyadicAverages& avg, const GridInterval& I) {
  int lev = 0;
  while ((std::size_t(1) << lev) < I.len) ++lev;
  double m = 0.0;
  std::size_t i = I.start >> lev;
  for (int l = lev; l < avg.levels(); ++l, i >>= 1) m = std::max(m, avg.at(l, i));
  return m;
}

// The maximal interval of the threshold-2^-n family that contains I.
inline GridInterval containing_maximal(const DyadicAverages& avg, const GridInterval& I, int n) {
  double t = level_value(n);
  int lev = 0;
  while ((std::size_t(1) << lev) < I.len) ++lev;
  GridInterval best;
  std::size_t i = I.start >> lev;
  for (int l = lev; l < avg.levels(); ++l, i >>= 1)
    if (avg.at(l, i) >= t) best = {i << l, std::size_t(1) << l, avg.at(l, i)};
  if (best.len == 0) throw std::logic_error("containing_maximal: no interval reaches the threshold");
  return best;
}

// ---- exceptional set -----------------------------------------------------

struct ExceptionalSet {
  std::vector<bool> mask;
  std::array<std::vector<bool>, 3> parts;
  std::array<bool, 3> fired{false, false, false};
  std::array<double, 3> part_measure{0.0, 0.0, 0.0};
  std::array<double, 3> thresholds{0.0, 0.0, 0.0};
  double measure = 0.0, reference = 1.0, C = 0.0;
  bool ok = false;  // measure <= reference / 2
};

// Measure of the frequency support of F.
inline double spectral_support_measure(const SpectralFunction& F) {
  std::size_t c = 0;
  for (const auto& v : F.coeffs) c += std::abs(v) > 0.0;
  return static_cast<double>(c) * F.spec.dxi();
}

// {M1_E1 >= C|E1|} u {M1_E3 >= C|E3|} u {M f2 >= C |E2|^{1/2}}, measures in physical units.
inline ExceptionalSet build_exceptional_set(const GridSpec& s, const std::vector<bool>& E1, const std::vector<bool>& E3,
                                            const GridFunction& f2, double E2_measure, double C, double reference = 1.0) {
  if (E1.size() != s.num_points || E3.size() != s.num_points) throw std::invalid_argument("build_exceptional_set: set size mismatch");
  require_same(s, f2.spec, "build_exceptional_set");
  if (!(C > 0.0)) throw std::invalid_argument("build_exceptional_set: C must be positive");
  ExceptionalSet X;
  X.C = C;
  X.reference = reference;
  std::array<GridFunction, 3> maximal{hl_maximal(indicator(s, E1)), hl_maximal(indicator(s, E3)), hl_maximal(f2)};
  X.thresholds = {C * measure(s, E1), C * measure(s, E3), C * std::sqrt(E2_measure)};
  X.mask.assign(s.num_points, false);
  for (std::size_t c = 0; c < 3; ++c) {
    X.parts[c].assign(s.num_points, false);
    for (std::size_t j = 0; j < s.num_points; ++j)
      if (maximal[c][j].real() >= X.thresholds[c]) X.parts[c][j] = true;
    X.part_measure[c] = measure(s, X.parts[c]);
    X.fired[c] = X.part_measure[c] > 0.0;
    for (std::size_t j = 0; j < s.num_points; ++j) X.mask[j] = X.mask[j] || X.parts[c][j];
  }
  X.measure = measure(s, X.mask);
  X.ok = X.measure <= 0.5 * reference;
  return X;
}

// Periodic distance, in samples, from each sample to the complement of `mask`.
inline std::vector<double> distance_to_complement(const std::vector<bool>& mask) {
  std::size_t n = mask.size();
  std::vector<double> d(n, inf);
  if (std::all_of(mask.begin(), mask.end(), [](bool b) { return b; })) return d;
  double run = inf;
  for (std::size_t t = 0; t < 2 * n; ++t) {
    std::size_t j = t % n;
    run = mask[j] ? run + 1.0 : 0.0;
    d[j] = std::min(d[j], run);
  }
  run = inf;
  for (std::size_t t = 2 * n; t-- > 0;) {
    std::size_t j = t % n;
    run = mask[j] ? run + 1.0 : 0.0;
    d[j] = std::min(d[j], run);
  }
  return d;
}

// floor(log2(1 + dist(I, Omega^c)/|I|)).
inline int distance_level(const std::vector<double>& dist, const GridInterval& I) {
  double m = inf;
  for (std::size_t j = I.start; j < I.start + I.len; ++j) m = std::min(m, dist[j]);
  if (std::isinf(m)) return kNullLevel;
  return static_cast<int>(std::floor(std::log2(1.0 + m / static_cast<double>(I.len))));
}

// ---- stopping time -------------------------------------------------------

struct LevelTree {
  Tree tree;
  int level = kNullLevel;
  double value = 0.0;
};

// Dyadic pigeonholing by tree size: at level n, repeatedly take the first
// top (top_before) whose tree over the remaining tiles has size >= 2^-n.
// Zero-weight leftovers go to kNullLevel through build_trees.
inline std::vector<LevelTree> size_stopping(const std::vector<TriTile>& u, const std::vector<std::size_t>& subset, int j, const std::vector<double>& weight) {
  std::vector<LevelTree> out;
  std::size_t n = subset.size();
  if (n == 0) return out;
  auto le = order_matrix(u, subset, j);
  std::vector<char> alive(n, 1);
  auto value_of = [&](std::size_t t) {
    double acc = 0.0;
    for (std::size_t m = 0; m < n; ++m)
      if (alive[m] && le[m * n + t]) acc += weight[subset[m]];
    return std::sqrt(acc / to_double(u[subset[t]].I.length()));
  };
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return top_before(u[subset[a]], u[subset[b]], j); });
  std::vector<double> val(n);
  double best = 0.0;
  for (std::size_t t = 0; t < n; ++t) best = std::max(best, val[t] = value_of(t));
  int level = dyadic_level(best);
  while (level != kNullLevel) {
    double thr = level_value(level);
    bool took = false;
    for (std::size_t t : order) {
      if (!alive[t] || val[t] < thr) continue;
      LevelTree L;
      L.level = level;
      L.value = val[t];
      L.tree.type = j;
      L.tree.top = u[subset[t]];
      std::vector<std::size_t> gone;
      for (std::size_t m = 0; m < n; ++m)
        if (alive[m] && le[m * n + t]) gone.push_back(m);
      for (auto m : gone) {
        alive[m] = 0;
        L.tree.members.push_back(subset[m]);
      }
      out.push_back(std::move(L));
      for (std::size_t c = 0; c < n; ++c)
        if (alive[c]) val[c] = value_of(c);
      took = true;
      break;
    }
    if (took) continue;
    best = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      if (alive[t]) best = std::max(best, val[t]);
    level = dyadic_level(best);
  }
  std::vector<std::size_t> rest;
  for (std::size_t m = 0; m < n; ++m)
    if (alive[m]) rest.push_back(subset[m]);
  for (auto& T : build_trees(u, j, rest)) out.push_back({std::move(T), kNullLevel, 0.0});
  return out;
}

struct StoppingInputs {
  GridSpec spec;
  std::vector<bool> E1, E3, E4;
  SpectralFunction F2, F3;       // f2 in the Wiener slot, f3 dominated by 1_E3
  double E2 = -1.0;              // |E2|; the frequency support of F2 when negative
};

struct StoppingConfig {
  double C_omega = 32.0;
  bool three_packet = false;     // main-model size: a, b, c packets of Q1
  bool smooth = false;           // 1-tilde weighted averages instead of plain ones
  double e4_tolerance = 1e-9;
};

// Bucket key (d, n1, n4, I) with I the smaller of the two maximal intervals.
struct BucketKey {
  int d = 0, n1 = 0, n4 = 0;
  std::size_t start = 0, len = 0;
  auto operator<=>(const BucketKey&) const = default;
};

struct TreeRecord {
  BucketKey key;
  int n2 = kNullLevel, n3 = kNullLevel;  // n3 unset on 2-trees
  Tree tree;
  double value = 0.0;
  std::size_t family = 0;
  std::uint64_t certificate = 0;
};

struct FamilyCertificate {
  BucketKey key;
  int type = 2, level = kNullLevel, parent_level = kNullLevel;
  std::vector<std::size_t> trees;   // indices into trees2 or trees3
  bool strongly_disjoint = false;
  std::uint64_t hash = 0;
};

struct Leaf {
  BucketKey key;
  int n2 = kNullLevel, n3 = kNullLevel;
  std::size_t tree2 = 0, tree3 = 0;
  std::vector<std::size_t> members;
};

struct StoppingDecomposition {
  ExceptionalSet omega;
  std::vector<int> d, n1, n4, n2, n3;          // per tri-tile
  std::vector<GridInterval> bucket_interval;   // per tri-tile
  std::vector<TreeRecord> trees2, trees3;
  std::vector<FamilyCertificate> families;
  std::vector<Leaf> leaves;
  double E1 = 0.0, E2 = 0.0, E3 = 0.0, E4 = 0.0;

  bool recombines(std::size_t universe_size) const {
    std::vector<std::size_t> all;
    for (const auto& L : leaves) all.insert(all.end(), L.members.begin(), L.members.end());
    std::sort(all.begin(), all.end());
    if (all.size() != universe_size) return false;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i] != i) return false;
    return true;
  }
  bool certificates_ok() const {
    return std::all_of(families.begin(), families.end(), [](const FamilyCertificate& f) { return f.strongly_disjoint; });
  }
};

namespace detail {

inline std::string tile_line(const TriTile& P) {
  std::ostringstream os;
  write_universe(os, {P});
  std::string s = os.str();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

inline std::uint64_t family_hash(const std::vector<TriTile>& u, const std::vector<const Tree*>& trees, bool ok) {
  std::uint64_t h = fnv1a(ok ? "sd1" : "sd0");
  for (const Tree* T : trees) {
    h = fnv1a("|top " + tile_line(T->top), h);
    std::vector<std::size_t> m = T->members;
    std::sort(m.begin(), m.end());
    for (auto i : m) h = fnv1a(";" + tile_line(u[i]), h);
  }
  return h;
}

// Groups level trees into strongly disjoint families and records certificates.
inline void certify(const std::vector<TriTile>& u, std::vector<TreeRecord>& recs, const std::vector<std::size_t>& ids, int type,
                    const BucketKey& key, int level, int parent_level, std::vector<FamilyCertificate>& out) {
  std::vector<Tree> trees;
  for (auto i : ids) trees.push_back(recs[i].tree);
  auto fams = strongly_disjoint_families(u, trees, type);
  std::size_t cursor = 0;
  std::vector<char> used(ids.size(), 0);
  for (std::size_t f = 0; f < fams.size(); ++f) {
    FamilyCertificate C;
    C.key = key;
    C.type = type;
    C.level = level;
    C.parent_level = parent_level;
    std::vector<const Tree*> ptrs;
    for (const auto& T : fams[f]) {
      for (std::size_t a = 0; a < ids.size(); ++a) {
        if (used[a]) continue;
        const Tree& R = recs[ids[a]].tree;
        if (R.top == T.top && R.members == T.members) {
          used[a] = 1;
          C.trees.push_back(ids[a]);
          ptrs.push_back(&R);
          break;
        }
      }
    }
    C.strongly_disjoint = check_strongly_disjoint(u, fams[f], type);
    C.hash = family_hash(u, ptrs, C.strongly_disjoint);
    for (auto i : C.trees) {
      recs[i].family = out.size();
      recs[i].certificate = C.hash;
    }
    out.push_back(std::move(C));
    cursor += fams[f].size();
  }
  if (cursor != ids.size()) throw std::logic_error("certify: family split lost a tree");
}

}  // namespace detail

// n1, n4 from maximal intervals of E1 and E4 \ Omega, d from the distance to
// Omega^c, then size-2 trees (f2 on Q1) and, inside each size-2 level, size-3
// trees (f3 on Q2). Leaves are the nonempty T2 n T3 intersections.
inline StoppingDecomposition stopping_time(const std::vector<TriTile>& u, const StoppingInputs& in, const StoppingConfig& cfg = {}) {
  const GridSpec& s = in.spec;
  if (u.empty()) throw std::invalid_argument("stopping_time: empty universe");
  auto r1 = check_rank1(u);
  if (!r1.ok) throw std::invalid_argument("stopping_time: universe is not rank-1 (" + r1.reason + ")");
  if (in.E1.size() != s.num_points || in.E3.size() != s.num_points || in.E4.size() != s.num_points)
    throw std::invalid_argument("stopping_time: set size mismatch");
  StoppingDecomposition D;
  D.E1 = measure(s, in.E1);
  D.E3 = measure(s, in.E3);
  D.E4 = measure(s, in.E4);
  D.E2 = in.E2 >= 0.0 ? in.E2 : spectral_support_measure(in.F2);
  if (std::abs(D.E4 - 1.0) > cfg.e4_tolerance) throw std::invalid_argument("stopping_time: normalize |E4| = 1 first");
  if (!(D.E1 > 0.0) || !(D.E3 > 0.0)) throw std::invalid_argument("stopping_time: E1 and E3 must be nonempty");

  D.omega = build_exceptional_set(s, in.E1, in.E3, idft(in.F2), D.E2, cfg.C_omega, D.E4);
  auto dist = distance_to_complement(D.omega.mask);
  std::vector<bool> E4c(s.num_points);
  for (std::size_t j = 0; j < s.num_points; ++j) E4c[j] = in.E4[j] && !D.omega.mask[j];
  auto avg1 = dyadic_averages(s, mask_values(in.E1), cfg.smooth);
  auto avg4 = dyadic_averages(s, mask_values(E4c), cfg.smooth);

  std::size_t n = u.size();
  D.d.assign(n, 0);
  D.n1.assign(n, kNullLevel);
  D.n4.assign(n, kNullLevel);
  D.n2.assign(n, kNullLevel);
  D.n3.assign(n, kNullLevel);
  D.bucket_interval.assign(n, {});
  std::map<BucketKey, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < n; ++i) {
    GridInterval I = grid_interval(u[i].I, s);
    D.d[i] = distance_level(dist, I);
    D.n1[i] = dyadic_level(max_ancestor_average(avg1, I));
    D.n4[i] = dyadic_level(max_ancestor_average(avg4, I));
    GridInterval B = I;
    if (D.n1[i] != kNullLevel) B = containing_maximal(avg1, I, D.n1[i]);
    if (D.n4[i] != kNullLevel) {
      GridInterval B4 = containing_maximal(avg4, I, D.n4[i]);
      if (B4.len < B.len || D.n1[i] == kNullLevel) B = B4;
    }
    if (D.n1[i] == kNullLevel && D.n4[i] == kNullLevel) B = GridInterval{0, s.num_points, 0.0};
    D.bucket_interval[i] = B;
    buckets[{D.d[i], D.n1[i], D.n4[i], B.start, B.len}].push_back(i);
  }

  auto w2 = tile_weights(u, in.F2, 1, cfg.three_packet ? 3 : 1);
  auto w3 = tile_weights(u, in.F3, 2, 1);
  for (const auto& [key, idx] : buckets) {
    auto t2 = size_stopping(u, idx, 2, w2);
    std::map<int, std::vector<std::size_t>> by_n2;
    for (auto& L : t2) {
      TreeRecord R;
      R.key = key;
      R.n2 = L.level;
      R.tree = std::move(L.tree);
      R.value = L.value;
      for (auto m : R.tree.members) D.n2[m] = R.n2;
      by_n2[R.n2].push_back(D.trees2.size());
      D.trees2.push_back(std::move(R));
    }
    for (const auto& [lev2, ids2] : by_n2) {
      detail::certify(u, D.trees2, ids2, 2, key, lev2, kNullLevel, D.families);
      std::vector<std::size_t> level_set;
      for (auto t : ids2) level_set.insert(level_set.end(), D.trees2[t].tree.members.begin(), D.trees2[t].tree.members.end());
      std::sort(level_set.begin(), level_set.end());
      auto t3 = size_stopping(u, level_set, 3, w3);
      std::map<int, std::vector<std::size_t>> by_n3;
      for (auto& L : t3) {
        TreeRecord R;
        R.key = key;
        R.n2 = lev2;
        R.n3 = L.level;
        R.tree = std::move(L.tree);
        R.value = L.value;
        for (auto m : R.tree.members) D.n3[m] = R.n3;
        by_n3[R.n3].push_back(D.trees3.size());
        D.trees3.push_back(std::move(R));
      }
      for (const auto& [lev3, ids3] : by_n3) detail::certify(u, D.trees3, ids3, 3, key, lev3, lev2, D.families);
      // Leaves: T2 n T3 over the trees of this (bucket, n2).
      std::map<std::size_t, std::size_t> owner2;
      for (auto t : ids2)
        for (auto m : D.trees2[t].tree.members) owner2[m] = t;
      for (const auto& [lev3, ids3] : by_n3)
        for (auto t3i : ids3) {
          std::map<std::size_t, std::vector<std::size_t>> split;
          for (auto m : D.trees3[t3i].tree.members) split[owner2.at(m)].push_back(m);
          for (auto& [t2i, mem] : split) {
            std::sort(mem.begin(), mem.end());
            D.leaves.push_back({key, lev2, lev3, t2i, t3i, std::move(mem)});
          }
        }
    }
  }
  return D;
}

// One JSON object per extracted tree.
inline std::string audit_jsonl(const std::vector<TriTile>& u, const StoppingDecomposition& D, const GridSpec& s) {
  (void)u;
  std::string out;
  auto lvl = [](int n) { return n == kNullLevel ? json(nullptr) : json(n); };
  auto emit = [&](const TreeRecord& R, int type) {
    json j;
    j["type"] = type;
    json level = json::array({R.key.d, lvl(R.key.n1), lvl(R.key.n4), lvl(R.n2)});
    if (type == 3) level.push_back(lvl(R.n3));
    j["level"] = level;
    GridInterval I{R.key.start, R.key.len, 0.0};
    j["interval"] = json::array({I.lo(s), I.hi(s)});
    j["top"] = detail::tile_line(R.tree.top);
    j["members"] = R.tree.members.size();
    j["size"] = R.value;
    j["family"] = R.family;
    j["certificate"] = hex64(R.certificate);
    out += j.dump() + "\n";
  };
  for (const auto& R : D.trees2) emit(R, 2);
  for (const auto& R : D.trees3) emit(R, 3);
  return out;
}

// ---- energy estimates ----------------------------------------------------

struct EnergyRow {
  std::string name;
  std::vector<int> key;
  double lhs = 0.0, majorant = 0.0, ratio = 0.0;
};

struct EnergyReport {
  std::vector<EnergyRow> rows;
  double max_ratio = 0.0;
  std::string worst;
  bool ok(double C) const { return max_ratio <= C; }
};

// Sum |I_T| over strongly disjoint size-2 families against
//   2^{n2} |E2| |I|                                     (per bucket interval)
//   min{2^{2 n2}|E2|, 2^{n2}|E2| min{2^{n1}|E1|, 2^{n4}}} (summed over I)
// and sum_{I} |I| against min{2^{n1}|E1|, 2^{n4}}.
inline EnergyReport verify_energy_estimate(const std::vector<TriTile>& u, const StoppingDecomposition& D, const GridSpec& s) {
  if (!D.certificates_ok()) throw std::invalid_argument("verify_energy_estimate: invalid strong-disjointness certificate");
  (void)u;
  EnergyReport rep;
  auto add = [&](std::string name, std::vector<int> key, double lhs, double maj) {
    EnergyRow r{std::move(name), std::move(key), lhs, maj, maj > 0.0 ? lhs / maj : (lhs > 0.0 ? inf : 0.0)};
    if (r.ratio > rep.max_ratio) {
      rep.max_ratio = r.ratio;
      rep.worst = r.name;
    }
    rep.rows.push_back(std::move(r));
  };
  std::map<std::array<int, 4>, double> el11;
  std::map<std::array<int, 2>, std::map<std::pair<std::size_t, std::size_t>, double>> el10;
  for (const auto& F : D.families) {
    if (F.type != 2 || F.level == kNullLevel || F.key.n1 == kNullLevel || F.key.n4 == kNullLevel) continue;
    double sum = 0.0;
    for (auto t : F.trees) sum += to_double(D.trees2[t].tree.top.I.length());
    double Ilen = static_cast<double>(F.key.len) * s.dx();
    add("toy_energy", {F.key.d, F.key.n1, F.key.n4, F.level}, sum, std::ldexp(D.E2, F.level) * Ilen);
    el11[{F.key.d, F.key.n1, F.key.n4, F.level}] += sum;
    el10[{F.key.n1, F.key.n4}][{F.key.start, F.key.len}] = Ilen;
  }
  for (const auto& [k, sum] : el11) {
    double m = std::min(std::ldexp(D.E1, k[1]), std::ldexp(D.E4, k[2]));
    add("el11", {k[0], k[1], k[2], k[3]}, sum, std::min(std::ldexp(D.E2, 2 * k[3]), std::ldexp(D.E2, k[3]) * m));
  }
  for (const auto& [k, intervals] : el10) {
    double sum = 0.0;
    for (const auto& [iv, len] : intervals) sum += len;
    add("el10", {k[0], k[1]}, sum, std::min(std::ldexp(D.E1, k[0]), std::ldexp(D.E4, k[1])));
  }
  return rep;
}

// ---- scale-one model -----------------------------------------------------

inline void require_scale_one(const std::vector<TriTile>& u, const char* who) {
  for (const auto& P : u)
    if (P.I.j != 0) throw std::invalid_argument(std::string(who) + ": universe has mixed scales");
}

struct StackReport {
  std::size_t count = 0;                                   // largest stack over any level
  std::map<std::array<int, 3>, std::size_t> per_level;      // sup_I stack size
  double wiener_norm = 0.0;                                 // ||f2^||_1
  double max_ratio = 0.0;                                   // count / (2^{n2} ||f2^||_1)
  std::array<int, 3> worst{0, 0, 0};
};

inline std::array<int, 3> scale_one_levels(const TriTile& P, const cplx& c1, const cplx& c2, const cplx& c3) {
  double s = std::sqrt(to_double(P.I.length()));
  return {dyadic_level(std::abs(c1) / s), dyadic_level(std::abs(c2) / s), dyadic_level(std::abs(c3) / s)};
}

inline std::vector<cplx> lacunary_coefficients(const std::vector<TriTile>& u, const SpectralFunction& F) {
  std::vector<cplx> c;
  for (const auto& P : u) c.push_back(pair_band(F, lacunary_band(P.I, F.spec)));
  return c;
}

// #_{n1,n2,n3} = sup_I |{Q in level set : I_Q = I}| against 2^{n2} ||f2^||_1.
inline StackReport stack_count(const std::vector<TriTile>& u, const SpectralFunction& F1, const SpectralFunction& F2, const SpectralFunction& F3) {
  require_scale_one(u, "stack_count");
  StackReport rep;
  for (const auto& v : F2.coeffs) rep.wiener_norm += std::abs(v);
  rep.wiener_norm *= F2.spec.dxi();
  if (u.empty()) return rep;
  auto c1 = tile_coefficients(u, F1, 1), c2 = tile_coefficients(u, F2, 2);
  auto c3 = lacunary_coefficients(u, F3);
  std::map<std::array<int, 3>, std::map<long long, std::size_t>> stacks;
  for (std::size_t i = 0; i < u.size(); ++i) {
    auto lv = scale_one_levels(u[i], c1[i], c2[i], c3[i]);
    if (lv[1] == kNullLevel) continue;
    ++stacks[lv][u[i].I.k];
  }
  for (const auto& [lv, byI] : stacks) {
    std::size_t m = 0;
    for (const auto& [k, c] : byI) m = std::max(m, c);
    rep.per_level[lv] = m;
    rep.count = std::max(rep.count, m);
    double ratio = static_cast<double>(m) / (std::ldexp(1.0, lv[1]) * rep.wiener_norm);
    if (ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.worst = lv;
    }
  }
  return rep;
}

struct FormBuckets {
  cplx total = 0.0;
  std::map<std::array<int, 4>, cplx> buckets;  // (n1, n2, n3, d)
  cplx bucket_sum() const {
    cplx s = 0.0;
    for (const auto& [k, v] : buckets) s += v;
    return s;
  }
};

// sum_P |I_P|^{-1} <f1, Phi_P1> <f2, Phi_P2> <f3, Phi^lac_P>.
inline FormBuckets model_form_scale1(const std::vector<TriTile>& u, const SpectralFunction& F1, const SpectralFunction& F2,
                                     const SpectralFunction& F3, const std::vector<bool>* omega = nullptr) {
  require_scale_one(u, "model_form_scale1");
  FormBuckets out;
  if (u.empty()) return out;
  auto c1 = tile_coefficients(u, F1, 1), c2 = tile_coefficients(u, F2, 2);
  auto c3 = lacunary_coefficients(u, F3);
  std::vector<double> dist;
  if (omega) dist = distance_to_complement(*omega);
  for (std::size_t i = 0; i < u.size(); ++i) {
    cplx term = c1[i] * c2[i] * c3[i] / to_double(u[i].I.length());
    auto lv = scale_one_levels(u[i], c1[i], c2[i], c3[i]);
    int d = omega ? distance_level(dist, grid_interval(u[i].I, F1.spec)) : 0;
    out.total += term;
    out.buckets[{lv[0], lv[1], lv[2], d}] += term;
  }
  return out;
}

// ---- toy model -----------------------------------------------------------

struct FormInputs {
  GridSpec spec;
  SpectralFunction F1, F2, F3, F4;
  int decay_N = 8;
};

namespace detail {

// (1 + dist(x, I)/|I|)^-N on the lattice, periodic.
inline std::vector<double> tilde_indicator(const GridInterval& I, std::size_t n, int N) {
  std::vector<double> v(n);
  for (std::size_t y = 0; y < n; ++y) {
    double d = y < I.len ? 0.0 : static_cast<double>(std::min(y - I.len + 1, n - y));
    v[(I.start + y) % n] = std::pow(1.0 + d / static_cast<double>(I.len), -N);
  }
  return v;
}

// Periodic gap between two lattice intervals, in samples.
inline double interval_gap(const GridInterval& a, const GridInterval& b, std::size_t n) {
  auto one_way = [n](const GridInterval& p, const GridInterval& q) {
    // distance going right from the end of p to the start of q
    return static_cast<double>((q.start + n - (p.start + p.len) % n) % n);
  };
  bool overlap = a.start < b.start + b.len && b.start < a.start + a.len;
  if (overlap) return 0.0;
  return std::min(one_way(a, b), one_way(b, a));
}

inline bool frequency_contained(const DyadicInterval& inner, const DyadicInterval& outer) {
  return outer.span().contains(inner.span()) && outer.length() > inner.length();
}

}  // namespace detail

struct ToyForm {
  double full = 0.0, restricted = 0.0;
  std::map<int, double> by_distance;   // l = floor(log2(1 + dist(I_P, I_Q)/|I_Q|))
  std::size_t pairs = 0, nested_pairs = 0;
  double relative_difference() const { return full > 0.0 ? (full - restricted) / full : 0.0; }
};

inline void require_scale_gap(const TriTile& Q, int k0, const GridSpec& s) {
  if (k0 < 0) throw std::invalid_argument("toy_model_form: k0 must be >= 0");
  Rat L(static_cast<long long>(s.period)), N(static_cast<long long>(s.num_points));
  if (Q.I.j - k0 < -60 || Q.I.length() * N / (L * pow2(k0)) < Rat(1))
    throw std::invalid_argument("toy_model_form: scale gap below lattice resolution");
  if (pow2(k0) / Q.I.length() * Rat(9, 10) * L / Rat(2) > Rat(static_cast<long long>(s.kmax())))
    throw std::invalid_argument("toy_model_form: scale gap exceeds the lattice bandwidth");
}

// sum over Q in `members` (all of Qs when empty) and P with |I_P| = 2^-k0 |I_Q|
// and omega_Q1 strictly inside omega_P2 of
//   |<f4,Phi_-P1><f1,Phi_P1><1~_IP, 1~_IQ><f2,Phi_Q1><f3,Phi_Q2>| / (|I_Q||I_P|);
// `restricted` keeps I_P inside I_Q.
inline ToyForm toy_model_form(const std::vector<TriTile>& Qs, const std::vector<TriTile>& Ps, int k0, const FormInputs& in,
                              const std::vector<std::size_t>& members = {}) {
  const GridSpec& s = in.spec;
  std::vector<std::size_t> qidx = members;
  if (qidx.empty())
    for (std::size_t i = 0; i < Qs.size(); ++i) qidx.push_back(i);
  for (auto q : qidx) require_scale_gap(Qs[q], k0, s);
  ToyForm out;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> tilde;
  auto tl = [&](const GridInterval& I) -> const std::vector<double>& {
    auto key = std::make_pair(I.start, I.len);
    auto it = tilde.find(key);
    if (it == tilde.end()) it = tilde.emplace(key, detail::tilde_indicator(I, s.num_points, in.decay_N)).first;
    return it->second;
  };
  std::vector<double> pcoef(Ps.size(), -1.0);
  for (auto q : qidx) {
    const TriTile& Q = Qs[q];
    int jp = Q.I.j - k0;
    cplx a = pair_band(in.F2, packet_band(Q.tile(1), s));
    cplx b = pair_band(in.F3, packet_band(Q.tile(2), s));
    double qfac = std::abs(a * b);
    GridInterval IQ = grid_interval(Q.I, s);
    const auto& tQ = tl(IQ);
    for (std::size_t p = 0; p < Ps.size(); ++p) {
      const TriTile& P = Ps[p];
      if (P.I.j != jp || !detail::frequency_contained(Q.freq(1), P.freq(2))) continue;
      if (pcoef[p] < 0.0) {
        auto b1 = packet_band(P.tile(1), s);
        pcoef[p] = std::abs(pair_band(in.F4, reflected_band(b1, s)) * pair_band(in.F1, b1));
      }
      GridInterval IP = grid_interval(P.I, s);
      const auto& tP = tl(IP);
      double overlap = 0.0;
      for (std::size_t x = 0; x < s.num_points; ++x) overlap += tP[x] * tQ[x];
      overlap *= s.dx();
      double term = pcoef[p] * overlap * qfac / (to_double(Q.I.length()) * to_double(P.I.length()));
      double gap = detail::interval_gap(IP, IQ, s.num_points);
      int l = static_cast<int>(std::floor(std::log2(1.0 + gap / static_cast<double>(IQ.len))));
      out.full += term;
      out.by_distance[l] += term;
      ++out.pairs;
      if (Q.I.span().contains(P.I.span())) {
        out.restricted += term;
        ++out.nested_pairs;
      }
    }
  }
  return out;
}

// Children of each Q at scale |I_Q| 2^-k0 inside I_Q, on the same rank-1 line,
// with omega_P2 containing omega_Q1.
inline std::vector<TriTile> generate_children(const std::vector<TriTile>& Qs, int k0, const Rank1Config& cfg = {}) {
  std::vector<TriTile> out;
  for (const auto& Q : Qs) {
    int sp = Q.I.j - k0;
    std::array<Rat, 3> sig = Q.shift();
    DyadicInterval probe = interval_containing(-sp, Q.freq(1).center(), sig[1]);
    // omega_2 position is a_2 n + b_2
    if ((probe.k - cfg.b[1]) % cfg.a[1] != 0) continue;
    long long n = (probe.k - cfg.b[1]) / cfg.a[1];
    long long slots = 1LL << k0;
    for (long long t = 0; t < slots; ++t) {
      TriTile P = rank1_tritile(sp, Q.I.k * slots + t, n, sig, cfg.a, cfg.b);
      if (!detail::frequency_contained(Q.freq(1), P.freq(2))) continue;
      out.push_back(P);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---- Taylor split of the main model on one tree --------------------------

using EtaFn = std::function<double(const TriTile& P, double xi, int r)>;

// Order-8 bump on 2 omega_P2, value 1 at its centre.
inline double default_eta(const TriTile& P, double xi, int r) {
  double w = 2.0 * to_double(P.freq(2).length());
  return profile::bump(profile::kOrder, w, xi - to_double(P.freq(2).center()), r);
}

struct TaylorConfig {
  int k0 = 3;
  int truncation = 32;
  int expansion_component = 1;   // c_T is the centre of the top's omega in this slot
  int decay_order = 4;
  double box = 1.0;              // remainder box c_Q +- box |omega_Q1|; 1, 2 or 4
  EtaFn eta = default_eta;
};

struct TaylorSplit {
  cplx Ia = 0.0, Ib1 = 0.0, Ib2 = 0.0, Ic1 = 0.0, Ic2 = 0.0, Ic3 = 0.0, II = 0.0;
  cplx II_exact = 0.0;           // remainder before truncating the lambda series
  cplx unsplit = 0.0;
  double tail_bound = 0.0;
  double max_coefficient = 0.0;  // max |c^lambda|
  double decay_constant = 0.0;   // max |c^lambda| (1+|lambda|)^M / (|I_P|/|I_Q|)^3
  std::size_t pairs = 0;
  int truncation = 0;

  cplx Ib() const { return Ib1 + Ib2; }
  cplx Ic() const { return Ic1 + Ic2 + Ic3; }
  cplx total() const { return Ia + Ib() + Ic() + II; }
  bool reconstructs(double slack = 1e-9) const {
    double scale = std::max({std::abs(unsplit), std::abs(Ia), 1e-300});
    return std::abs(total() - unsplit) <= tail_bound + slack * scale;
  }
};

// Per (Q, P) pair: w = |I_Q|^-1/2 |I_P|^-1/2 <f4,Phi_-P1><f1,Phi_P1><Phi^nl_P, Phi^lac_Q><f3,Phi_Q2>
// multiplies <f2^ eta_P2^, Phi_Q1^>. eta is expanded to second order at c_T and
// the Ib, Ic pieces are recentred at c_Q (the centre of omega_Q1). The remainder
// R eta_omegaQ1 is a Fourier series on the box c_Q +- |omega_Q1|.
inline TaylorSplit taylor_split_tree(const std::vector<TriTile>& Qs, const Tree& T, const std::vector<TriTile>& Ps, const FormInputs& in,
                                     const TaylorConfig& cfg = {}) {
  if (cfg.truncation < 1) throw std::invalid_argument("taylor_split_tree: truncation must be >= 1");
  if (!tree_valid(Qs, T)) throw std::invalid_argument("taylor_split_tree: not a valid tree");
  const GridSpec& s = in.spec;
  TaylorSplit out;
  out.truncation = cfg.truncation;
  double cT = to_double(T.top.freq(cfg.expansion_component).center());
  for (auto q : T.members) {
    const TriTile& Q = Qs[q];
    require_scale_gap(Q, cfg.k0, s);
    Tile Q1 = Q.tile(1);
    PacketBand phi = packet_band(Q1, s);
    double lenQ = to_double(Q.I.length());
    double cQ = to_double(Q1.omega.center());
    double wQ = to_double(Q1.omega.length());
    cplx A = 0.0, B = 0.0, Cc = 0.0;
    for (std::size_t i = 0; i < phi.values.size(); ++i) {
      long k = phi.k0 + static_cast<long>(i);
      double t = (s.xi(k) - cQ) * lenQ;
      cplx v = in.F2.at(k) * std::conj(phi.values[i]);
      A += v;
      B += v * t;
      Cc += v * t * t;
    }
    A *= s.dxi();
    B *= s.dxi();
    Cc *= s.dxi();
    cplx q3 = pair_band(in.F3, packet_band(Q.tile(2), s));
    PacketBand lacQ = lacunary_band(Q.I, s);
    double Kd = 2.0 * cfg.box * wQ * s.period;
    if (std::abs(Kd - std::round(Kd)) > 1e-9 || !is_pow2(static_cast<std::size_t>(std::llround(Kd))))
      throw std::invalid_argument("taylor_split_tree: remainder box is not a power-of-two lattice block");
    std::size_t K = static_cast<std::size_t>(std::llround(Kd));
    long kb = static_cast<long>(std::llround((cQ - cfg.box * wQ) * s.period));
    for (const auto& P : Ps) {
      if (P.I.j != Q.I.j - cfg.k0 || !Q.I.span().contains(P.I.span())) continue;
      if (!detail::frequency_contained(Q.freq(1), P.freq(2))) continue;
      ++out.pairs;
      double lenP = to_double(P.I.length());
      auto b1 = packet_band(P.tile(1), s);
      cplx w = pair_band(in.F4, reflected_band(b1, s)) * pair_band(in.F1, b1) * pair_bands(lowpass_band(P.I, s), lacQ, s) * q3 /
               std::sqrt(lenQ * lenP);
      double e0 = cfg.eta(P, cT, 0), e1 = cfg.eta(P, cT, 1), e2 = cfg.eta(P, cT, 2);
      double dQ = cQ - cT;
      out.Ia += w * e0 * A;
      out.Ib1 += w * e1 * B / lenQ;
      out.Ib2 += w * e1 * dQ * A;
      out.Ic1 += w * 0.5 * e2 * Cc / (lenQ * lenQ);
      out.Ic2 += w * 0.5 * e2 * 2.0 * dQ * B / lenQ;
      out.Ic3 += w * 0.5 * e2 * dQ * dQ * A;
      // unsplit pairing
      cplx un = 0.0;
      for (std::size_t i = 0; i < phi.values.size(); ++i) {
        long k = phi.k0 + static_cast<long>(i);
        un += in.F2.at(k) * cfg.eta(P, s.xi(k), 0) * std::conj(phi.values[i]);
      }
      out.unsplit += w * un * s.dxi();
      // remainder coefficients
      std::vector<cplx> g(K), h(K);
      double mass = 0.0;
      for (std::size_t m = 0; m < K; ++m) {
        long k = kb + static_cast<long>(m);
        double xi = s.xi(k);
        double dx = xi - cT;
        double R = cfg.eta(P, xi, 0) - e0 - e1 * dx - 0.5 * e2 * dx * dx;
        double plateau = profile::plateau(profile::kOrder, cQ - 0.45 * wQ, cQ + 0.45 * wQ, (cfg.box - 0.5) * wQ, xi);
        g[m] = R * plateau;
        long idx = k - phi.k0;
        cplx ph = (idx >= 0 && idx < static_cast<long>(phi.values.size())) ? phi.values[static_cast<std::size_t>(idx)] : cplx(0.0);
        h[m] = in.F2.at(k) * std::conj(ph);
        mass += std::abs(h[m]);
      }
      mass *= s.dxi();
      cplx exact = 0.0;
      for (std::size_t m = 0; m < K; ++m) exact += g[m] * h[m];
      out.II_exact += w * exact * s.dxi();
      std::vector<cplx> c = g;
      fft_forward(c);  // c[l] = sum_m g_m e^{-2 pi i l m / K}
      for (auto& v : c) v /= static_cast<double>(K);
      double ratio3 = std::pow(lenP / lenQ, 3);
      double tail = 0.0;
      cplx trunc = 0.0;
      for (std::size_t l = 0; l < K; ++l) {
        long lam = l < K / 2 ? static_cast<long>(l) : static_cast<long>(l) - static_cast<long>(K);
        double mag = std::abs(c[l]);
        out.max_coefficient = std::max(out.max_coefficient, mag);
        out.decay_constant = std::max(out.decay_constant, mag * std::pow(1.0 + std::abs(lam), cfg.decay_order) / ratio3);
        if (std::abs(lam) > cfg.truncation) {
          tail += mag;
          continue;
        }
        cplx acc = 0.0;
        for (std::size_t m = 0; m < K; ++m) acc += h[m] * cis(static_cast<double>(lam) * static_cast<double>(m) / static_cast<double>(K));
        trunc += c[l] * acc;
      }
      out.II += w * trunc * s.dxi();
      out.tail_bound += std::abs(w) * tail * mass;
    }
  }
  return out;
}

// ---- tree estimate and summation -----------------------------------------

struct TreeEstimate {
  double lhs = 0.0, rhs = 0.0, constant = 0.0;
  bool within_budget = true;
};

// lhs against 2^{2 k0} 2^{-(n1+n2+n3+n4)} |I_T|.
inline TreeEstimate verify_tree_estimate(double lhs, const std::array<int, 4>& n, double IT, int k0, double budget = inf) {
  TreeEstimate r;
  r.lhs = lhs;
  for (int v : n)
    if (v == kNullLevel) {
      r.rhs = 0.0;
      r.constant = lhs > 0.0 ? inf : 0.0;
      r.within_budget = lhs == 0.0;
      return r;
    }
  r.rhs = std::ldexp(IT, 2 * k0 - n[0] - n[1] - n[2] - n[3]);
  r.constant = r.rhs > 0.0 ? lhs / r.rhs : (lhs > 0.0 ? inf : 0.0);
  r.within_budget = r.constant <= budget;
  return r;
}

struct Theta {
  double t1 = 0.0, t2 = 0.0, t3 = 0.0;
};

inline void validate_theta(const Theta& th) {
  for (double t : {th.t1, th.t2, th.t3})
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("summation_envelope: theta components must lie in [0, 1]");
  if (th.t1 + th.t2 + th.t3 > 1.0 + 1e-12) throw std::invalid_argument("summation_envelope: theta must sum to at most 1");
  if (!(2.0 * th.t1 < 1.0)) throw std::invalid_argument("summation_envelope: need 2 theta1 < 1");
  if (!(th.t2 < 1.0) || !(th.t2 + 2.0 * th.t3 < 1.0)) throw std::invalid_argument("summation_envelope: need theta2 + 2 theta3 < 1");
}

struct EnvelopeReport {
  double envelope = 0.0, measured = 0.0, ratio = 0.0;
  std::array<int, 3> cutoffs{0, 0, 0};
};

// K sum_{n_i >= N_i} 2^{-n1(1-2t1)} 2^{-n2(1-t2-2t3)} 2^{-n3(1-t2)} |E1|^t1 |E2|^{t2+t3} |E3|^t2,
// the theta-interpolation of the per-bucket majorants, against sum |bucket|.
inline EnvelopeReport summation_envelope(const std::map<std::array<int, 3>, double>& buckets, const Theta& th, double E1, double E2, double E3,
                                         double K = 8.0, std::optional<std::array<int, 3>> cutoffs = std::nullopt) {
  validate_theta(th);
  EnvelopeReport r;
  bool any = false;
  std::array<int, 3> lo{INT_MAX, INT_MAX, INT_MAX};
  for (const auto& [n, v] : buckets) {
    if (v == 0.0) continue;
    for (int i = 0; i < 3; ++i)
      if (n[i] == kNullLevel) throw std::invalid_argument("summation_envelope: nonzero bucket at the null level");
    any = true;
    r.measured += std::abs(v);
    for (int i = 0; i < 3; ++i) lo[i] = std::min(lo[i], n[i]);
  }
  if (!any) return r;
  if (cutoffs) {
    for (const auto& [n, v] : buckets)
      for (int i = 0; i < 3; ++i)
        if (v != 0.0 && n[i] < (*cutoffs)[i]) throw std::invalid_argument("summation_envelope: bucket below the size restriction");
    lo = *cutoffs;
  }
  r.cutoffs = lo;
  std::array<double, 3> a{1.0 - 2.0 * th.t1, 1.0 - th.t2 - 2.0 * th.t3, 1.0 - th.t2};
  double env = K * std::pow(E1, th.t1) * std::pow(E2, th.t2 + th.t3) * std::pow(E3, th.t2);
  for (int i = 0; i < 3; ++i) env *= std::exp2(-lo[i] * a[i]) / (1.0 - std::exp2(-a[i]));
  r.envelope = env;
  r.ratio = r.measured > 0.0 ? env / r.measured : inf;
  return r;
}

}  // namespace stf
