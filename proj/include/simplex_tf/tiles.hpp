#pragma once

// Shifted dyadic meshes, tiles and tri-tiles with exact rational endpoints,
// wave packets, the tile orders, rank-1 checks, trees and strong disjointness.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "grid.hpp"
#include "profiles.hpp"
#include "util.hpp"

namespace stf {

using Rat = boost::rational<long long>;

inline Rat pow2(int j) {
  if (j > 60 || j < -60) throw std::out_of_range("pow2: exponent too large");
  return j >= 0 ? Rat(1LL << j) : Rat(1, 1LL << -j);
}

inline long long floor_rat(const Rat& r) {
  long long q = r.numerator() / r.denominator();
  if (r.numerator() % r.denominator() != 0 && r.numerator() < 0) --q;
  return q;
}

inline double to_double(const Rat& r) { return boost::rational_cast<double>(r); }

inline std::string rat_str(const Rat& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline Rat parse_rat(const std::string& s) {
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return Rat(std::stoll(s));
    return Rat(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
  } catch (const std::exception&) {
    throw std::invalid_argument("parse_rat: bad rational '" + s + "'");
  }
}

inline bool valid_shift(const Rat& s) { return s == Rat(0) || s == Rat(1, 3) || s == Rat(2, 3); }

// Half-open interval [lo, hi) with rational endpoints.
struct Span {
  Rat lo, hi;
  Rat length() const { return hi - lo; }
  Rat center() const { return (lo + hi) / 2; }
  Span dilate(const Rat& c) const {
    Rat h = c * length() / 2;
    return {center() - h, center() + h};
  }
  bool contains(const Span& o) const { return lo <= o.lo && o.hi <= hi; }
  bool contains(const Rat& x) const { return lo <= x && x < hi; }
  bool intersects(const Span& o) const { return lo < o.hi && o.lo < hi; }
  bool operator==(const Span& o) const { return lo == o.lo && hi == o.hi; }
};

// 2^j (k + [0,1) + (-1)^j sigma).
struct DyadicInterval {
  int j = 0;
  long long k = 0;
  Rat sigma = 0;

  DyadicInterval() = default;
  DyadicInterval(int j_, long long k_, Rat s = 0) : j(j_), k(k_), sigma(s) {
    if (!valid_shift(sigma)) throw std::invalid_argument("DyadicInterval: shift must be 0, 1/3 or 2/3");
  }

  Rat offset() const { return (j % 2 == 0) ? sigma : -sigma; }
  Rat left() const { return pow2(j) * (Rat(k) + offset()); }
  Rat length() const { return pow2(j); }
  Rat right() const { return left() + length(); }
  Rat center() const { return left() + length() / 2; }
  Span span() const { return {left(), right()}; }
  Span dilate(const Rat& c) const { return span().dilate(c); }

  bool operator==(const DyadicInterval& o) const { return j == o.j && k == o.k && sigma == o.sigma; }
  bool operator!=(const DyadicInterval& o) const { return !(*this == o); }
  bool operator<(const DyadicInterval& o) const {
    if (j != o.j) return j < o.j;
    if (k != o.k) return k < o.k;
    return sigma < o.sigma;
  }
};

// The grid interval of D_sigma at scale j holding the point x.
inline DyadicInterval interval_containing(int j, const Rat& x, const Rat& sigma) {
  DyadicInterval probe(j, 0, sigma);
  return DyadicInterval(j, floor_rat(x / pow2(j) - probe.offset()), sigma);
}

inline void assert_area_one(const DyadicInterval& I, const DyadicInterval& w) {
  if (I.length() * w.length() != Rat(1)) throw std::logic_error("tile area is not 1");
}

struct Tile {
  DyadicInterval I, omega;
  Tile() = default;
  Tile(DyadicInterval i, DyadicInterval w) : I(i), omega(w) {
    if (I.sigma != Rat(0)) throw std::invalid_argument("Tile: time interval must be unshifted");
    assert_area_one(I, omega);
  }
  bool operator==(const Tile& o) const { return I == o.I && omega == o.omega; }
  bool operator!=(const Tile& o) const { return !(*this == o); }
};

struct TriTile {
  DyadicInterval I;
  std::array<DyadicInterval, 3> omega;

  TriTile() = default;
  TriTile(DyadicInterval i, std::array<DyadicInterval, 3> w) : I(i), omega(w) {
    if (I.sigma != Rat(0)) throw std::invalid_argument("TriTile: time interval must be unshifted");
    for (const auto& o : omega) assert_area_one(I, o);
  }
  // Components are numbered 1..3.
  Tile tile(int i) const { return Tile(I, omega.at(static_cast<std::size_t>(i - 1))); }
  const DyadicInterval& freq(int i) const { return omega.at(static_cast<std::size_t>(i - 1)); }
  std::array<Rat, 3> shift() const { return {omega[0].sigma, omega[1].sigma, omega[2].sigma}; }
  std::array<Span, 3> cube() const { return {omega[0].span(), omega[1].span(), omega[2].span()}; }

  bool operator==(const TriTile& o) const { return I == o.I && omega == o.omega; }
  bool operator<(const TriTile& o) const {
    if (I != o.I) return I < o.I;
    return omega < o.omega;
  }
};

// ---- shifted meshes ------------------------------------------------------

struct Cube {
  int j = 0;
  std::vector<long long> k;
  std::vector<Rat> sigma;

  std::size_t dim() const { return k.size(); }
  DyadicInterval side(std::size_t i) const { return DyadicInterval(j, k[i], sigma[i]); }
  Rat length() const { return pow2(j); }
  bool operator==(const Cube& o) const { return j == o.j && k == o.k && sigma == o.sigma; }
};

// Cubes of D^n_sigma with scale in [j_lo, j_hi] lying inside box^n.
inline std::vector<Cube> shifted_mesh(std::size_t n, const std::vector<Rat>& sigma, int j_lo, int j_hi, const Span& box) {
  if (sigma.size() != n) throw std::invalid_argument("shifted_mesh: shift dimension mismatch");
  for (const auto& s : sigma)
    if (!valid_shift(s)) throw std::invalid_argument("shifted_mesh: shift must be 0, 1/3 or 2/3");
  std::vector<Cube> out;
  for (int j = j_lo; j <= j_hi; ++j) {
    std::vector<std::vector<long long>> axis(n);
    for (std::size_t i = 0; i < n; ++i) {
      DyadicInterval probe(j, 0, sigma[i]);
      long long k0 = floor_rat(box.lo / pow2(j) - probe.offset()) - 1;
      for (long long k = k0;; ++k) {
        DyadicInterval d(j, k, sigma[i]);
        if (d.left() >= box.hi) break;
        if (box.contains(d.span())) axis[i].push_back(k);
      }
    }
    std::vector<std::size_t> idx(n, 0);
    bool any = std::all_of(axis.begin(), axis.end(), [](const auto& a) { return !a.empty(); });
    while (any) {
      Cube c{j, std::vector<long long>(n), sigma};
      for (std::size_t i = 0; i < n; ++i) c.k[i] = axis[i][idx[i]];
      out.push_back(std::move(c));
      std::size_t i = 0;
      while (i < n && ++idx[i] == axis[i].size()) idx[i++] = 0;
      if (i == n) break;
    }
  }
  return out;
}

// Smallest shifted cube Q' with Q inside (7/10)Q'; each axis picks its own shift.
inline Cube covering_cube(const std::vector<Rat>& lo, const Rat& side) {
  if (side <= Rat(0) || lo.empty()) throw std::invalid_argument("covering_cube: empty cube");
  const Rat shifts[3] = {Rat(0), Rat(1, 3), Rat(2, 3)};
  int j = 0;
  while (pow2(j) * Rat(7, 10) < side) ++j;
  while (j > -60 && pow2(j - 1) * Rat(7, 10) >= side) --j;
  for (;; ++j) {
    Cube c{j, std::vector<long long>(lo.size()), std::vector<Rat>(lo.size())};
    bool ok = true;
    for (std::size_t i = 0; i < lo.size() && ok; ++i) {
      Span q{lo[i], lo[i] + side};
      bool found = false;
      for (const auto& s : shifts) {
        auto d = interval_containing(j, q.center(), s);
        for (long long dk = -1; dk <= 1 && !found; ++dk) {
          DyadicInterval e(j, d.k + dk, s);
          if (e.dilate(Rat(7, 10)).contains(q)) {
            c.k[i] = e.k;
            c.sigma[i] = s;
            found = true;
          }
        }
        if (found) break;
      }
      ok = found;
    }
    if (ok) return c;
  }
}

// |Q| < |Q'| forces C|Q| < |Q'| (side lengths), equal sides force disjoint C-dilates.
inline bool sparse_pair(const Cube& a, const Cube& b, const Rat& C) {
  if (a == b) return true;
  if (a.j != b.j) {
    const Cube& s = a.j < b.j ? a : b;
    const Cube& l = a.j < b.j ? b : a;
    return C * s.length() < l.length();
  }
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (!a.side(i).dilate(C).intersects(b.side(i).dilate(C))) return true;
  return false;
}

inline bool is_sparse(const std::vector<Cube>& fam, const Rat& C) {
  for (std::size_t a = 0; a < fam.size(); ++a)
    for (std::size_t b = a + 1; b < fam.size(); ++b)
      if (!sparse_pair(fam[a], fam[b], C)) return false;
  return true;
}

// Greedy first-fit colouring by the pairwise sparseness predicate.
inline std::vector<std::vector<Cube>> sparse_split(const std::vector<Cube>& cubes, const Rat& C = Rat(128)) {
  for (const auto& c : cubes)
    if (c.sigma != cubes.front().sigma || c.dim() != cubes.front().dim())
      throw std::invalid_argument("sparse_split: cubes from different grids");
  std::vector<std::vector<Cube>> fams;
  for (const auto& c : cubes) {
    bool placed = false;
    for (auto& f : fams) {
      if (std::all_of(f.begin(), f.end(), [&](const Cube& o) { return sparse_pair(c, o, C); })) {
        f.push_back(c);
        placed = true;
        break;
      }
    }
    if (!placed) fams.push_back({c});
  }
  return fams;
}

// ---- order relations -----------------------------------------------------

struct TileRelation {
  bool lt = false, le = false, lesssim = false, lesssim_prime = false;
  bool none() const { return !lt && !le && !lesssim && !lesssim_prime; }
};

// Relations of p (the P' of the definitions) against q.
inline TileRelation tile_order(const Tile& p, const Tile& q, const Rat& C = Rat(128)) {
  TileRelation r;
  Span Ip = p.I.span(), Iq = q.I.span();
  r.lt = Iq.contains(Ip) && !(Ip == Iq) && p.omega.dilate(3).contains(q.omega.dilate(3));
  r.le = r.lt || p == q;
  r.lesssim = Iq.contains(Ip) && p.omega.dilate(C).contains(q.omega.dilate(C));
  r.lesssim_prime = r.lesssim && !r.le;
  return r;
}

inline bool tile_le(const Tile& p, const Tile& q) { return tile_order(p, q).le; }

struct Rank1Report {
  bool ok = true;
  int clause = 0;
  std::size_t first = 0, second = 0;
  std::string reason;
};

// The third clause is read with the larger interval on the upper tri-tile,
// |I_P| > C|I_P'|; with P'_j <= P_j the literal ordering is vacuous.
inline Rank1Report check_rank1(const std::vector<TriTile>& ps, const Rat& C_sep = Rat(128), const Rat& C_order = Rat(128)) {
  Rank1Report rep;
  auto fail = [&](int clause, std::size_t a, std::size_t b, std::string why) {
    rep.ok = false;
    rep.clause = clause;
    rep.first = a;
    rep.second = b;
    rep.reason = std::move(why);
    return rep;
  };
  for (std::size_t a = 0; a < ps.size(); ++a) {
    for (std::size_t b = 0; b < ps.size(); ++b) {
      if (a == b) continue;
      const TriTile& P = ps[a];
      const TriTile& Pp = ps[b];  // plays P'
      if (a < b && !(P == Pp))
        for (int i = 1; i <= 3; ++i)
          if (P.tile(i) == Pp.tile(i))
            return fail(1, a, b, "distinct tri-tiles share component " + std::to_string(i));
      if (!P.I.span().contains(Pp.I.span())) continue;  // every relation needs I_P' inside I_P
      for (int j = 1; j <= 3; ++j) {
        if (!tile_order(Pp.tile(j), P.tile(j), C_order).le) continue;
        for (int i = 1; i <= 3; ++i)
          if (!tile_order(Pp.tile(i), P.tile(i), C_order).lesssim)
            return fail(2, b, a, "P'_" + std::to_string(j) + " <= P_" + std::to_string(j) + " but P'_" + std::to_string(i) + " not <~ P_" + std::to_string(i));
        if (P.I.length() > C_sep * Pp.I.length())
          for (int i = 1; i <= 3; ++i)
            if (i != j && !tile_order(Pp.tile(i), P.tile(i), C_order).lesssim_prime)
              return fail(3, b, a, "separated scales but P'_" + std::to_string(i) + " not <~' P_" + std::to_string(i));
      }
    }
  }
  return rep;
}

// Tri-tiles along the line (xi, -xi, xi) offset by (0, 4, 8) cells, one per
// (scale, time slot, frequency cell).
struct Rank1Config {
  std::size_t count = 200;
  int s_lo = 0, s_hi = 3;          // |I| = 2^s
  long long time_cells = 64;       // I inside [0, time_cells)
  double xi_lo = -4.0, xi_hi = 4.0;
  std::array<int, 3> a{1, -1, 1};
  std::array<long long, 3> b{0, 4, 8};
  std::optional<std::array<Rat, 3>> shift;  // random when unset
};

inline TriTile rank1_tritile(int s, long long t, long long n, const std::array<Rat, 3>& sig, const std::array<int, 3>& a, const std::array<long long, 3>& b) {
  std::array<DyadicInterval, 3> w;
  for (std::size_t i = 0; i < 3; ++i) w[i] = DyadicInterval(-s, a[i] * n + b[i], sig[i]);
  return TriTile(DyadicInterval(s, t), w);
}

inline std::vector<TriTile> generate_rank1_universe(const Rank1Config& cfg, Rng& rng) {
  const Rat shifts[3] = {Rat(0), Rat(1, 3), Rat(2, 3)};
  std::array<Rat, 3> sig;
  if (cfg.shift) sig = *cfg.shift;
  else
    for (auto& s : sig) s = shifts[rng.integer(0, 2)];
  std::vector<TriTile> out;
  std::size_t attempts = 0;
  while (out.size() < cfg.count && attempts++ < 50 * cfg.count + 100) {
    int s = static_cast<int>(rng.integer(cfg.s_lo, cfg.s_hi));
    long long slots = std::max<long long>(1, cfg.time_cells >> std::max(s, 0));
    if (s < 0) slots = cfg.time_cells << -s;
    long long t = rng.integer(0, slots - 1);
    long long n = static_cast<long long>(std::floor(rng.uniform(cfg.xi_lo, cfg.xi_hi) * std::ldexp(1.0, s)));
    TriTile P = rank1_tritile(s, t, n, sig, cfg.a, cfg.b);
    if (std::find(out.begin(), out.end(), P) == out.end()) out.push_back(P);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- trees ---------------------------------------------------------------

struct Tree {
  int type = 1;
  TriTile top;
  std::vector<std::size_t> members;  // indices into the universe
};

inline bool tree_valid(const std::vector<TriTile>& u, const Tree& T) {
  for (auto m : T.members)
    if (!tile_le(u[m].tile(T.type), T.top.tile(T.type))) return false;
  return true;
}

// Candidate order for tops: larger |I|, then lower frequency, then earlier time.
inline bool top_before(const TriTile& a, const TriTile& b, int j) {
  if (a.I.j != b.I.j) return a.I.j > b.I.j;
  Rat fa = a.freq(j).left(), fb = b.freq(j).left();
  if (fa != fb) return fa < fb;
  return a.I.left() < b.I.left();
}

inline std::vector<Tree> build_trees(const std::vector<TriTile>& u, int j, const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> rest = subset;
  std::vector<Tree> trees;
  while (!rest.empty()) {
    auto it = std::min_element(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return top_before(u[a], u[b], j); });
    Tree T;
    T.type = j;
    T.top = u[*it];
    Tile top = T.top.tile(j);
    std::vector<std::size_t> keep;
    for (auto m : rest) (tile_le(u[m].tile(j), top) ? T.members : keep).push_back(m);
    rest.swap(keep);
    trees.push_back(std::move(T));
  }
  return trees;
}

inline std::vector<Tree> build_trees(const std::vector<TriTile>& u, int j) {
  std::vector<std::size_t> all(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) all[i] = i;
  return build_trees(u, j, all);
}

inline bool strongly_disjoint(const std::vector<TriTile>& u, const Tree& A, const Tree& B, int j) {
  Span IA = A.top.I.span(), IB = B.top.I.span();
  for (auto a : A.members) {
    Tile Pa = u[a].tile(j);
    Span wa = Pa.omega.dilate(2);
    for (auto b : B.members) {
      Tile Pb = u[b].tile(j);
      if (Pa == Pb) return false;
      if (wa.intersects(Pb.omega.dilate(2)))
        if (u[b].I.span().intersects(IA) || u[a].I.span().intersects(IB)) return false;
    }
  }
  return true;
}

inline bool check_strongly_disjoint(const std::vector<TriTile>& u, const std::vector<Tree>& trees, int j) {
  for (std::size_t a = 0; a < trees.size(); ++a)
    for (std::size_t b = a + 1; b < trees.size(); ++b)
      if (!strongly_disjoint(u, trees[a], trees[b], j)) return false;
  return true;
}

// Groups trees, in order, into families that are pairwise strongly disjoint.
inline std::vector<std::vector<Tree>> strongly_disjoint_families(const std::vector<TriTile>& u, const std::vector<Tree>& trees, int j) {
  std::vector<std::vector<Tree>> fams;
  for (const auto& T : trees) {
    bool placed = false;
    for (auto& f : fams)
      if (std::all_of(f.begin(), f.end(), [&](const Tree& o) { return strongly_disjoint(u, T, o, j); })) {
        f.push_back(T);
        placed = true;
        break;
      }
    if (!placed) fams.push_back({T});
  }
  return fams;
}

// ---- universe text format ------------------------------------------------
// One tri-tile per line: `j k k1 k2 k3 s1 s2 s3` where (j, k) is the time
// interval and k_i, s_i the frequency positions and shifts at scale -j.

inline void write_universe(std::ostream& os, const std::vector<TriTile>& u) {
  for (const auto& P : u) {
    os << P.I.j << ' ' << P.I.k;
    for (const auto& w : P.omega) os << ' ' << w.k;
    for (const auto& w : P.omega) os << ' ' << rat_str(w.sigma);
    os << '\n';
  }
}

inline std::vector<TriTile> read_universe(std::istream& is) {
  std::vector<TriTile> u;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 8) throw std::invalid_argument("read_universe: line " + std::to_string(lineno) + " needs 8 fields");
    try {
      int j = std::stoi(tok[0]);
      std::array<DyadicInterval, 3> w;
      for (std::size_t i = 0; i < 3; ++i) w[i] = DyadicInterval(-j, std::stoll(tok[2 + i]), parse_rat(tok[5 + i]));
      u.emplace_back(DyadicInterval(j, std::stoll(tok[1])), w);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("read_universe: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return u;
}

// ---- wave packets --------------------------------------------------------
// Base profile: order-8 B-spline bump on the central 9/10 of the unit
// frequency cell, so the packet spectrum is |I|^{1/2} phi(|I|(xi - c_w))
// times the translation to the centre of I (plus lambda |I|).

inline constexpr double kPacketWidth = 0.9;

inline double packet_profile_hat(double u) { return profile::bspline(profile::kOrder, kPacketWidth, u); }

// Nonzero lattice samples of a packet spectrum: values[i] sits at k0 + i.
struct PacketBand {
  long k0 = 0;
  std::vector<cplx> values;
};

inline bool lattice_is_rational(const GridSpec& s) { return s.period == std::floor(s.period) && s.period <= 1e15; }

// Lattice indices k with k/L in the closed interval (9/10) omega.
inline std::pair<long, long> packet_range(const DyadicInterval& w, const GridSpec& s) {
  if (!lattice_is_rational(s)) throw std::invalid_argument("wave packet: period must be an integer");
  Rat L(static_cast<long long>(s.period));
  Span inner = w.dilate(Rat(9, 10));
  long lo = static_cast<long>(-floor_rat(-inner.lo * L));
  long hi = static_cast<long>(floor_rat(inner.hi * L));
  return {lo, hi};
}

inline void require_resolvable(const Tile& P, const GridSpec& s) {
  auto [lo, hi] = packet_range(P.omega, s);
  if (hi - lo + 1 < 5) throw std::invalid_argument("wave packet: frequency band below lattice resolution");
  if (lo < s.kmin() || hi > s.kmax()) throw std::invalid_argument("wave packet: frequency band outside the lattice");
  if (P.I.length() > Rat(static_cast<long long>(s.period))) throw std::invalid_argument("wave packet: time interval longer than the period");
}

// L2-normalized on the lattice; lambda translates the packet by lambda |I|.
inline PacketBand packet_band(const Tile& P, const GridSpec& s, double lambda = 0.0) {
  require_resolvable(P, s);
  auto [lo, hi] = packet_range(P.omega, s);
  double len = to_double(P.I.length());
  double c = to_double(P.omega.center());
  double x0 = to_double(P.I.center()) + lambda * len;
  PacketBand b;
  b.k0 = lo;
  b.values.resize(static_cast<std::size_t>(hi - lo + 1));
  double energy = 0.0;
  for (long k = lo; k <= hi; ++k) {
    double xi = s.xi(k);
    double v = packet_profile_hat(len * (xi - c));
    b.values[static_cast<std::size_t>(k - lo)] = v * expi(-two_pi * xi * x0);
    energy += v * v;
  }
  double norm = std::sqrt(energy * s.dxi());
  for (auto& v : b.values) v /= norm;
  return b;
}

// <f, Phi> = sum_k F(k) conj(Phi^(k)) dxi, read straight off the band.
inline cplx pair_band(const SpectralFunction& F, const PacketBand& b) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < b.values.size(); ++i) acc += F.at(b.k0 + static_cast<long>(i)) * std::conj(b.values[i]);
  return acc * F.spec.dxi();
}

inline SpectralFunction band_spectrum(const PacketBand& b, const GridSpec& s) {
  SpectralFunction F(s);
  for (std::size_t i = 0; i < b.values.size(); ++i) F.ref(b.k0 + static_cast<long>(i)) = b.values[i];
  return F;
}

// Periodic distance from x to the centre of I, in units of |I|.
inline double scaled_distance(double x, double center, double len, double period) {
  double d = std::fmod(std::abs(x - center), period);
  return std::min(d, period - d) / len;
}

struct WavePacket {
  Tile tile;
  GridFunction samples;
  int decay_order = 4;
  double decay_constant = 0.0;  // max |Phi| |I|^{1/2} (1 + (dist/|I|)^2)^{M/2}
  PacketBand band;
};

inline bool spectral_support_ok(const WavePacket& w) {
  auto F = dft(w.samples);
  Span inner = w.tile.omega.dilate(Rat(9, 10));
  Rat L(static_cast<long long>(w.samples.spec.period));
  double peak = 0.0;
  for (long k = F.spec.kmin(); k <= F.spec.kmax(); ++k) peak = std::max(peak, std::abs(F.at(k)));
  for (long k = F.spec.kmin(); k <= F.spec.kmax(); ++k) {
    Rat xi(k, 1);
    xi /= L;
    bool inside = inner.lo <= xi && xi <= inner.hi;
    if (!inside && std::abs(F.at(k)) > 1e-13 * peak) return false;
  }
  long last = w.band.k0 + static_cast<long>(w.band.values.size()) - 1;
  for (long k : {w.band.k0, last}) {
    Rat xi(k, 1);
    xi /= L;
    if (!(inner.lo <= xi && xi <= inner.hi)) return false;
  }
  return true;
}

inline WavePacket make_wave_packet(const Tile& P, const GridSpec& s, double lambda = 0.0, int M = 4) {
  WavePacket w;
  w.tile = P;
  w.decay_order = M;
  w.band = packet_band(P, s, lambda);
  w.samples = idft(band_spectrum(w.band, s));
  double len = to_double(P.I.length());
  double xc = to_double(P.I.center()) + lambda * len;
  for (std::size_t j = 0; j < s.num_points; ++j) {
    double d = scaled_distance(s.x(j), xc, len, s.period);
    double r = std::abs(w.samples[j]) * std::sqrt(len) * std::pow(1.0 + d * d, 0.5 * M);
    w.decay_constant = std::max(w.decay_constant, r);
  }
  return w;
}

}  // namespace stf
