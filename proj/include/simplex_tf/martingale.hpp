#pragma once

// Distribution functions of spectral mass, dyadic preimage cells with
// left/right halves, frequency-set projections and square functions.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "grid.hpp"

namespace stf {

// Cumulative p'-mass along the frequency axis. Zero-mass frequencies are
// dropped, so `freqs` lists only the support of the spectrum.
struct MassProfile {
  GridSpec spec;
  double p_prime = 2.0;
  double total = 0.0;                 // sum |F(k)|^{p'} * dxi
  std::vector<long> freqs;            // ascending lattice indices
  std::vector<double> mass;           // normalized, sums to 1
  std::vector<double> cumulative;     // cumulative[i] = mass of freqs[0..i]
  double max_mass = 0.0;

  std::size_t size() const { return freqs.size(); }
  double start(std::size_t i) const { return i == 0 ? 0.0 : cumulative[i - 1]; }
};

inline MassProfile distribution_function(const SpectralFunction& F, double p_prime) {
  if (!(p_prime >= 1.0) || std::isinf(p_prime))
    throw std::invalid_argument("distribution_function: p' must be finite and >= 1");
  MassProfile prof;
  prof.spec = F.spec;
  prof.p_prime = p_prime;
  std::vector<double> raw;
  for (long k = F.spec.kmin(); k <= F.spec.kmax(); ++k) {
    double a = std::abs(F.at(k));
    if (a == 0.0) continue;
    prof.freqs.push_back(k);
    raw.push_back(p_prime == 2.0 ? a * a : std::pow(a, p_prime));
  }
  double sum = 0.0;
  for (double v : raw) sum += v;
  if (!(sum > 0.0)) throw std::invalid_argument("distribution_function: zero function");
  prof.total = sum * F.spec.dxi();
  prof.mass.resize(raw.size());
  prof.cumulative.resize(raw.size());
  double run = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    prof.mass[i] = raw[i] / sum;
    prof.max_mass = std::max(prof.max_mass, prof.mass[i]);
    run += raw[i];
    prof.cumulative[i] = run / sum;
  }
  prof.cumulative.back() = 1.0;
  return prof;
}

inline MassProfile distribution_function(const GridFunction& f, double p_prime) {
  return distribution_function(dft(f), p_prime);
}

struct Cell {
  int level = 0;
  long index = 0;
  std::vector<long> support, left_half, right_half;
  double mass = 0.0, left_mass = 0.0, right_mass = 0.0;  // normalized
  bool empty() const { return support.empty(); }
};

namespace detail {

// Level-m cell of profile entry i: the dyadic interval holding the start of its
// cumulative interval. A straddling atom therefore goes to the lower cell, and
// the start is < 1, which is the right-endpoint convention for the last cell.
inline long cell_of(const MassProfile& prof, std::size_t i, int m) {
  long c = static_cast<long>(std::floor(std::ldexp(prof.start(i), m)));
  return std::min(c, (1L << m) - 1);
}

}  // namespace detail

inline std::vector<Cell> martingale_cells(const MassProfile& prof, int m) {
  if (m < 0 || m > 30) throw std::invalid_argument("martingale_cells: level out of range");
  long count = 1L << m;
  std::vector<Cell> cells(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    cells[k].level = m;
    cells[k].index = k;
  }
  for (std::size_t i = 0; i < prof.size(); ++i) {
    long fine = detail::cell_of(prof, i, m + 1);
    Cell& c = cells[static_cast<std::size_t>(fine / 2)];
    c.support.push_back(prof.freqs[i]);
    c.mass += prof.mass[i];
    if (fine % 2 == 0) {
      c.left_half.push_back(prof.freqs[i]);
      c.left_mass += prof.mass[i];
    } else {
      c.right_half.push_back(prof.freqs[i]);
      c.right_mass += prof.mass[i];
    }
  }
  return cells;
}

// Largest |mass(cell) - 2^-m| over the level.
inline double equipartition_deviation(const std::vector<Cell>& cells) {
  double dev = 0.0;
  for (const auto& c : cells) dev = std::max(dev, std::abs(c.mass - std::ldexp(1.0, -c.level)));
  return dev;
}

inline bool halves_separated(const Cell& c) {
  if (c.left_half.empty() || c.right_half.empty()) return true;
  return c.left_half.back() < c.right_half.front();
}

// Every cell of `fine` lies inside one cell of `coarse`, namely index / 2^(level gap).
inline bool cells_nest(const std::vector<Cell>& coarse, const std::vector<Cell>& fine) {
  if (coarse.empty() || fine.empty()) return false;
  int gap = fine.front().level - coarse.front().level;
  if (gap < 0) return false;
  for (const auto& c : fine) {
    const auto& parent = coarse[static_cast<std::size_t>(c.index >> gap)].support;
    for (long k : c.support)
      if (!std::binary_search(parent.begin(), parent.end(), k)) return false;
  }
  return true;
}

inline GridFunction cell_project(const SpectralFunction& F, const std::vector<long>& freq_set) {
  SpectralFunction P(F.spec);
  for (long k : freq_set) {
    if (k < F.spec.kmin() || k > F.spec.kmax())
      throw std::invalid_argument("cell_project: frequency outside the lattice");
    P.ref(k) = F.at(k);
  }
  return idft(P);
}

inline GridFunction cell_project(const GridFunction& f, const std::vector<long>& freq_set) {
  return cell_project(dft(f), freq_set);
}

// Sharp Littlewood-Paley pieces: {0}, the annuli 2^j <= |k| < 2^{j+1} split by
// sign, and the Nyquist bin.
inline std::vector<std::vector<long>> dyadic_bands(const GridSpec& s) {
  std::vector<std::vector<long>> bands{{0}};
  for (long lo = 1; lo <= s.kmax(); lo *= 2) {
    std::vector<long> pos, neg;
    for (long k = lo; k < 2 * lo; ++k) {
      if (k <= s.kmax()) pos.push_back(k);
      if (-k >= s.kmin()) neg.push_back(-k);
    }
    std::reverse(neg.begin(), neg.end());
    bands.push_back(std::move(neg));
    bands.push_back(std::move(pos));
  }
  if (s.num_points >= 2) bands.push_back({s.kmin()});  // unpaired Nyquist bin
  return bands;
}

inline GridFunction square_function(const SpectralFunction& F, const std::vector<std::vector<long>>& bands) {
  std::vector<char> seen(F.spec.num_points, 0);
  for (const auto& b : bands)
    for (long k : b) {
      auto i = static_cast<std::size_t>(k + static_cast<long>(F.offset()));
      if (k < F.spec.kmin() || k > F.spec.kmax()) throw std::invalid_argument("square_function: frequency outside the lattice");
      if (seen[i]) throw std::invalid_argument("square_function: bands overlap");
      seen[i] = 1;
    }
  std::vector<double> acc(F.spec.num_points, 0.0);
  for (const auto& b : bands) {
    if (b.empty()) continue;
    auto p = cell_project(F, b);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += std::norm(p[j]);
  }
  GridFunction out(F.spec);
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = std::sqrt(acc[j]);
  return out;
}

inline GridFunction square_function(const GridFunction& f, const std::vector<std::vector<long>>& bands) {
  return square_function(dft(f), bands);
}

inline GridFunction square_function(const GridFunction& f, const std::vector<Cell>& cells) {
  std::vector<std::vector<long>> bands;
  bands.reserve(cells.size());
  for (const auto& c : cells) bands.push_back(c.support);
  return square_function(f, bands);
}

// ||(sum_k |f * 1_{E^m_k}|^2)^{1/2}||_p / ||F||_{p'} and the same divided by
// 2^{m(1/2 - 1/p')}, with the cells built from the p'-mass of f itself.
struct DecayMeasurement {
  int level = 0;
  double ratio = 0.0;
  double normalized = 0.0;
};

inline DecayMeasurement martingale_decay(const GridFunction& f, double p, int m) {
  auto F = dft(f);
  double pp = conjugate_exponent(p);
  auto cells = martingale_cells(distribution_function(F, pp), m);
  std::vector<std::vector<long>> bands;
  for (const auto& c : cells) bands.push_back(c.support);
  auto S = square_function(F, bands);
  DecayMeasurement d;
  d.level = m;
  d.ratio = lp_norm(S, p) / weighted_lp(F.coeffs, pp, F.spec.dxi());
  d.normalized = d.ratio / std::exp2(m * (0.5 - 1.0 / pp));
  return d;
}

}  // namespace stf
