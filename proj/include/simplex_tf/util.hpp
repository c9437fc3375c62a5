#pragma once

// Small shared helpers: stable hashing, portable random draws, JSON alias.

#include <complex>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

namespace stf {

using json = nlohmann::json;

// FNV-1a, 64 bit. Stable across platforms, used for config and certificate hashes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// std distributions are implementation-defined; these are not.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}

  double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  long integer(long lo, long hi) {  // inclusive
    auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<long>(eng() % span);
  }
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  std::complex<double> unit_disk() {
    for (;;) {
      double a = uniform(-1.0, 1.0), b = uniform(-1.0, 1.0);
      if (a * a + b * b <= 1.0) return {a, b};
    }
  }
  bool coin(double p = 0.5) { return uniform() < p; }
};

}  // namespace stf
