#pragma once

// Thin FFTW wrapper: one cached in-place plan per (length, direction).

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace stf {

using cplx = std::complex<double>;

namespace detail {

class plan_cache {
public:
  static plan_cache& instance() {
    static plan_cache c;
    return c;
  }

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cplx> scratch(n);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), p, p, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw std::runtime_error("fftw plan creation failed");
    plans_.emplace(key, plan);
    return plan;
  }

  ~plan_cache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

private:
  plan_cache() = default;
  std::mutex mu_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

}  // namespace detail

// Unnormalized transforms: forward uses e^{-2 pi i jk/n}, backward e^{+...}.
inline void fft_forward(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  auto plan = detail::plan_cache::instance().get(a.size(), FFTW_FORWARD);
  auto* p = reinterpret_cast<fftw_complex*>(a.data());
  fftw_execute_dft(plan, p, p);
}

inline void fft_backward(std::vector<cplx>& a) {
  if (a.size() <= 1) return;
  auto plan = detail::plan_cache::instance().get(a.size(), FFTW_BACKWARD);
  auto* p = reinterpret_cast<fftw_complex*>(a.data());
  fftw_execute_dft(plan, p, p);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

// Cyclic-free linear convolution of two short sequences.
inline std::vector<cplx> linear_convolve(const std::vector<cplx>& a,
                                         const std::vector<cplx>& b) {
  if (a.empty() || b.empty()) return {};
  std::size_t out = a.size() + b.size() - 1;
  if (a.size() * b.size() <= 4096) {
    std::vector<cplx> r(out, cplx(0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
  }
  std::size_t s = next_pow2(out);
  std::vector<cplx> fa(s, cplx(0.0)), fb(s, cplx(0.0));
  std::copy(a.begin(), a.end(), fa.begin());
  std::copy(b.begin(), b.end(), fb.begin());
  fft_forward(fa);
  fft_forward(fb);
  for (std::size_t i = 0; i < s; ++i) fa[i] *= fb[i];
  fft_backward(fa);
  double inv = 1.0 / static_cast<double>(s);
  fa.resize(out);
  for (auto& v : fa) v *= inv;
  return fa;
}

}  // namespace stf
