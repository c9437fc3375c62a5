#include <gtest/gtest.h>

#include "simplex_tf/operators.hpp"

using namespace stf;

namespace {

GridFunction random_function(const GridSpec& s, Rng& rng) {
  GridFunction f(s);
  for (auto& v : f.samples) v = cplx(rng.normal(), rng.normal());
  return f;
}

// Nyquist bin cleared, so conjugation maps the spectrum onto itself.
GridFunction random_symmetric_band(const GridSpec& s, Rng& rng) {
  auto F = dft(random_function(s, rng));
  F.ref(s.kmin()) = 0.0;
  return idft(F);
}

GridFunction upsample(const GridFunction& f, std::size_t factor) { return idft(pad_spectrum(dft(f), factor)); }

GridFunction tone(const GridSpec& s, long k, cplx amp = 1.0) {
  return GridFunction::sample(s, [&](double x) { return amp * cis(double(k) * x / s.period); });
}

double rel_diff(const GridFunction& a, const GridFunction& b) {
  double scale = std::max(lp_norm(a, inf), lp_norm(b, inf));
  return max_abs_diff(a, b) / (scale > 0 ? scale : 1.0);
}

OperatorOptions with(Path p) {
  OperatorOptions o;
  o.path = p;
  return o;
}

}  // namespace

TEST(Bilinear, ConstantSymbolIsPointwiseProduct) {
  Rng rng(1);
  GridSpec s(32, 3.0);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng);
  auto r = apply_bilinear(constant_symbol(s), f1, f2, with(Path::oracle));
  auto expect = pointwise(upsample(f1, 4), upsample(f2, 4));
  EXPECT_LE(rel_diff(r.output, expect), 1e-12);
  auto fast = apply_bilinear(constant_symbol(s), f1, f2);
  EXPECT_EQ(fast.path_used, Path::fft_fast);
  EXPECT_LE(rel_diff(fast.output, expect), 1e-12);
}

TEST(Bilinear, SgnOfTwoUnitTones) {
  GridSpec s(16, 1.0);
  auto f = tone(s, 1);
  for (Path p : {Path::oracle, Path::fft_fast}) {
    auto r = apply_bilinear(sgn_symbol(s), f, f, with(p));
    auto expect = tone(r.output.spec, 2);
    EXPECT_LE(max_abs_diff(r.output, expect), 1e-12);
  }
}

TEST(Bilinear, FactoredFastPathMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    GridSpec s(64, 2.0);
    auto m = random_factored_symbol(s, seed, 12, 20);
    auto f1 = random_function(s, rng), f2 = random_function(s, rng);
    auto a = apply_bilinear(m, f1, f2, with(Path::oracle));
    auto b = apply_bilinear(m, f1, f2, with(Path::fft_fast));
    double bound = lp_norm(f1, 2) * lp_norm(f2, 2);
    EXPECT_LE(max_abs_diff(a.output, b.output), 1e-10 * bound);
  }
}

TEST(Bilinear, SumProfileFastPathMatchesOracle) {
  Rng rng(3);
  GridSpec s(64, 5.0);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng);
  auto a = apply_bilinear(sgn_symbol(s), f1, f2, with(Path::oracle));
  auto b = apply_bilinear(sgn_symbol(s), f1, f2, with(Path::fft_fast));
  EXPECT_LE(rel_diff(a.output, b.output), 1e-12);
}

TEST(Bilinear, FastPathRefusedForGenericSymbol) {
  GridSpec s(16, 1.0);
  auto m = build_mikhlin_symbol(1, 2, s);
  auto f = tone(s, 1);
  EXPECT_THROW(apply_bilinear(m, f, f, with(Path::fft_fast)), std::invalid_argument);
  EXPECT_EQ(apply_bilinear(m, f, f).path_used, Path::oracle);
  EXPECT_THROW(apply_bilinear(m, f, tone(GridSpec(32, 1.0), 1)), std::invalid_argument);
}

TEST(Bilinear, TranslationCovarianceAndLinearity) {
  Rng rng(5);
  GridSpec s(32, 4.0);
  auto m = build_mikhlin_symbol(5, 2, s);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng), g = random_function(s, rng);
  OperatorOptions o;
  o.padding = 2;
  auto base = apply_bilinear(m, f1, f2, o).output;
  for (long h : {1L, 5L, 17L}) {
    auto moved = apply_bilinear(m, translate(f1, h), translate(f2, h), o).output;
    EXPECT_LE(max_abs_diff(moved, translate(base, 2 * h)), 1e-12 * lp_norm(base, inf));
  }
  cplx a(0.3, -1.2);
  GridFunction comb(s);
  for (std::size_t j = 0; j < s.num_points; ++j) comb[j] = a * f1[j] + g[j];
  auto lhs = apply_bilinear(m, comb, f2, o).output;
  auto r1 = apply_bilinear(m, f1, f2, o).output, r2 = apply_bilinear(m, g, f2, o).output;
  GridFunction rhs(lhs.spec);
  for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = a * r1[j] + r2[j];
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-12 * lp_norm(lhs, inf));
}

TEST(Bilinear, CustomOutputGridKeepsBandLimitedOutput) {
  GridSpec s(64, 8.0);
  auto f1 = tone(s, 3), f2 = tone(s, -1);
  OperatorOptions o;
  o.output_points = 16;
  auto r = apply_bilinear(constant_symbol(s), f1, f2, o);
  EXPECT_LE(r.dropped, 1e-12);
  EXPECT_LE(max_abs_diff(r.output, tone(r.output.spec, 2)), 1e-12);
  auto far = apply_bilinear(constant_symbol(s), tone(s, 20), tone(s, 5), o);
  EXPECT_GT(far.dropped, 0.5);
}

TEST(Trilinear, ConstantSymbolIsTripleProduct) {
  Rng rng(2);
  GridSpec s(16, 2.0);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng), f3 = random_function(s, rng);
  auto expect = pointwise(pointwise(upsample(f1, 4), upsample(f2, 4)), upsample(f3, 4));
  auto a = apply_trilinear(constant_symbol3(s), f1, f2, f3);
  EXPECT_EQ(a.path_used, Path::oracle);
  EXPECT_LE(rel_diff(a.output, expect), 1e-12);
  auto b = apply_trilinear(tensor_symbol(constant_symbol(s), constant_symbol(s)), f1, f2, f3);
  EXPECT_EQ(b.path_used, Path::fft_fast);
  EXPECT_LE(rel_diff(b.output, expect), 1e-12);
}

TEST(Trilinear, SignSignOnThreeTones) {
  GridSpec s(16, 1.0);
  auto m = tensor_symbol(sgn_symbol(s), sgn_symbol(s));
  for (Path p : {Path::oracle, Path::fft_fast}) {
    auto r = apply_trilinear(m, tone(s, 1), tone(s, 2), tone(s, -3), with(p));
    for (std::size_t j = 0; j < r.output.size(); ++j) EXPECT_NEAR(std::abs(r.output[j] - cplx(-1.0)), 0.0, 1e-12);
  }
}

TEST(Trilinear, FastPathsMatchOracle) {
  GridSpec s(32, 2.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 40);
    auto f1 = random_function(s, rng), f2 = random_function(s, rng), f3 = random_function(s, rng);
    double bound = lp_norm(f1, 2) * lp_norm(f2, 2) * lp_norm(f3, 2);
    auto fac = tensor_symbol(random_factored_symbol(s, seed, 5, 12), random_factored_symbol(s, seed + 9, 5, 12));
    auto a = apply_trilinear(fac, f1, f2, f3, with(Path::oracle));
    auto b = apply_trilinear(fac, f1, f2, f3, with(Path::fft_fast));
    EXPECT_LE(max_abs_diff(a.output, b.output), 1e-9 * bound);
    auto ss = tensor_symbol(sgn_symbol(s), sgn_symbol(s));
    auto c = apply_trilinear(ss, f1, f2, f3, with(Path::oracle));
    auto d = apply_trilinear(ss, f1, f2, f3, with(Path::fft_fast));
    EXPECT_LE(max_abs_diff(c.output, d.output), 1e-9 * bound);
  }
}

TEST(Trilinear, OracleSizeLimit) {
  GridSpec s(256, 1.0);
  auto f = tone(s, 1);
  EXPECT_THROW(apply_trilinear(constant_symbol3(s), f, f, f), std::invalid_argument);
  EXPECT_THROW(apply_trilinear(region_cutoff("R11_1", s), f, f, f, with(Path::fft_fast)), std::invalid_argument);
}

TEST(Trilinear, ThreadCountDoesNotChangeBits) {
  Rng rng(8);
  GridSpec s(16, 1.0);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng), f3 = random_function(s, rng);
  auto m = multiply(tensor_symbol(sgn_symbol(s), sgn_symbol(s)), region_cutoff("R11_2", s));
  OperatorOptions one, four;
  four.threads = 4;
  auto a = apply_trilinear(m, f1, f2, f3, one), b = apply_trilinear(m, f1, f2, f3, four);
  EXPECT_EQ(a.output.samples, b.output.samples);
}

TEST(Maximal, ZeroSecondInput) {
  Rng rng(4);
  GridSpec s(16, 1.0);
  auto r = apply_maximal_bicarleson(constant_symbol(s), random_function(s, rng), GridFunction(s));
  EXPECT_EQ(lp_norm(r.output, inf), 0.0);
}

TEST(Maximal, SingleTonePair) {
  GridSpec s(16, 1.0);
  auto r = apply_maximal_bicarleson(constant_symbol(s), tone(s, 3, 2.0), tone(s, 1, 0.5));
  for (auto v : r.output.samples) EXPECT_NEAR(v.real(), 1.0, 1e-12);
}

TEST(Maximal, DominatesFullRangeAndFixedCutoffMembers) {
  GridSpec s(32, 2.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto m = build_mikhlin_symbol(seed, 2, s);
    auto f1 = random_function(s, rng), f2 = random_function(s, rng);
    auto sup = apply_maximal_bicarleson(m, f1, f2).output;
    auto full = apply_bilinear(times_lower_triangle(m), f1, f2).output;
    double cut = s.xi(3) + 0.5 * s.dxi();
    Symbol2 member = m;
    auto fn = m.fn;
    member.fn = [fn, cut](double a, double b) { return (b < a && a < cut) ? fn(a, b) : cplx(0.0); };
    auto part = apply_bilinear(member, f1, f2).output;
    for (std::size_t j = 0; j < sup.size(); ++j) {
      EXPECT_GE(sup[j].real(), 0.0);
      EXPECT_GE(sup[j].real(), std::abs(full[j]) - 1e-10);
      EXPECT_GE(sup[j].real(), std::abs(part[j]) - 1e-10);
    }
  }
}

TEST(DualForm, OrthogonalToneGivesZero) {
  GridSpec s(16, 1.0);
  cplx v = dual_form(constant_symbol(s), tone(s, 1), tone(s, 2), tone(s, 4));
  EXPECT_LE(std::abs(v), 1e-12);
  cplx w = dual_form(constant_symbol(s), tone(s, 1), tone(s, 2), tone(s, -3));
  EXPECT_NEAR(std::abs(w - cplx(1.0)), 0.0, 1e-12);
}

TEST(DualForm, PairingWithOneIsDiagonalSum) {
  Rng rng(6);
  GridSpec s(32, 4.0);
  auto f1 = random_function(s, rng), f2 = random_function(s, rng);
  auto one = GridFunction::sample(s, [](double) { return cplx(1.0); });
  cplx lam = dual_form(constant_symbol(s), f1, f2, one);
  auto F1 = dft(f1), F2 = dft(f2);
  cplx diag = 0.0;
  for (long k = s.kmin(); k <= s.kmax(); ++k) diag += F1.at(k) * F2.at(-k);
  diag *= s.dxi();
  EXPECT_NEAR(std::abs(lam - diag), 0.0, 1e-11 * std::abs(diag));
}

TEST(DualForm, ConjugateSymmetry) {
  Rng rng(7);
  GridSpec s(32, 2.0);
  Symbol2 m;
  m.spec = s;
  m.fn = [](double a, double b) { return cplx(std::cos(a - 2.0 * b)); };
  auto conj_of = [](GridFunction f) {
    for (auto& v : f.samples) v = std::conj(v);
    return f;
  };
  for (int t = 0; t < 3; ++t) {
    auto f1 = random_symmetric_band(s, rng), f2 = random_symmetric_band(s, rng), f3 = random_symmetric_band(s, rng);
    cplx a = dual_form(m, f1, f2, f3);
    cplx b = dual_form(m, conj_of(f1), conj_of(f2), conj_of(f3));
    EXPECT_NEAR(std::abs(b - std::conj(a)), 0.0, 1e-10 * std::abs(a));
  }
}

TEST(DualForm, TrilinearDualityBound) {
  Rng rng(9);
  GridSpec s(16, 2.0);
  auto m = tensor_symbol(sgn_symbol(s), sgn_symbol(s));
  auto f1 = random_function(s, rng), f2 = random_function(s, rng), f3 = random_function(s, rng), f4 = random_function(s, rng);
  auto out = apply_trilinear(m, f1, f2, f3).output;
  cplx lam = dual_form(m, f1, f2, f3, f4);
  EXPECT_LE(std::abs(lam), lp_norm(out, 2.0) * lp_norm(upsample(f4, 4), 2.0) * (1 + 1e-12));
}
