#pragma once

// The eleven acceptance criteria as callable checks, shared by the
// acceptance binary and `simplex-tf verify`.

#include <chrono>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "experiments.hpp"

namespace stf {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string summary;
  double seconds = 0.0;
};

namespace accept {

inline std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

inline std::string join(const std::vector<double>& v, int prec = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i], prec);
  return s;
}

inline std::vector<double> metric_list(const json& m, const char* key) {
  std::vector<double> out;
  if (m.contains(key))
    for (const auto& v : m[key]) out.push_back(v.get<double>());
  return out;
}

inline std::string failed_assertions(const ExperimentResult& r) {
  std::string s;
  for (const auto& a : r.assertions)
    if (!a.passed) s += " failed:" + a.name + "=" + num(a.value) + ">" + num(a.limit);
  return s;
}

inline SpectralFunction random_band(const GridSpec& s, Rng& rng, long half_band, double density = 1.0, bool unimodular = false) {
  SpectralFunction F(s);
  for (long k = -half_band; k < half_band; ++k) {
    if (!rng.coin(density)) continue;
    cplx z = rng.unit_disk();
    F.ref(k) = unimodular ? z / std::abs(z) : z;
  }
  return F;
}

}  // namespace accept

// Configs used by the scan-backed criteria; the samples/ files mirror them.
inline ExperimentConfig acceptance_config(int id, unsigned threads = 1) {
  std::string text;
  switch (id) {
    case 1:
      text = "kind = counterexample2\nexponents = 4,4\nperiod = 8192\ngamma_shift = 6.25\nk_min = 4\nk_max = 10\n"
             "n_values = 16,32,64,128,256\nassert.monotone = true\nassert.fit_residual = 0.15\n";
      break;
    case 2:
      text = "kind = counterexample8\nexponents = 4,4\nperiod = 8192\nk0_lo = 5\nk0_hi = 10\n"
             "n_values = 16,32,64,128,256\nassert.monotone = true\nassert.fit_residual = 0.15\nassert.lower_bound = 0.1\n";
      break;
    case 3:
      text = "kind = mixed_ratio\nexponents = 4,4,4\nnorms = L,W,L\nperiod = 16\nn_values = 64,128,256\ntrials = 200\n"
             "families = gaussian,indicator,train\npadding = 4\ncontrast = true\ncontrast_n = 64,128,256\n"
             "assert.max_change = 0.2\nassert.contrast_growth = 0.3\n";
      break;
    case 4:
      text = "kind = oracle_equiv\nbilinear_points = 64\ntrilinear_points = 32\nperiod = 2\ntrials = 20\n"
             "assert.discrepancy = 1e-9\nassert.pointwise = 1e-12\n";
      break;
    case 8:
      text = "kind = decomposition_audit\ngrid_points = 2048\nperiod = 64\nuniverse_count = 50\nuniverse_min = 50\n"
             "universe_max = 500\nassert.recombines = true\nassert.certificates = true\nassert.energy_ratio = 64\n";
      break;
    case 11:
      text = "kind = restricted_type\ngrid_points = 4096\nperiod = 64\nclasses = E0,E1,E2\nepsilon = 0.05\ntrials = 50\n"
             "set_count = 8\njitter = 0.25\nomega_constant = 32\nk0 = 2\n"
             "assert.max_over_median = 10\nassert.omega_max = 0.5\n";
      break;
    default:
      throw std::invalid_argument("acceptance_config: criterion " + std::to_string(id) + " has no scan config");
  }
  auto cfg = ExperimentConfig::parse_text(text);
  cfg.set("seed", "1");
  cfg.set("threads", std::to_string(threads));
  return cfg;
}

// ---- individual criteria -------------------------------------------------

inline CriterionResult criterion_growth(int id, unsigned threads, double runtime_limit_s) {
  CriterionResult c;
  auto r = run_experiment(acceptance_config(id, threads));
  double secs = r.runtime_ms / 1000.0;
  bool fast = secs <= runtime_limit_s;
  c.passed = r.passed() && fast;
  const auto& m = r.metrics;
  c.summary = "R=[" + accept::join(accept::metric_list(m, "ratios")) + "] fit_residual=" + accept::num(m["fit"]["residual"].get<double>()) +
              " R/sqrt(logN)_variation=" + accept::num(m["fit"]["variation"].get<double>());
  if (id == 2) c.summary += " lower_bound=" + accept::num(m["lower_bound"].get<double>());
  c.summary += " runtime=" + accept::num(secs, 3) + "s" + (fast ? "" : " (over limit)") + accept::failed_assertions(r);
  return c;
}

inline CriterionResult criterion_mixed(unsigned threads) {
  CriterionResult c;
  auto r = run_experiment(acceptance_config(3, threads));
  c.passed = r.passed() && r.metrics["in_region"].get<bool>();
  c.summary = "running_max=[" + accept::join(accept::metric_list(r.metrics, "running_max")) + "] max_change=" +
              accept::num(r.metrics["max_change"].get<double>()) + " contrast=[" + accept::join(accept::metric_list(r.metrics, "contrast_ratios")) +
              "] contrast_growth=" + accept::num(r.metrics["contrast_growth"].get<double>()) + accept::failed_assertions(r);
  return c;
}

inline CriterionResult criterion_oracle(unsigned threads) {
  CriterionResult c;
  auto r = run_experiment(acceptance_config(4, threads));
  double secs = r.runtime_ms / 1000.0;
  c.passed = r.passed() && secs <= 120.0;
  c.summary = "max_relative_discrepancy=" + accept::num(r.metrics["max_discrepancy"].get<double>(), 3) +
              " constant_vs_product=" + accept::num(r.metrics["pointwise_discrepancy"].get<double>(), 3) + " runtime=" + accept::num(secs, 3) + "s" +
              accept::failed_assertions(r);
  return c;
}

inline CriterionResult criterion_martingale() {
  CriterionResult c;
  GridSpec s(512, 32.0);
  Rng rng(2024);
  const double pps[] = {1.25, 4.0 / 3.0, 1.5, 2.0};
  std::size_t bad_dev = 0, bad_sep = 0, bad_nest = 0, bad_count = 0, cells = 0;
  double worst_slack = inf;
  for (int f = 0; f < 50; ++f) {
    auto F = accept::random_band(s, rng, 256, rng.uniform(0.2, 1.0));
    if (F.coeffs == SpectralFunction(s).coeffs) F.ref(0) = 1.0;
    auto prof = distribution_function(F, pps[f % 4]);
    std::vector<Cell> prev;
    for (int m = 0; m <= 8; ++m) {
      auto cs = martingale_cells(prof, m);
      double dev = equipartition_deviation(cs);
      bad_dev += !(dev <= prof.max_mass);
      worst_slack = std::min(worst_slack, prof.max_mass - dev);
      std::size_t count = 0;
      for (const auto& cell : cs) {
        bad_sep += !halves_separated(cell);
        count += cell.support.size();
        ++cells;
      }
      bad_count += count != prof.size();
      if (m > 0) bad_nest += !cells_nest(prev, cs);
      prev = std::move(cs);
    }
  }
  c.passed = bad_dev == 0 && bad_sep == 0 && bad_nest == 0 && bad_count == 0;
  c.summary = "functions=50 cells=" + std::to_string(cells) + " deviation_violations=" + std::to_string(bad_dev) +
              " unseparated=" + std::to_string(bad_sep) + " nesting_failures=" + std::to_string(bad_nest) +
              " partition_failures=" + std::to_string(bad_count) + " min_slack=" + accept::num(worst_slack);
  return c;
}

inline CriterionResult criterion_whitney() {
  CriterionResult c;
  std::size_t squares = 0, bad_prop = 0, bad_cover = 0;
  const std::pair<std::size_t, double> grids[] = {{16, 2.0}, {64, 2.0}, {128, 1.0}, {256, 8.0}};
  for (const auto& [n, L] : grids) {
    GridSpec s(n, L);
    for (int sign : {1, -1}) {
      auto sq = whitney_decompose(sign, s);
      std::map<std::pair<long, long>, int> count;
      for (const auto& q : sq) {
        ++squares;
        bad_prop += !whitney_property_exact(q);
        auto r1 = q.index_range(0), r2 = q.index_range(1);
        for (long a = r1.first; a < r1.second; ++a)
          for (long b = r2.first; b < r2.second; ++b) ++count[{a, b}];
      }
      for (long a = s.kmin() + 1; a <= s.kmax(); ++a)
        for (long b = s.kmin() + 1; b <= s.kmax(); ++b) {
          auto it = count.find({a, b});
          int got = it == count.end() ? 0 : it->second;
          bad_cover += got != (sign * (a + b) > 0 ? 1 : 0);
        }
    }
  }
  c.passed = bad_prop == 0 && bad_cover == 0;
  c.summary = "squares=" + std::to_string(squares) + " property_failures=" + std::to_string(bad_prop) +
              " partition_failures=" + std::to_string(bad_cover);
  return c;
}

inline CriterionResult criterion_wave_packets() {
  CriterionResult c;
  GridSpec s(4096, 64.0);
  Rng rng(7);
  const Rat shifts[3] = {Rat(0), Rat(1, 3), Rat(2, 3)};
  std::size_t bad_supp = 0, bad_norm = 0;
  double worst_norm = 0.0, worst_decay = 0.0;
  const int packets = 200;
  for (int i = 0; i < packets; ++i) {
    int j = static_cast<int>(rng.integer(-2, 3));
    long long slots = static_cast<long long>(std::ldexp(64.0, -j));
    long long kmax = static_cast<long long>(std::ldexp(16.0, j)) - 2;
    Tile P(DyadicInterval(j, rng.integer(0, slots - 1)), DyadicInterval(-j, rng.integer(-kmax, kmax), shifts[rng.integer(0, 2)]));
    auto w = make_wave_packet(P, s, 0.0, 4);
    bad_supp += !spectral_support_ok(w);
    double dn = std::abs(lp_norm(w.samples, 2.0) - 1.0);
    worst_norm = std::max(worst_norm, dn);
    bad_norm += dn > 1e-10;
    worst_decay = std::max(worst_decay, w.decay_constant);
  }
  c.passed = bad_supp == 0 && bad_norm == 0 && worst_decay <= 20.0;
  c.summary = "packets=" + std::to_string(packets) + " support_failures=" + std::to_string(bad_supp) + " max|norm-1|=" +
              accept::num(worst_norm, 3) + " max_decay_constant(M=4)=" + accept::num(worst_decay);
  return c;
}

inline CriterionResult criterion_stopping(unsigned threads) {
  CriterionResult c;
  auto r = run_experiment(acceptance_config(8, threads));
  c.passed = r.passed();
  std::size_t tiles = 0;
  for (const auto& row : r.rows) tiles = std::max<std::size_t>(tiles, std::stoul(row[2]));
  c.summary = "universes=" + std::to_string(r.rows.size()) + " largest=" + std::to_string(tiles) +
              " max_energy_ratio=" + accept::num(r.metrics["energy_max_ratio"].get<double>()) + " (C=64)" + accept::failed_assertions(r);
  return c;
}

inline constexpr double kTaylorConstant = 1e4;

inline CriterionResult criterion_taylor() {
  CriterionResult c;
  GridSpec s(4096, 64.0);
  std::size_t trees = 0, pairs = 0, bad = 0;
  std::vector<double> worst;
  for (int k0 : {2, 3, 4}) {
    double w = 0.0;
    for (int seed = 0; seed < 4; ++seed) {
      Rng rng(static_cast<std::uint64_t>(100 * k0 + seed));
      Rank1Config cfg;
      cfg.count = 40;
      cfg.s_lo = 2;
      cfg.s_hi = 3;
      cfg.time_cells = 64;
      cfg.xi_lo = -4.0;
      cfg.xi_hi = 4.0;
      auto Q = generate_rank1_universe(cfg, rng);
      auto P = generate_children(Q, k0, cfg);
      FormInputs in;
      in.spec = s;
      in.F1 = accept::random_band(s, rng, 1500);
      in.F2 = accept::random_band(s, rng, 1500);
      in.F3 = accept::random_band(s, rng, 1500);
      in.F4 = accept::random_band(s, rng, 1500);
      TaylorConfig tc;
      tc.k0 = k0;
      for (const auto& T : build_trees(Q, 1)) {
        auto r = taylor_split_tree(Q, T, P, in, tc);
        ++trees;
        pairs += r.pairs;
        bad += !r.reconstructs();
        w = std::max(w, r.decay_constant);
      }
    }
    worst.push_back(w);
  }
  double global = *std::max_element(worst.begin(), worst.end());
  c.passed = bad == 0 && pairs > 0 && global <= kTaylorConstant;
  c.summary = "trees=" + std::to_string(trees) + " pairs=" + std::to_string(pairs) + " reconstruction_failures=" + std::to_string(bad) +
              " decay_constant_by_k0{2,3,4}=[" + accept::join(worst) + "] global_C=" + accept::num(kTaylorConstant);
  return c;
}

inline CriterionResult criterion_stack() {
  CriterionResult c;
  GridSpec s(2048, 64.0);
  auto matched = [&](const std::vector<TriTile>& u, int slot) {
    SpectralFunction F(s);
    for (const auto& P : u) {
      auto b = packet_band(P.tile(slot), s);
      for (std::size_t i = 0; i < b.values.size(); ++i) {
        cplx v = b.values[i];
        F.ref(b.k0 + static_cast<long>(i)) = std::abs(v) > 0.0 ? v / std::abs(v) : cplx(1.0);
      }
    }
    return F;
  };
  std::vector<double> built;
  bool ok = true;
  for (int count : {2, 4, 8, 16}) {
    long long t = 5 + count;
    std::vector<TriTile> u;
    for (int i = 0; i < count; ++i) u.push_back(rank1_tritile(0, t, i, {Rat(0), Rat(0), Rat(0)}, {1, -1, 1}, {0, 4, 8}));
    auto F3 = dft(GridFunction::sample(s, [t](double x) { return x >= double(t) && x < double(t) + 1.0 ? cplx(1.0) : cplx(0.0); }));
    auto rep = stack_count(u, matched(u, 1), matched(u, 2), F3);
    built.push_back(rep.max_ratio);
    ok = ok && rep.count == static_cast<std::size_t>(count) && rep.max_ratio >= 0.25 && rep.max_ratio <= 1.0;
  }
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(500 + seed));
    Rank1Config cfg;
    cfg.count = 200;
    cfg.s_lo = cfg.s_hi = 0;
    cfg.time_cells = 64;
    cfg.xi_lo = -2.0;
    cfg.xi_hi = 2.0;
    auto u = generate_rank1_universe(cfg, rng);
    auto F1 = accept::random_band(s, rng, 400);
    auto F2 = accept::random_band(s, rng, 400, 0.5, true);
    auto F3 = accept::random_band(s, rng, 400);
    worst = std::max(worst, stack_count(u, F1, F2, F3).max_ratio);
  }
  c.passed = ok && worst <= 16.0;
  c.summary = "constructed_ratios(2,4,8,16)=[" + accept::join(built) + "] (need >= 1/4, <= 1) random_max=" + accept::num(worst) + " (C=16)";
  return c;
}

inline CriterionResult criterion_restricted(unsigned threads) {
  CriterionResult c;
  auto r = run_experiment(acceptance_config(11, threads));
  c.passed = r.passed() && r.metrics["omega_rows_ok"].get<bool>();
  std::string per;
  for (const auto& [name, v] : r.metrics["classes"].items())
    per += " " + name + ":max/median=" + accept::num(v["max_over_median"].get<double>()) + ",omega_max=" + accept::num(v["omega_max"].get<double>());
  c.summary = "samples=50/class" + per + accept::failed_assertions(r);
  return c;
}

// ---- registry ------------------------------------------------------------

struct Criterion {
  int id;
  std::string name;
  std::function<CriterionResult(unsigned)> run;
};

inline const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "counterexample2_growth", [](unsigned t) { return criterion_growth(1, t, 300.0); }},
      {2, "counterexample8_growth", [](unsigned t) { return criterion_growth(2, t, 300.0); }},
      {3, "mixed_ratio_stability", criterion_mixed},
      {4, "oracle_equivalence", criterion_oracle},
      {5, "martingale_equipartition", [](unsigned) { return criterion_martingale(); }},
      {6, "whitney_property", [](unsigned) { return criterion_whitney(); }},
      {7, "wave_packet_contract", [](unsigned) { return criterion_wave_packets(); }},
      {8, "stopping_time_soundness", criterion_stopping},
      {9, "taylor_split", [](unsigned) { return criterion_taylor(); }},
      {10, "scale_one_stack_count", [](unsigned) { return criterion_stack(); }},
      {11, "restricted_type_scan", criterion_restricted},
  };
  return all;
}

// "all" / "acceptance", or a comma list of ids and names.
inline std::vector<int> select_criteria(const std::string& suite) {
  std::vector<int> ids;
  if (suite == "all" || suite == "acceptance") {
    for (const auto& c : criteria()) ids.push_back(c.id);
    return ids;
  }
  for (const auto& tok : split_list(suite)) {
    int found = 0;
    for (const auto& c : criteria())
      if (tok == c.name || tok == std::to_string(c.id)) found = c.id;
    if (!found) throw std::invalid_argument("unknown verify suite '" + tok + "'");
    ids.push_back(found);
  }
  return ids;
}

inline std::string format_criterion(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << "  " << r.summary << "  (" << accept::num(r.seconds, 3) << " s)";
  return os.str();
}

inline std::vector<CriterionResult> run_criteria(const std::vector<int>& ids, unsigned threads = 1, std::ostream* progress = nullptr) {
  std::vector<CriterionResult> out;
  for (int id : ids) {
    const Criterion* c = nullptr;
    for (const auto& k : criteria())
      if (k.id == id) c = &k;
    if (!c) throw std::invalid_argument("unknown criterion " + std::to_string(id));
    auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = c->run(threads);
    } catch (const std::exception& e) {
      r.passed = false;
      r.summary = std::string("error: ") + e.what();
    }
    r.id = c->id;
    r.name = c->name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) *progress << format_criterion(r) << std::endl;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace stf
