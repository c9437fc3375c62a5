// simplex-tf: run experiment configs, verify acceptance suites, audit tile universes.
//
// Exit codes: 0 all configured assertions pass, 1 an assertion failed,
// 2 usage, config or input error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "simplex_tf/acceptance.hpp"
#include "simplex_tf/experiments.hpp"

namespace {

struct Overrides {
  std::optional<long> seed;
  std::string out;
  std::optional<unsigned> threads;
  std::optional<std::size_t> padding;
};

void apply(stf::ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (!o.out.empty()) cfg.set("out", o.out);
  if (o.threads) cfg.set("threads", std::to_string(*o.threads));
  if (o.padding) cfg.set("padding", std::to_string(*o.padding));
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << text;
}

// CSV to `out` (stdout when unset), the run log next to it.
int emit(const stf::ExperimentConfig& cfg, const stf::ExperimentResult& r, bool audit_to_stdout) {
  std::string out = cfg.str("out");
  if (out.empty()) {
    std::cout << (audit_to_stdout ? r.audit : r.csv());
    std::cerr << r.log_jsonl();
  } else {
    write_file(out, r.csv());
    write_file(out + ".log.jsonl", r.log_jsonl());
    if (!r.audit.empty()) write_file(out + ".audit.jsonl", r.audit);
  }
  for (const auto& a : r.assertions)
    std::cerr << (a.passed ? "pass  " : "FAIL  ") << a.name << " = " << a.value << " (limit " << a.limit << ")\n";
  return r.passed() ? 0 : 1;
}

void add_common(CLI::App* cmd, Overrides& o, bool padding) {
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--out", o.out, "CSV output path; the log goes to <out>.log.jsonl");
  cmd->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  if (padding) cmd->add_option("--padding", o.padding, "operator output padding factor (power of two)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simplex-tf: time-frequency experiments on the torus"};
  app.require_subcommand(1);

  Overrides run_o, audit_o;
  std::string config_path, suite, universe_path;
  unsigned verify_threads = 1;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "config file (key = value lines)")->required()->check(CLI::ExistingFile);
  add_common(run, run_o, true);

  auto* verify = app.add_subcommand("verify", "run acceptance criteria: all, acceptance, or a comma list of ids/names");
  verify->add_option("suite", suite, "suite selector")->required();
  verify->add_option("--threads", verify_threads, "worker threads")->check(CLI::PositiveNumber);

  auto* audit = app.add_subcommand("audit", "stopping-time decomposition audit of a tri-tile universe file");
  audit->add_option("universe", universe_path, "universe file")->required()->check(CLI::ExistingFile);
  add_common(audit, audit_o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      auto cfg = stf::ExperimentConfig::load(config_path);
      apply(cfg, run_o);
      return emit(cfg, stf::run_experiment(cfg), false);
    }
    if (*verify) {
      auto ids = stf::select_criteria(suite);
      auto results = stf::run_criteria(ids, verify_threads, &std::cout);
      bool ok = std::all_of(results.begin(), results.end(), [](const stf::CriterionResult& r) { return r.passed; });
      return ok ? 0 : 1;
    }
    if (*audit) {
      auto cfg = stf::ExperimentConfig::parse_text(
          "kind = decomposition_audit\nassert.recombines = true\nassert.certificates = true\nassert.energy_ratio = 64\n");
      cfg.set("universe", universe_path);
      apply(cfg, audit_o);
      return emit(cfg, stf::run_experiment(cfg), true);
    }
  } catch (const std::exception& e) {
    std::cerr << "simplex-tf: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
