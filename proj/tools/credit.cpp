// credit: command-line experiment runner.
//
//   credit run     --config exp.json [--out dir] [--threads n] [--seed-offset k]
//   credit sweep   --config exp.json [--out dir] [--threads n] [--seed-offset k]
//   credit analyze --config exp.json [--out dir]
//   credit oracle  <forward-view|q-forward-view|expected-followon|expected-trace> --config exp.json [--out dir]
//
// Exit status: 0 success, 2 configuration error, 3 failed oracle check, 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "credit/harness/runner.hpp"

namespace {

namespace fs = std::filesystem;
using namespace credit;
using namespace credit::harness;

constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;

struct Common {
  std::string config;
  std::string out;
  std::size_t threads = 1;
  std::uint64_t seed_offset = 0;
};

void add_common(CLI::App* sub, Common& c, bool parallel) {
  sub->add_option("--config", c.config, "Experiment config (JSON)")->required();
  sub->add_option("--out", c.out, "Output directory");
  if (parallel) {
    sub->add_option("--threads", c.threads, "Worker threads over seeds")->check(CLI::PositiveNumber);
    sub->add_option("--seed-offset", c.seed_offset, "Added to every configured seed");
  }
}

void emit(const Common& c, const std::string& file, const json& j) {
  if (c.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text(fs::path(c.out) / file, j.dump(2) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective credit assignment experiments"};
  app.require_subcommand(1);
  Common run_opts, sweep_opts, analyze_opts, oracle_opts;
  std::string oracle_kind;
  auto* run = app.add_subcommand("run", "Run every seed of an experiment and write CSV metrics");
  add_common(run, run_opts, true);
  auto* sweep = app.add_subcommand("sweep", "Run the cartesian parameter grid and report the best cell");
  add_common(sweep, sweep_opts, true);
  auto* an = app.add_subcommand("analyze", "Stability analysis of selective TD for the configured env");
  add_common(an, analyze_opts, false);
  auto* orc = app.add_subcommand("oracle", "Compare online learners against independent oracles");
  orc->add_option("kind", oracle_kind, "forward-view, q-forward-view, expected-followon or expected-trace")
      ->required()
      ->check(CLI::IsMember({"forward-view", "q-forward-view", "expected-followon", "expected-trace"}));
  add_common(orc, oracle_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = load_config(run_opts.config);
      if (!cfg.sweep.empty()) throw ConfigError("sweep", "use the sweep subcommand for configs with a grid");
      const RunResult r = run_experiment(cfg, run_opts.threads, run_opts.seed_offset);
      const fs::path out = run_opts.out.empty() ? fs::path("out") / cfg.name : fs::path(run_opts.out);
      write_run(out, cfg, r);
      std::cout << summary_json(cfg, r).dump(2) << '\n';
      return 0;
    }
    if (*sweep) {
      const ExperimentConfig cfg = load_config(sweep_opts.config);
      const SweepResult sr = run_sweep(cfg, sweep_opts.threads, sweep_opts.seed_offset);
      const fs::path out = sweep_opts.out.empty() ? fs::path("out") / cfg.name : fs::path(sweep_opts.out);
      write_sweep(out, sr);
      std::cout << "best cell " << sr.cells[sr.best].run_id << " " << sr.cells[sr.best].assignment.dump() << " "
                << sr.metric << "=" << format_number(sr.score[sr.best]) << '\n';
      return 0;
    }
    if (*an) {
      const ExperimentConfig cfg = load_config(analyze_opts.config);
      emit(analyze_opts, "analysis.json", analyze(cfg));
      return 0;
    }
    if (*orc) {
      const ExperimentConfig cfg = load_config(oracle_opts.config);
      const OracleReport rep = run_oracle(oracle_kind, cfg);
      emit(oracle_opts, "oracle.json", rep.to_json());
      for (const auto& c : rep.checks) {
        std::cerr << (c.pass() ? "PASS " : "FAIL ") << c.name << ": " << format_number(c.deviation) << " (tol "
                  << format_number(c.tolerance) << ")\n";
      }
      return rep.pass() ? 0 : kExitCheckFailed;
    }
  } catch (const ConfigError& e) {
    log::error(std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 0;
}
