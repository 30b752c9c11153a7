// Command-line front end: mlamp <instance|se|sweep|free-energy|selftest> [options]

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mlamp/errors.hpp"
#include "mlamp/experiments.hpp"
#include "mlamp/kernels.hpp"

namespace ex = mlamp::experiments;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool no_timestamp = false;
};

ex::ExperimentConfig load(const Globals& g) {
  ex::ExperimentConfig cfg = g.config.empty() ? ex::ExperimentConfig{} : ex::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.output = g.out;
  cfg.validate();
  return cfg;
}

void emit(const mlamp::CsvTable& table, const std::string& path, bool timestamp) {
  const std::string text = table.render(timestamp);
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    mlamp::write_file_atomic(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-layer AMP, state evolution and free-energy experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--out", g.out, "CSV output path ('-' or empty: stdout; overrides config)");
  app.add_option("--seed", g.seed, "Base seed (overrides config)");
  app.add_option("--threads", g.threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--no-timestamp", g.no_timestamp, "Omit the timestamp line and runtimes");

  auto* instance = app.add_subcommand("instance", "Run ML-AMP on sampled instances");
  auto* se = app.add_subcommand("se", "State evolution from both initializations");
  auto* sweep = app.add_subcommand("sweep", "Phase diagram over a parameter grid");
  auto* free_energy = app.add_subcommand("free-energy", "Free energy along m of the signal layer");
  auto* selftest = app.add_subcommand("selftest", "Closed forms against the quadrature oracle");
  int draws = 200;
  selftest->add_option("--draws", draws, "Random inputs per component")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.threads > 0) mlamp::kernels::set_threads(g.threads);
    const ex::RunOptions run{!g.no_timestamp};
    if (selftest->parsed()) {
      const auto r = ex::cmd_selftest(draws, g.seed.value_or(1));
      emit(r.table, g.out, !g.no_timestamp);
      return r.passed ? 0 : 1;
    }
    const ex::ExperimentConfig cfg = load(g);
    mlamp::CsvTable table({});
    if (instance->parsed()) {
      table = ex::cmd_instance(cfg, run);
    } else if (se->parsed()) {
      table = ex::cmd_se(cfg, run);
    } else if (sweep->parsed()) {
      table = ex::cmd_sweep(cfg, run);
    } else if (free_energy->parsed()) {
      table = ex::cmd_free_energy(cfg, run);
    }
    emit(table, cfg.output, !g.no_timestamp);
  } catch (const mlamp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
