#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlamp/csv.hpp"
#include "mlamp/free_energy.hpp"
#include "mlamp/model.hpp"
#include "mlamp/se.hpp"
#include "mlamp/solver.hpp"

// Experiment configuration and the subcommands of the command-line tool.
// Configs are JSON; docs/config.md lists every key and CSV column.
namespace mlamp::experiments {

/// Model section: a named two-layer preset or explicit layers.
///   slr2        y = W1 (W2 x + N(0, delta2)) + N(0, delta1), GaussBernoulli(rho)
///   perceptron2 y = sgn(W1 (W2 x + N(0, delta2)) + N(0, delta1)), Rademacher
///   decoder2    y = W1 sgn(W2 x + N(0, delta2)) + N(0, delta1), Rademacher
/// The overall ratio alpha = alpha1 * alpha2 may be given instead of alpha1.
struct ModelConfig {
  std::string preset;  ///< empty for explicit layers
  double alpha = 0.0;   ///< > 0 when set
  double alpha1 = 0.0;  ///< > 0 when set; exactly one of alpha, alpha1 is set
  double alpha2 = 1.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double rho = 0.3;
  /// Single-layer reduction of the preset: slr2 -> Awgn(delta1) with
  /// GaussBernoulli(rho) at ratio alpha; perceptron2 -> sign(delta1) with
  /// Rademacher at alpha; decoder2 -> Awgn(delta1) with Rademacher at alpha1.
  bool single_layer = false;
  std::size_t n = 2000;  ///< signal dimension n_L
  std::vector<LayerSpec> layers;  ///< explicit models only
  PriorSpec prior;                ///< explicit models only

  static ModelConfig from_preset(const std::string& name);

  double resolved_alpha1() const;
  /// Sets a sweepable parameter: alpha, alpha1, alpha2, delta1, delta2, rho.
  void set(const std::string& param, double value);
  double get(const std::string& param) const;

  NetworkSpec network() const;
  bool operator==(const ModelConfig&) const = default;
};

struct SweepAxis {
  std::string param;
  double min = 0.0;
  double max = 0.0;
  int steps = 1;

  std::vector<double> values() const;
  bool operator==(const SweepAxis&) const = default;
};

struct SweepConfig {
  std::vector<SweepAxis> axes;  ///< empty selects the preset's 41 x 41 default
  /// Run ML-AMP on a sampled instance for every k-th cell (0 = never).
  int instance_every = 0;
  bool operator==(const SweepConfig&) const = default;
};

struct InstanceConfig {
  bool baseline = false;
  std::vector<PriorSpec> stage_priors;
  int repeats = 1;  ///< seeds seed, seed + 1, ...
  bool operator==(const InstanceConfig&) const = default;
};

struct ScanConfig {
  double m_min = 0.0;
  double m_max = -1.0;  ///< negative selects rho_L
  int steps = 101;
  bool operator==(const ScanConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model = ModelConfig::from_preset("slr2");
  SolverConfig solver;
  QuadratureConfig quadrature;
  SeOptions se;
  double mse_threshold = 0.0;  ///< <= 0 selects 1e-4 rho_L
  double tie_tolerance = 1e-9;
  ScanConfig scan;
  SweepConfig sweep;
  InstanceConfig instance;
  std::uint64_t seed = 1;
  std::string output;

  void validate() const;
  FreeEnergyOptions free_energy_options() const;
};

/// Parses JSON text. Unknown keys, wrong types and invalid values throw
/// ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Full JSON form (every key written), parseable by parse_config.
std::string serialize_config(const ExperimentConfig& cfg, int indent = 2);

/// Default sweep axes of a preset.
std::vector<SweepAxis> default_axes(const ModelConfig& model);

struct RunOptions {
  bool timestamps = true;  ///< false also prints runtimes as NA
};

CsvTable cmd_instance(const ExperimentConfig& cfg, const RunOptions& run = {});
CsvTable cmd_se(const ExperimentConfig& cfg, const RunOptions& run = {});
CsvTable cmd_sweep(const ExperimentConfig& cfg, const RunOptions& run = {});
CsvTable cmd_free_energy(const ExperimentConfig& cfg, const RunOptions& run = {});

/// Closed forms against the quadrature oracle on `draws` random inputs per
/// channel and prior; `passed` is false on any tolerance violation.
struct SelftestResult {
  CsvTable table;
  bool passed;
};
SelftestResult cmd_selftest(int draws, std::uint64_t seed);

}  // namespace mlamp::experiments
