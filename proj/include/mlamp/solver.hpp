#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlamp/matrix.hpp"
#include "mlamp/model.hpp"

namespace mlamp {

struct SolverConfig {
  int max_iter = 500;
  double damping = 0.0;  ///< fraction of the previous (A, B, V, omega) retained
  double tol = 1e-8;     ///< stop when mean((x_hat_t - x_hat_{t-1})^2) < tol
  bool record_trace = false;
  /// Replace W2 s and W2^T dg by their row/column means times the entry
  /// variance (scalar-variance AMP). Off by default.
  bool scalar_variance = false;
  /// Damping used for the single retry after a divergence or domain error.
  double retry_damping = 0.5;
  /// Undamped runs whose x_hat change has not dropped below 0.9 of its best
  /// value for this many iterations are treated as oscillating and retried
  /// with retry_damping. 0 disables the check.
  int stall_window = 50;
  /// Start sigma^(l) at the prior second moment of layer l instead of 1.
  /// Puts iteration t on the same clock as the uninformed state evolution.
  bool prior_variance_init = false;

  void validate() const;
};

/// Per-layer working vectors at iteration t; layer l stored at index l - 1.
struct AmpState {
  std::vector<std::vector<double>> hhat;   ///< length n_l
  std::vector<std::vector<double>> sigma;  ///< length n_l
  std::vector<std::vector<double>> g;      ///< length n_{l-1}
  std::vector<std::vector<double>> dg;     ///< length n_{l-1}
  std::vector<std::vector<double>> V;      ///< length n_{l-1}
  std::vector<std::vector<double>> omega;  ///< length n_{l-1}
  std::vector<std::vector<double>> A;      ///< length n_l
  std::vector<std::vector<double>> B;      ///< length n_l
  int t = 0;
};

/// What the solver sees: channels, prior, weights and observations. Holds
/// non-owning references; the referenced objects must outlive it.
struct InferenceProblem {
  std::vector<ChannelSpec> channels;  ///< layer l at index l - 1
  PriorSpec prior;
  std::vector<const Matrix*> weights;
  std::vector<const Matrix*> squared_weights;
  std::span<const double> y;
  /// Initial sigma per layer; empty means 1 everywhere.
  std::vector<double> initial_sigma;

  static InferenceProblem from_instance(const ModelInstance& inst);
  std::size_t depth() const { return channels.size(); }
};

/// One ML-AMP trajectory. Each iteration sweeps l = 1..L computing
/// (V, omega), then (g, dg), then (A, B), and finally refreshes every
/// (hhat, sigma) from the new (A, B).
class MlampIteration {
public:
  MlampIteration(const InferenceProblem& problem, double damping, bool scalar_variance);

  /// Runs one sweep. Throws DomainError / NumericError from the components
  /// or when the state becomes non-finite.
  void step();

  const AmpState& state() const { return state_; }
  std::span<const double> x_hat() const { return state_.hhat.back(); }

private:
  const InferenceProblem& problem_;
  double damping_;
  bool scalar_variance_;
  AmpState state_;
  std::vector<double> scratch_a_, scratch_b_;
};

struct TraceRow {
  int t;
  int layer;  ///< 1..L
  double mse;
  double delta;  ///< mean squared change of x_hat at this iteration
};

struct SolverResult {
  std::vector<double> x_hat;
  std::vector<std::vector<double>> hhat;   ///< per layer, l at index l - 1
  std::vector<std::vector<double>> sigma;  ///< per layer
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double damping_used = 0.0;
  double final_delta = 0.0;
  std::vector<double> final_mse;   ///< per layer, against ground truth
  std::vector<double> stage_mse;   ///< layer-wise baseline only: stage 1, stage 2
  std::vector<TraceRow> trace;
};

/// ML-AMP on a sampled instance. Ground truth is read only for the MSE
/// diagnostics. On a domain error, a non-finite state or a stalled undamped
/// sweep the run is repeated once with damping cfg.retry_damping; a second
/// failure returns a result flagged diverged.
SolverResult run_mlamp(const ModelInstance& inst, const SolverConfig& cfg);

/// Two-stage single-layer decoding of a two-layer instance: AMP on layer 1
/// with stage_priors[0] as an i.i.d. prior on h^(1), then AMP on layer 2 with
/// sgn(hhat^(1)) (sign channels) or hhat^(1) (Awgn) as observations and
/// stage_priors[1] (defaults to the true prior) on x. For a sign second layer
/// the pseudo-observation noise is widened to match the flip rate
/// p = mean((1 - |hhat^(1)|) / 2) estimated by stage 1: delta = tan^2(pi p).
SolverResult run_layerwise_baseline(const ModelInstance& inst, const SolverConfig& cfg,
                                    std::span<const PriorSpec> stage_priors);

/// Mean of squared differences. Throws std::invalid_argument on a length mismatch.
double instance_mse(std::span<const double> estimate, std::span<const double> truth);

double mean(std::span<const double> v);

}  // namespace mlamp
