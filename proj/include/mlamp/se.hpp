#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlamp/model.hpp"

// State evolution of ML-AMP: the scalar overlaps m^(l) and their conjugates
// mhat^(l). Each time step computes mhat^(1..L) from m(t) (bottom-up, each
// mhat^(l) using mhat^(l-1) of the same step) and then m(t+1) from them.
namespace mlamp {

struct QuadratureConfig {
  /// Gauss-Hermite order per dimension when adaptive == false.
  int nodes_per_dim = 21;
  /// Nested adaptive Gauss-Kronrod over standardized Gaussians (default).
  bool adaptive = true;
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  /// Sample count of the Monte-Carlo estimators.
  std::int64_t mc_fallback_samples = 1'000'000;
  std::uint64_t mc_seed = 7;

  void validate() const;
};

struct SePoint {
  std::vector<double> m;     ///< overlaps, layer l at index l - 1
  std::vector<double> mhat;  ///< conjugates
  std::vector<double> rho;   ///< second moments
  int t = 0;
};

enum class SeInit { Uninformed, Informed };

std::string to_string(SeInit init);

struct SeOptions {
  int max_iter = 20000;
  double tol = 1e-13;  ///< on max_l |m_l(t+1) - m_l(t)|
  bool record_trajectory = false;
};

struct SeResult {
  SePoint point;
  bool converged = false;
  int iterations = 0;
  std::int64_t clamp_count = 0;  ///< mhat values raised to the floor
  std::vector<SePoint> trajectory;  ///< t = 0, 1, ... when recorded
};

/// Lower clamp of mhat; m is clamped to [0, rho - kOverlapMargin].
inline constexpr double kConjugateFloor = 1e-12;
inline constexpr double kOverlapMargin = 1e-12;

// Per-layer scalar maps.

/// mhat^(1) = -alpha_1 E dg^(1) at overlap m1.
double first_layer_conjugate(const ChannelSpec& ch, double alpha, double rho1, double m1,
                             const QuadratureConfig& q);

struct MidLayerUpdate {
  double mhat;    ///< mhat^(l)
  double m_prev;  ///< m^(l-1)
};

/// Layer l >= 2 given m^(l), mhat^(l-1) = a, rho_l and rho_{l-1}.
MidLayerUpdate mid_layer_update(const ChannelSpec& ch, double alpha, double rho, double rho_prev,
                                double m, double a, const QuadratureConfig& q);

/// m^(L) = E x hhat(mhat, b).
double prior_overlap(const PriorSpec& prior, double mhat, const QuadratureConfig& q);

/// Monte-Carlo counterparts sampling the generative chain directly.
struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
McEstimate first_layer_conjugate_mc(const ChannelSpec& ch, double alpha, double rho1, double m1,
                                    std::int64_t samples, std::uint64_t seed);
struct MidLayerMc {
  McEstimate mhat;
  McEstimate m_prev;
};
MidLayerMc mid_layer_update_mc(const ChannelSpec& ch, double alpha, double rho, double rho_prev,
                               double m, double a, std::int64_t samples, std::uint64_t seed);
McEstimate prior_overlap_mc(const PriorSpec& prior, double mhat, std::int64_t samples,
                            std::uint64_t seed);

/// Starting point: m = 1e-6 rho (Uninformed) or (1 - 1e-6) rho (Informed).
SePoint initial_point(const NetworkSpec& spec, SeInit init);

/// One time step. Throws NumericError naming the layer on non-finite output.
/// `clamps` (optional) is incremented for each mhat raised to the floor.
SePoint se_step(const NetworkSpec& spec, const SePoint& p, const QuadratureConfig& q,
                std::int64_t* clamps = nullptr);

/// Bottom-up half step: mhat^(1..L) from m.
std::vector<double> conjugates_from_overlaps(const NetworkSpec& spec, std::span<const double> m,
                                             const QuadratureConfig& q);

/// Top-down half step: m^(L) from mhat^(L), then m^(l-1) from m^(l) and mhat^(l-1).
std::vector<double> overlaps_from_conjugates(const NetworkSpec& spec,
                                             std::span<const double> mhat,
                                             const QuadratureConfig& q);

/// Iterates se_step until the overlaps stop moving. An unconverged run
/// returns its last point with converged == false.
SeResult se_fixed_point(const NetworkSpec& spec, SeInit init, const QuadratureConfig& q,
                        const SeOptions& opt = {});

/// rho_l - m_l per layer.
std::vector<double> se_mse(const SePoint& p);

}  // namespace mlamp
