#pragma once

#include <span>
#include <string>
#include <vector>

#include "mlamp/model.hpp"
#include "mlamp/se.hpp"

namespace mlamp {

/// Replica-symmetric free energy per signal component, to be minimized:
///   phi = 1/2 sum_l at_l m_l mhat_l - at_L I_prior(mhat_L)
///         - sum_{l>=2} at_{l-1} I_l(m_l, mhat_{l-1}) - at_0 I_1(m_1)
/// with at_l = n_l / n_L and I_* the expected log partition functions.
/// Throws NumericError naming the offending term.
double phi_rs(const NetworkSpec& spec, std::span<const double> m, std::span<const double> mhat,
              const QuadratureConfig& q);

enum class Phase { Easy, Hard, Impossible, Unknown };

std::string to_string(Phase phase);

/// Easy if amp_mse <= threshold, else Hard if mmse <= threshold, else Impossible.
Phase classify_phase(double mmse, double amp_mse, double threshold);

struct FreeEnergyOptions {
  SeOptions se;
  /// Non-positive selects the default 1e-4 * rho_L.
  double mse_threshold = 0.0;
  /// Free-energy gap below which the larger overlap wins.
  double tie_tolerance = 1e-9;
};

struct FreeEnergyReport {
  double phi_uninformed = 0.0;
  double phi_informed = 0.0;
  std::vector<double> m_it;
  double mmse = 0.0;
  double amp_mse = 0.0;
  Phase phase = Phase::Unknown;
  double mse_threshold = 0.0;
  bool informed_selected = false;
  SeResult uninformed;
  SeResult informed;
};

/// Runs the state evolution from both initializations and keeps the fixed
/// point with the lower free energy. Phase is Unknown when either run did
/// not converge.
FreeEnergyReport locate_m_it(const NetworkSpec& spec, const QuadratureConfig& q,
                             const FreeEnergyOptions& opt = {});

struct StationarityReport {
  /// d phi / d mhat_l with m from the top-down half step; the step is
  /// step * max(1, mhat_l).
  std::vector<double> conjugate_gradient;
  /// d phi / d m_l with mhat from the bottom-up half step. Only evaluated
  /// where m_l and rho_l - m_l both exceed 10 * step; NaN elsewhere.
  std::vector<double> overlap_gradient;
  double max_abs = 0.0;  ///< over all evaluated entries
};

StationarityReport stationarity_gradient(const NetworkSpec& spec, const SePoint& p,
                                         const QuadratureConfig& q, double step = 1e-5);

struct ScanRow {
  double m_signal = 0.0;
  double phi = 0.0;
  bool inner_converged = true;
  std::vector<double> m;
  std::vector<double> mhat;
};

/// phi along m^(L) in [m_min, m_max] (steps points; one row when the range
/// is a single value). The other overlaps are relaxed by the state
/// evolution with m^(L) held fixed; mhat follows from the bottom-up half step.
std::vector<ScanRow> scan_free_energy(const NetworkSpec& spec, const QuadratureConfig& q,
                                      double m_min, double m_max, int steps,
                                      const SeOptions& opt = {});

}  // namespace mlamp
