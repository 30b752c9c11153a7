#pragma once

#include "mlamp/components.hpp"

// Quadrature oracle for the scalar components. Every partition function is
// integrated numerically from its definition (the channel's noise included),
// independently of the closed forms in components.cpp:
//   - oracle_moments: mean/variance integrals of the tilted measure,
//     e.g. g = E[z - w] / V, dg = Var[z - w] / V^2 - 1 / V, hhat = E[h];
//   - oracle_moments_fd: Richardson-extrapolated central differences of the
//     quadrature log Z.
// Slow; meant for tests and the `selftest` command. Throws OracleError when
// an integral misses its tolerance.
namespace mlamp {

struct OracleOptions {
  double abs_tol = 1e-14;
  double rel_tol = 1e-13;
  double fd_step = 1e-2;  ///< largest step of the Richardson tableau
};

ChannelMoments oracle_moments(const ChannelSpec& ch, VariableSide vs, FactorSide fs,
                              const OracleOptions& opt = {});
OutputMoments oracle_moments(const ChannelSpec& ch, double y, FactorSide fs,
                             const OracleOptions& opt = {});
PriorMoments oracle_moments(const PriorSpec& prior, VariableSide vs, const OracleOptions& opt = {});

ChannelMoments oracle_moments_fd(const ChannelSpec& ch, VariableSide vs, FactorSide fs,
                                 const OracleOptions& opt = {});
OutputMoments oracle_moments_fd(const ChannelSpec& ch, double y, FactorSide fs,
                                const OracleOptions& opt = {});
PriorMoments oracle_moments_fd(const PriorSpec& prior, VariableSide vs,
                               const OracleOptions& opt = {});

/// First and second derivative of f at x by central differences with two
/// levels of Richardson extrapolation (error O(h^6)).
struct Derivatives {
  double first;
  double second;
};

template <class F>
Derivatives richardson_derivatives(F&& f, double x, double h) {
  const double f0 = f(x);
  double d1[3], d2[3];
  for (int k = 0; k < 3; ++k) {
    const double step = h / static_cast<double>(1 << k);
    const double fp = f(x + step), fm = f(x - step);
    d1[k] = (fp - fm) / (2.0 * step);
    d2[k] = (fp - 2.0 * f0 + fm) / (step * step);
  }
  auto extrapolate = [](const double* d) {
    const double r1a = (4.0 * d[1] - d[0]) / 3.0;
    const double r1b = (4.0 * d[2] - d[1]) / 3.0;
    return (16.0 * r1b - r1a) / 15.0;
  };
  return {extrapolate(d1), extrapolate(d2)};
}

}  // namespace mlamp
