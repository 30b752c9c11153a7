#pragma once

#include "mlamp/model.hpp"

// Scalar building blocks of ML-AMP and its state evolution: the partition
// functions Z coupling adjacent layers and their log-derivatives.
//
//   mid layer   Z(A, B, V, w) = int dh dz P_out(h|z) e^{-A h^2/2 + B h} N(z; w, V)
//   first layer Z(y, V, w)    = int dz P_out(y|z) N(z; w, V)
//   prior       Z(A, B)       = int dh P_X(h) e^{-A h^2/2 + B h}
//
// g = d_w log Z, dg = d_w^2 log Z, hhat = d_B log Z, sigma = d_B^2 log Z.
// Each channel derives all of its moments from a single log Z expression.
namespace mlamp {

/// Gaussian belief on z held by a factor node.
struct FactorSide {
  double V;      ///< variance, > 0
  double omega;  ///< mean
};

/// Quadratic tilt on h held by a variable node.
struct VariableSide {
  double A;  ///< precision-like
  double B;  ///< field-like
};

struct ChannelMoments {
  double g = 0.0;
  double dg = 0.0;
  double hhat = 0.0;
  double sigma = 0.0;
  double log_z = 0.0;
};

struct OutputMoments {
  double g = 0.0;
  double dg = 0.0;
  double log_z = 0.0;
};

struct PriorMoments {
  double hhat = 0.0;
  double sigma = 0.0;
  double log_z = 0.0;
};

/// Lower clamp applied to V, A and the Awgn noise variance before use.
inline constexpr double kVarianceFloor = 1e-12;

/// Clamps V (and A) from below at kVarianceFloor.
FactorSide regularized(FactorSide fs);
VariableSide regularized(VariableSide vs);

/// Noise variance used by inference formulas: Awgn channels are floored at
/// kVarianceFloor, sign channels keep delta (their formulas admit delta = 0).
double inference_delta(const ChannelSpec& ch);

/// Moments of Z^(l) for 2 <= l <= L. Throws NumericError on non-finite
/// inputs, DomainError when V <= 0 or 1 + A (V + delta) <= 0 (Awgn).
ChannelMoments mid_layer_moments(const ChannelSpec& ch, VariableSide vs, FactorSide fs);

/// g, dg of Z^(1). Sign channels require y = +-1.
OutputMoments first_layer_g(const ChannelSpec& ch, double y, FactorSide fs);

/// hhat, sigma of Z^(L+1). Gaussian-type priors require 1 + A var > 0.
PriorMoments prior_moments(const PriorSpec& prior, VariableSide vs);

}  // namespace mlamp
