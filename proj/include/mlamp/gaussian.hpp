#pragma once

// Standard normal density and distribution functions with tail-stable
// ratios. Phi(x) denotes the standard normal cdf.
namespace mlamp::gaussian {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double pdf(double x);
double log_pdf(double x);
double cdf(double x);

/// log Phi(x), accurate for x -> -inf.
double log_cdf(double x);

/// Inverse Mills ratio phi(x) / Phi(x) (= d/dx log Phi(x)).
double mills_inverse(double x);

/// -d^2/dx^2 log Phi(x) = lambda(x) (x + lambda(x)), lambda = mills_inverse.
/// Lies in (0, 1); evaluated without cancellation for x -> -inf.
double mills_curvature(double x);

/// log(e^a + e^b)
double log_add_exp(double a, double b);

/// log cosh(x)
double log_cosh(double x);

}  // namespace mlamp::gaussian
