#include "mlamp/gaussian.hpp"

#include <cmath>
#include <limits>

namespace mlamp::gaussian {

namespace {

constexpr double kSqrt1_2 = 0.70710678118654752440;

// Below this argument log_cdf, mills_inverse and mills_curvature switch to the
// asymptotic expansion of the Mills ratio R(t) = Phi(-t) / phi(t).
constexpr double kTailSwitch = -12.0;

// Returns (R(t), 1 - t R(t)) for t >= 12 from
//   t R(t) = sum_k (-1)^k (2k-1)!! / t^{2k}.
// The series is asymptotic; its terms keep shrinking far beyond the point
// where they drop below double precision for t >= 12.
struct MillsTail {
  double ratio;
  double one_minus_t_ratio;
};

MillsTail mills_tail(double t) {
  const double inv_t2 = 1.0 / (t * t);
  double term = 1.0;
  double tail = 0.0;  // sum over k >= 1
  for (int k = 1; k < 60; ++k) {
    term *= -(2.0 * k - 1.0) * inv_t2;
    tail += term;
    if (std::abs(term) < 1e-18 * std::abs(tail)) break;
  }
  return {(1.0 + tail) / t, -tail};
}

}  // namespace

double pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double cdf(double x) { return 0.5 * std::erfc(-x * kSqrt1_2); }

double log_cdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kSqrt1_2));
  if (x > kTailSwitch) return std::log(0.5 * std::erfc(-x * kSqrt1_2));
  return log_pdf(x) + std::log(mills_tail(-x).ratio);
}

double mills_inverse(double x) {
  if (x > kTailSwitch) return pdf(x) / cdf(x);
  return 1.0 / mills_tail(-x).ratio;
}

double mills_curvature(double x) {
  if (x > kTailSwitch) {
    const double lambda = mills_inverse(x);
    return lambda * (x + lambda);
  }
  const auto tail = mills_tail(-x);
  return tail.one_minus_t_ratio / (tail.ratio * tail.ratio);
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

double log_cosh(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

}  // namespace mlamp::gaussian
