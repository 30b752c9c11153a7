#include "mlamp/components.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mlamp/errors.hpp"
#include "mlamp/gaussian.hpp"

namespace mlamp {

namespace {

void require_finite(double a, double b, double c, double d, const char* where) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || !std::isfinite(d)) {
    throw NumericError(std::string("non-finite input to ") + where);
  }
}

void require_positive_variance(double v, const char* where) {
  if (!(v > 0.0)) throw DomainError(std::string("non-positive variance in ") + where);
}

// log Z = -1/2 log(1 + A S) + (2 w B + B^2 S - A w^2) / (2 (1 + A S)),
// with S = V + delta: a Gaussian integral in (h, z).
ChannelMoments awgn_mid(double delta, VariableSide vs, FactorSide fs) {
  const double s = fs.V + delta;
  const double d = 1.0 + vs.A * s;
  if (!(d > 0.0)) throw DomainError("Awgn mid layer needs 1 + A (V + delta) > 0");
  const double a = vs.A, b = vs.B, w = fs.omega;
  ChannelMoments out;
  out.hhat = (w + b * s) / d;
  out.sigma = s / d;
  out.g = (b - a * w) / d;
  out.dg = -a / d;
  out.log_z = -0.5 * std::log(d) + (2.0 * w * b + b * b * s - a * w * w) / (2.0 * d);
  return out;
}

// log Z = -A/2 + log(e^B Phi(u) + e^-B Phi(-u)), u = w / sqrt(V + delta).
// The two terms are the posterior weights of h = +1 and h = -1; derivatives
// in w combine the per-branch curvatures of log Phi with the between-branch
// variance, which keeps dg free of cancellation in the tails.
ChannelMoments sign_mid(double delta, VariableSide vs, FactorSide fs) {
  const double s = fs.V + delta;
  const double root = std::sqrt(s);
  const double u = fs.omega / root;
  const double la = vs.B + gaussian::log_cdf(u);
  const double lb = -vs.B + gaussian::log_cdf(-u);
  const double lz = gaussian::log_add_exp(la, lb);
  const double pa = std::exp(la - lz);
  const double pb = std::exp(lb - lz);
  const double lam_a = gaussian::mills_inverse(u);
  const double lam_b = gaussian::mills_inverse(-u);

  ChannelMoments out;
  out.hhat = pa - pb;
  out.sigma = 4.0 * pa * pb;
  out.g = (pa * lam_a - pb * lam_b) / root;
  const double within = pa * gaussian::mills_curvature(u) + pb * gaussian::mills_curvature(-u);
  const double spread = lam_a + lam_b;
  const double between = (pa > 0.0 && pb > 0.0) ? pa * pb * spread * spread : 0.0;
  out.dg = (between - within) / s;
  out.log_z = -0.5 * vs.A + lz;
  return out;
}

}  // namespace

FactorSide regularized(FactorSide fs) {
  fs.V = std::max(fs.V, kVarianceFloor);
  return fs;
}

VariableSide regularized(VariableSide vs) {
  vs.A = std::max(vs.A, kVarianceFloor);
  return vs;
}

double inference_delta(const ChannelSpec& ch) {
  return ch.kind == ChannelKind::Awgn ? std::max(ch.delta, kVarianceFloor) : ch.delta;
}

ChannelMoments mid_layer_moments(const ChannelSpec& ch, VariableSide vs, FactorSide fs) {
  require_finite(vs.A, vs.B, fs.V, fs.omega, "mid_layer_moments");
  require_positive_variance(fs.V, "mid_layer_moments");
  switch (ch.kind) {
    case ChannelKind::Awgn: return awgn_mid(inference_delta(ch), vs, fs);
    case ChannelKind::SignWithNoise: return sign_mid(inference_delta(ch), vs, fs);
  }
  return {};
}

OutputMoments first_layer_g(const ChannelSpec& ch, double y, FactorSide fs) {
  require_finite(y, fs.V, fs.omega, 0.0, "first_layer_g");
  require_positive_variance(fs.V, "first_layer_g");
  const double s = fs.V + inference_delta(ch);
  OutputMoments out;
  switch (ch.kind) {
    case ChannelKind::Awgn: {
      const double r = y - fs.omega;
      out.g = r / s;
      out.dg = -1.0 / s;
      out.log_z = -0.5 * std::log(2.0 * std::numbers::pi * s) - r * r / (2.0 * s);
      break;
    }
    case ChannelKind::SignWithNoise: {
      if (y != 1.0 && y != -1.0) throw DomainError("sign channel observations must be +-1");
      const double root = std::sqrt(s);
      const double u = y * fs.omega / root;
      out.g = y * gaussian::mills_inverse(u) / root;
      out.dg = -gaussian::mills_curvature(u) / s;
      out.log_z = gaussian::log_cdf(u);
      break;
    }
  }
  return out;
}

PriorMoments prior_moments(const PriorSpec& prior, VariableSide vs) {
  require_finite(vs.A, vs.B, 0.0, 0.0, "prior_moments");
  PriorMoments out;
  switch (prior.kind) {
    case PriorKind::Rademacher: {
      out.hhat = std::tanh(vs.B);
      const double c = std::cosh(vs.B);
      out.sigma = 1.0 / (c * c);
      out.log_z = -0.5 * vs.A + gaussian::log_cosh(vs.B);
      break;
    }
    case PriorKind::Gaussian: {
      const double d = 1.0 + vs.A * prior.variance;
      if (!(d > 0.0)) throw DomainError("Gaussian prior needs 1 + A var > 0");
      out.hhat = vs.B * prior.variance / d;
      out.sigma = prior.variance / d;
      out.log_z = -0.5 * std::log(d) + vs.B * vs.B * prior.variance / (2.0 * d);
      break;
    }
    case PriorKind::GaussBernoulli: {
      const double p = 1.0 + vs.A;
      if (!(p > 0.0)) throw DomainError("GaussBernoulli prior needs 1 + A > 0");
      const double log_slab = std::log(prior.rho) - 0.5 * std::log(p) + vs.B * vs.B / (2.0 * p);
      const double log_spike = prior.rho < 1.0 ? std::log1p(-prior.rho)
                                               : -std::numeric_limits<double>::infinity();
      const double pi = 1.0 / (1.0 + std::exp(log_spike - log_slab));
      const double mean = vs.B / p;
      out.hhat = pi * mean;
      out.sigma = pi / p + pi * (1.0 - pi) * mean * mean;
      out.log_z = gaussian::log_add_exp(log_spike, log_slab);
      break;
    }
  }
  return out;
}

}  // namespace mlamp
