#include "mlamp/oracle.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mlamp/errors.hpp"
#include "mlamp/quadrature.hpp"

namespace mlamp {

namespace {

using quadrature::Feature;
using quadrature::kNormalCutoff;

template <std::size_t K>
std::array<double, K> checked(const quadrature::Integral<K>& r, const char* what) {
  if (!r.converged) throw OracleError(std::string("quadrature did not converge: ") + what);
  for (double v : r.value) {
    if (!std::isfinite(v)) throw OracleError(std::string("non-finite quadrature value: ") + what);
  }
  return r.value;
}

// max over s in [-cutoff, cutoff] of log_weight(s) - s^2/2, on a grid. Used
// only to shift exponents so that integrands stay O(1).
template <class F>
std::pair<double, double> peak(F&& log_weight) {
  double best = -std::numeric_limits<double>::infinity();
  double where = 0.0;
  for (int i = -520; i <= 520; ++i) {
    const double s = 0.025 * i;
    const double v = log_weight(s) - 0.5 * s * s;
    if (v > best) {
      best = v;
      where = s;
    }
  }
  return {best, where};
}

// P(h (z + sqrt(delta) t) > 0), t ~ N(0,1), by quadrature of the density.
double sign_probability(double h, double z, double delta, const OracleOptions& opt) {
  if (delta == 0.0) {
    if (z == 0.0) return 0.5;
    return h * z > 0.0 ? 1.0 : 0.0;
  }
  const double lo = -h * z / std::sqrt(delta);
  if (lo >= kNormalCutoff) return 0.0;
  const std::array<double, 2> cuts = {std::max(lo, -kNormalCutoff), kNormalCutoff};
  auto density = [](double t) {
    return std::array<double, 1>{0.39894228040143267794 * std::exp(-0.5 * t * t)};
  };
  return checked(quadrature::integrate<1>(density, cuts, 0.1 * opt.abs_tol, opt.rel_tol),
                 "sign probability")[0];
}

struct TiltedStats {
  double log_z;
  double mean_h;
  double var_h;
  double mean_d;
  double var_d;
};

TiltedStats awgn_mid_stats(double delta, VariableSide vs, FactorSide fs, const OracleOptions& opt) {
  const double rv = std::sqrt(fs.V), rd = std::sqrt(delta);
  auto log_tilt = [&](double h) { return -0.5 * vs.A * h * h + vs.B * h; };
  const auto [shift, s_star] = peak([&](double s) { return log_tilt(fs.omega + rv * s); });
  const double width = 1.0 / std::sqrt(std::max(1.0 + vs.A * fs.V, 1e-300));
  const std::array<Feature, 1> feature = {Feature{s_star, width}};

  // inner: integrate over t for fixed z, returning [I0, I_h] or centered second moments
  auto pass1 = [&](double s) {
    const double z = fs.omega + rv * s;
    auto inner = [&](double t) {
      const double h = z + rd * t;
      const double e = std::exp(log_tilt(h) - shift);
      return std::array<double, 2>{e, h * e};
    };
    const auto r = checked(quadrature::normal_expectation<2>(inner, 0.0, 1.0, {}, 0.1 * opt.abs_tol,
                                                             opt.rel_tol),
                           "awgn mid inner");
    return std::array<double, 3>{r[0], r[1], rv * s * r[0]};
  };
  const auto m1 = checked(
      quadrature::normal_expectation<3>(pass1, 0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
      "awgn mid pass 1");
  const double z0 = m1[0];
  const double mean_h = m1[1] / z0, mean_d = m1[2] / z0;

  auto pass2 = [&](double s) {
    const double z = fs.omega + rv * s;
    const double d = rv * s;
    auto inner = [&](double t) {
      const double h = z + rd * t;
      const double e = std::exp(log_tilt(h) - shift);
      return std::array<double, 2>{(h - mean_h) * (h - mean_h) * e, e};
    };
    const auto r = checked(quadrature::normal_expectation<2>(inner, 0.0, 1.0, {}, 0.1 * opt.abs_tol,
                                                             opt.rel_tol),
                           "awgn mid inner");
    return std::array<double, 2>{r[0], (d - mean_d) * (d - mean_d) * r[1]};
  };
  const auto m2 = checked(
      quadrature::normal_expectation<2>(pass2, 0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
      "awgn mid pass 2");
  return {shift + std::log(z0), mean_h, m2[0] / z0, mean_d, m2[1] / z0};
}

TiltedStats sign_mid_stats(double delta, VariableSide vs, FactorSide fs, const OracleOptions& opt) {
  const double rv = std::sqrt(fs.V);
  const double log_c_plus = -0.5 * vs.A + vs.B;
  const double log_c_minus = -0.5 * vs.A - vs.B;
  const double shift = std::max(log_c_plus, log_c_minus);
  const double c_plus = std::exp(log_c_plus - shift), c_minus = std::exp(log_c_minus - shift);
  const std::array<Feature, 1> feature = {
      Feature{-fs.omega / rv, std::max(std::sqrt(delta / fs.V), 1e-300)}};

  auto pass1 = [&](double s) {
    const double z = fs.omega + rv * s;
    const double pp = sign_probability(1.0, z, delta, opt);
    const double pm = sign_probability(-1.0, z, delta, opt);
    const double w = c_plus * pp + c_minus * pm;
    return std::array<double, 3>{c_plus * pp, c_minus * pm, rv * s * w};
  };
  const auto m1 = checked(
      quadrature::normal_expectation<3>(pass1, 0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
      "sign mid pass 1");
  const double z0 = m1[0] + m1[1];
  const double p_plus = m1[0] / z0, p_minus = m1[1] / z0;
  const double mean_h = p_plus - p_minus;
  const double mean_d = m1[2] / z0;

  auto pass2 = [&](double s) {
    const double z = fs.omega + rv * s;
    const double w = c_plus * sign_probability(1.0, z, delta, opt) +
                     c_minus * sign_probability(-1.0, z, delta, opt);
    const double d = rv * s - mean_d;
    return std::array<double, 1>{d * d * w};
  };
  const auto m2 = checked(
      quadrature::normal_expectation<1>(pass2, 0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
      "sign mid pass 2");
  const double var_h = p_plus * (1.0 - mean_h) * (1.0 - mean_h) +
                       p_minus * (1.0 + mean_h) * (1.0 + mean_h);
  return {shift + std::log(z0), mean_h, var_h, mean_d, m2[0] / z0};
}

TiltedStats mid_stats(const ChannelSpec& ch, VariableSide vs, FactorSide fs,
                      const OracleOptions& opt) {
  if (!(fs.V > 0.0)) throw DomainError("oracle needs V > 0");
  const double delta = inference_delta(ch);
  return ch.kind == ChannelKind::Awgn ? awgn_mid_stats(delta, vs, fs, opt)
                                      : sign_mid_stats(delta, vs, fs, opt);
}

// log Z, E[d], Var[d] of the first-layer measure N(z; w, V) P_out(y | z), d = z - w.
struct OutputStats {
  double log_z;
  double mean_d;
  double var_d;
};

// The likelihood mass can sit deep in the Gaussian tail, so first-layer
// integrals are controlled by relative error only.
constexpr double kTinyAbsTol = 1e-300;

OutputStats first_stats(const ChannelSpec& ch, double y, FactorSide fs, const OracleOptions& opt) {
  if (!(fs.V > 0.0)) throw DomainError("oracle needs V > 0");
  const double rv = std::sqrt(fs.V);
  const double delta = inference_delta(ch);
  if (ch.kind == ChannelKind::Awgn) {
    // likelihood N(y; z, delta) written as exp(-(y-z)^2 / 2 delta) / sqrt(2 pi delta)
    const std::array<Feature, 1> feature = {Feature{(y - fs.omega) / rv, std::sqrt(delta / fs.V)}};
    auto lik = [&](double s) {
      const double r = y - fs.omega - rv * s;
      return std::exp(-r * r / (2.0 * delta));
    };
    const auto m1 = checked(quadrature::normal_expectation<2>(
                                [&](double s) {
                                  const double e = lik(s);
                                  return std::array<double, 2>{e, rv * s * e};
                                },
                                0.0, 1.0, feature, kTinyAbsTol, opt.rel_tol),
                            "first layer awgn pass 1");
    const double mean_d = m1[1] / m1[0];
    const auto m2 = checked(quadrature::normal_expectation<1>(
                                [&](double s) {
                                  const double d = rv * s - mean_d;
                                  return std::array<double, 1>{d * d * lik(s)};
                                },
                                0.0, 1.0, feature, kTinyAbsTol, opt.rel_tol),
                            "first layer awgn pass 2");
    return {std::log(m1[0]) - 0.5 * std::log(2.0 * std::numbers::pi * delta), mean_d,
            m2[0] / m1[0]};
  }
  if (y != 1.0 && y != -1.0) throw DomainError("sign channel observations must be +-1");
  const std::array<Feature, 1> feature = {
      Feature{-fs.omega / rv, std::max(std::sqrt(delta / fs.V), 1e-300)}};
  auto prob = [&](double s) { return sign_probability(y, fs.omega + rv * s, delta, opt); };
  const auto m1 = checked(quadrature::normal_expectation<2>(
                              [&](double s) {
                                const double p = prob(s);
                                return std::array<double, 2>{p, rv * s * p};
                              },
                              0.0, 1.0, feature, kTinyAbsTol, opt.rel_tol),
                          "first layer sign pass 1");
  const double mean_d = m1[1] / m1[0];
  const auto m2 = checked(quadrature::normal_expectation<1>(
                              [&](double s) {
                                const double d = rv * s - mean_d;
                                return std::array<double, 1>{d * d * prob(s)};
                              },
                              0.0, 1.0, feature, kTinyAbsTol, opt.rel_tol),
                          "first layer sign pass 2");
  return {std::log(m1[0]), mean_d, m2[0] / m1[0]};
}

// One mixture component of the prior after tilting: log mass, mean, variance.
struct Component {
  double log_mass;
  double mean;
  double var;
};

Component point_mass(double log_weight, double at, VariableSide vs) {
  return {log_weight - 0.5 * vs.A * at * at + vs.B * at, at, 0.0};
}

Component gaussian_component(double log_weight, double variance, VariableSide vs,
                             const OracleOptions& opt) {
  if (!(1.0 + vs.A * variance > 0.0)) throw DomainError("tilted Gaussian prior is not normalizable");
  const double rv = std::sqrt(variance);
  auto log_tilt = [&](double s) {
    const double x = rv * s;
    return -0.5 * vs.A * x * x + vs.B * x;
  };
  const auto [tilt_shift, s_star] = peak(log_tilt);
  const std::array<Feature, 1> feature = {
      Feature{s_star, 1.0 / std::sqrt(1.0 + vs.A * variance)}};
  auto weight = [&](double s) { return std::exp(log_tilt(s) - tilt_shift); };
  const auto m1 = checked(quadrature::normal_expectation<2>(
                              [&](double s) {
                                const double e = weight(s);
                                return std::array<double, 2>{e, rv * s * e};
                              },
                              0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
                          "prior pass 1");
  const double mean = m1[1] / m1[0];
  const auto m2 = checked(quadrature::normal_expectation<1>(
                              [&](double s) {
                                const double d = rv * s - mean;
                                return std::array<double, 1>{d * d * weight(s)};
                              },
                              0.0, 1.0, feature, opt.abs_tol, opt.rel_tol),
                          "prior pass 2");
  return {log_weight + tilt_shift + std::log(m1[0]), mean, m2[0] / m1[0]};
}

PriorMoments combine(std::initializer_list<Component> comps) {
  double log_z = -std::numeric_limits<double>::infinity();
  for (const auto& c : comps) {
    if (log_z == -std::numeric_limits<double>::infinity()) {
      log_z = c.log_mass;
    } else if (c.log_mass != -std::numeric_limits<double>::infinity()) {
      log_z = std::max(log_z, c.log_mass) +
              std::log1p(std::exp(-std::abs(log_z - c.log_mass)));
    }
  }
  double mean = 0.0;
  for (const auto& c : comps) mean += std::exp(c.log_mass - log_z) * c.mean;
  double var = 0.0;
  for (const auto& c : comps) {
    const double p = std::exp(c.log_mass - log_z);
    var += p * (c.var + (c.mean - mean) * (c.mean - mean));
  }
  return {mean, var, log_z};
}

double prior_log_z(const PriorSpec& prior, VariableSide vs, const OracleOptions& opt) {
  switch (prior.kind) {
    case PriorKind::Rademacher:
      return combine({point_mass(std::log(0.5), 1.0, vs), point_mass(std::log(0.5), -1.0, vs)})
          .log_z;
    case PriorKind::Gaussian:
      return gaussian_component(0.0, prior.variance, vs, opt).log_mass;
    case PriorKind::GaussBernoulli: {
      const double spike = prior.rho < 1.0 ? std::log1p(-prior.rho)
                                           : -std::numeric_limits<double>::infinity();
      return combine({point_mass(spike, 0.0, vs),
                      gaussian_component(std::log(prior.rho), 1.0, vs, opt)})
          .log_z;
    }
  }
  return 0.0;
}

}  // namespace

ChannelMoments oracle_moments(const ChannelSpec& ch, VariableSide vs, FactorSide fs,
                              const OracleOptions& opt) {
  const auto st = mid_stats(ch, vs, fs, opt);
  ChannelMoments out;
  out.hhat = st.mean_h;
  out.sigma = st.var_h;
  out.g = st.mean_d / fs.V;
  out.dg = st.var_d / (fs.V * fs.V) - 1.0 / fs.V;
  out.log_z = st.log_z;
  return out;
}

OutputMoments oracle_moments(const ChannelSpec& ch, double y, FactorSide fs,
                             const OracleOptions& opt) {
  const auto st = first_stats(ch, y, fs, opt);
  return {st.mean_d / fs.V, st.var_d / (fs.V * fs.V) - 1.0 / fs.V, st.log_z};
}

PriorMoments oracle_moments(const PriorSpec& prior, VariableSide vs, const OracleOptions& opt) {
  switch (prior.kind) {
    case PriorKind::Rademacher:
      return combine({point_mass(std::log(0.5), 1.0, vs), point_mass(std::log(0.5), -1.0, vs)});
    case PriorKind::Gaussian: {
      const auto c = gaussian_component(0.0, prior.variance, vs, opt);
      return {c.mean, c.var, c.log_mass};
    }
    case PriorKind::GaussBernoulli: {
      const double spike = prior.rho < 1.0 ? std::log1p(-prior.rho)
                                           : -std::numeric_limits<double>::infinity();
      return combine({point_mass(spike, 0.0, vs),
                      gaussian_component(std::log(prior.rho), 1.0, vs, opt)});
    }
  }
  return {};
}

ChannelMoments oracle_moments_fd(const ChannelSpec& ch, VariableSide vs, FactorSide fs,
                                 const OracleOptions& opt) {
  auto log_z_omega = [&](double w) { return mid_stats(ch, vs, {fs.V, w}, opt).log_z; };
  auto log_z_field = [&](double b) { return mid_stats(ch, {vs.A, b}, fs, opt).log_z; };
  const auto dw = richardson_derivatives(log_z_omega, fs.omega, opt.fd_step);
  const auto db = richardson_derivatives(log_z_field, vs.B, opt.fd_step);
  ChannelMoments out;
  out.g = dw.first;
  out.dg = dw.second;
  out.hhat = db.first;
  out.sigma = db.second;
  out.log_z = log_z_omega(fs.omega);
  return out;
}

OutputMoments oracle_moments_fd(const ChannelSpec& ch, double y, FactorSide fs,
                                const OracleOptions& opt) {
  auto log_z = [&](double w) { return first_stats(ch, y, {fs.V, w}, opt).log_z; };
  const auto d = richardson_derivatives(log_z, fs.omega, opt.fd_step);
  return {d.first, d.second, log_z(fs.omega)};
}

PriorMoments oracle_moments_fd(const PriorSpec& prior, VariableSide vs, const OracleOptions& opt) {
  auto log_z = [&](double b) { return prior_log_z(prior, {vs.A, b}, opt); };
  const auto d = richardson_derivatives(log_z, vs.B, opt.fd_step);
  return {d.first, d.second, log_z(vs.B)};
}

}  // namespace mlamp
