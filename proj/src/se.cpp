#include "mlamp/se.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "expectations.hpp"
#include "mlamp/components.hpp"
#include "mlamp/errors.hpp"
#include "mlamp/rng.hpp"

namespace mlamp {

void QuadratureConfig::validate() const {
  if (nodes_per_dim < 3) throw ConfigError("quadrature nodes_per_dim must be >= 3");
  if (!(abs_tol > 0.0) || !(rel_tol >= 0.0)) throw ConfigError("quadrature tolerances invalid");
  if (mc_fallback_samples < 2) throw ConfigError("mc_fallback_samples must be >= 2");
}

std::string to_string(SeInit init) {
  return init == SeInit::Uninformed ? "uninformed" : "informed";
}

namespace {

double clamp_overlap(double m, double rho) { return std::clamp(m, 0.0, rho - kOverlapMargin); }

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError("state evolution: non-finite " + what);
}

class Accumulator {
public:
  void add(double v) {
    sum_ += v;
    sq_ += v * v;
    ++n_;
  }
  McEstimate estimate(double scale) const {
    const double n = static_cast<double>(n_);
    const double mu = sum_ / n;
    const double var = std::max(sq_ / n - mu * mu, 0.0);
    return {scale * mu, std::abs(scale) * std::sqrt(var / n)};
  }

private:
  double sum_ = 0.0, sq_ = 0.0;
  std::int64_t n_ = 0;
};

double apply_channel(const ChannelSpec& ch, double pre) {
  if (ch.kind == ChannelKind::Awgn) return pre;
  return pre >= 0.0 ? 1.0 : -1.0;
}

}  // namespace

double first_layer_conjugate(const ChannelSpec& ch, double alpha, double rho1, double m1,
                             const QuadratureConfig& q) {
  const double m = clamp_overlap(m1, rho1);
  const double v = rho1 - m;
  if (ch.kind == ChannelKind::Awgn) return alpha / (v + inference_delta(ch));
  const auto e = detail::sign_first_expectation<1>(ch, rho1, m, q, [&](double y, double w) {
    return std::array<double, 1>{first_layer_g(ch, y, {v, w}).dg};
  });
  return -alpha * e[0];
}

MidLayerUpdate mid_layer_update(const ChannelSpec& ch, double alpha, double rho, double rho_prev,
                                double m_in, double a_in, const QuadratureConfig& q) {
  const double m = clamp_overlap(m_in, rho);
  const double a = std::max(a_in, kConjugateFloor);
  const double v = rho - m;
  if (ch.kind == ChannelKind::Awgn) {
    const double s = v + inference_delta(ch);
    const double d = 1.0 + a * s;
    return {alpha * a / d, (m + s * a * rho_prev) / d};
  }
  const auto e = detail::sign_mid_expectation<2>(ch, rho, m, a, q, [&](double h, double w, double b) {
    const auto mom = mid_layer_moments(ch, {a, b}, {v, w});
    return std::array<double, 2>{mom.dg, h * mom.hhat};
  });
  return {-alpha * e[0], e[1]};
}

double prior_overlap(const PriorSpec& prior, double mhat_in, const QuadratureConfig& q) {
  const double mhat = std::max(mhat_in, kConjugateFloor);
  const auto e = detail::prior_expectation<1>(prior, mhat, q, [&](double b, double xbar) {
    return std::array<double, 1>{xbar * prior_moments(prior, {mhat, b}).hhat};
  });
  return e[0];
}

McEstimate first_layer_conjugate_mc(const ChannelSpec& ch, double alpha, double rho1, double m1,
                                    std::int64_t samples, std::uint64_t seed) {
  const double m = clamp_overlap(m1, rho1);
  const double v = rho1 - m;
  auto rng = make_stream(seed, 1);
  std::normal_distribution<double> normal;
  Accumulator acc;
  for (std::int64_t i = 0; i < samples; ++i) {
    const double w = std::sqrt(m) * normal(rng);
    const double z = w + std::sqrt(v) * normal(rng);
    const double y = apply_channel(ch, z + std::sqrt(ch.delta) * normal(rng));
    acc.add(first_layer_g(ch, y, {v, w}).dg);
  }
  return acc.estimate(-alpha);
}

MidLayerMc mid_layer_update_mc(const ChannelSpec& ch, double alpha, double rho, double rho_prev,
                               double m_in, double a_in, std::int64_t samples,
                               std::uint64_t seed) {
  (void)rho_prev;  // implied by the sampled h
  const double m = clamp_overlap(m_in, rho);
  const double a = std::max(a_in, kConjugateFloor);
  const double v = rho - m;
  auto rng = make_stream(seed, 2);
  std::normal_distribution<double> normal;
  Accumulator dg, overlap;
  for (std::int64_t i = 0; i < samples; ++i) {
    const double w = std::sqrt(m) * normal(rng);
    const double z = w + std::sqrt(v) * normal(rng);
    const double h = apply_channel(ch, z + std::sqrt(ch.delta) * normal(rng));
    const double b = a * h + std::sqrt(a) * normal(rng);
    const auto mom = mid_layer_moments(ch, {a, b}, {v, w});
    dg.add(mom.dg);
    overlap.add(h * mom.hhat);
  }
  return {dg.estimate(-alpha), overlap.estimate(1.0)};
}

McEstimate prior_overlap_mc(const PriorSpec& prior, double mhat_in, std::int64_t samples,
                            std::uint64_t seed) {
  const double mhat = std::max(mhat_in, kConjugateFloor);
  const auto x = sample_prior(prior, static_cast<std::size_t>(samples), seed);
  auto rng = make_stream(seed, 3);
  std::normal_distribution<double> normal;
  Accumulator acc;
  for (double xi : x) {
    const double b = mhat * xi + std::sqrt(mhat) * normal(rng);
    acc.add(xi * prior_moments(prior, {mhat, b}).hhat);
  }
  return acc.estimate(1.0);
}

SePoint initial_point(const NetworkSpec& spec, SeInit init) {
  SePoint p;
  p.rho = second_moment_profile(spec);
  for (double r : p.rho) p.m.push_back(init == SeInit::Uninformed ? 1e-6 * r : (1.0 - 1e-6) * r);
  p.mhat.assign(p.rho.size(), 0.0);
  return p;
}

std::vector<double> conjugates_from_overlaps(const NetworkSpec& spec, std::span<const double> m,
                                             const QuadratureConfig& q) {
  const auto rho = second_moment_profile(spec);
  const std::size_t depth = spec.depth();
  std::vector<double> mhat(depth);
  mhat[0] = std::max(
      first_layer_conjugate(spec.layer(1).channel, spec.layer(1).alpha, rho[0], m[0], q),
      kConjugateFloor);
  for (std::size_t l = 2; l <= depth; ++l) {
    const auto u = mid_layer_update(spec.layer(l).channel, spec.layer(l).alpha, rho[l - 1],
                                    rho[l - 2], m[l - 1], mhat[l - 2], q);
    mhat[l - 1] = std::max(u.mhat, kConjugateFloor);
  }
  return mhat;
}

std::vector<double> overlaps_from_conjugates(const NetworkSpec& spec,
                                             std::span<const double> mhat,
                                             const QuadratureConfig& q) {
  const auto rho = second_moment_profile(spec);
  const std::size_t depth = spec.depth();
  std::vector<double> m(depth);
  m[depth - 1] = clamp_overlap(prior_overlap(spec.prior, mhat[depth - 1], q), rho[depth - 1]);
  for (std::size_t l = depth; l >= 2; --l) {
    const auto u = mid_layer_update(spec.layer(l).channel, spec.layer(l).alpha, rho[l - 1],
                                    rho[l - 2], m[l - 1], mhat[l - 2], q);
    m[l - 2] = clamp_overlap(u.m_prev, rho[l - 2]);
  }
  return m;
}

SePoint se_step(const NetworkSpec& spec, const SePoint& p, const QuadratureConfig& q,
                std::int64_t* clamps) {
  const std::size_t depth = spec.depth();
  SePoint next;
  next.rho = p.rho;
  next.t = p.t + 1;
  next.mhat.assign(depth, 0.0);
  next.m.assign(depth, 0.0);
  auto floor_conjugate = [&](double v) {
    if (v < kConjugateFloor) {
      if (clamps) ++*clamps;
      return kConjugateFloor;
    }
    return v;
  };

  const double mhat1 =
      first_layer_conjugate(spec.layer(1).channel, spec.layer(1).alpha, p.rho[0], p.m[0], q);
  require_finite(mhat1, "mhat at layer 1");
  next.mhat[0] = floor_conjugate(mhat1);
  for (std::size_t l = 2; l <= depth; ++l) {
    const auto u = mid_layer_update(spec.layer(l).channel, spec.layer(l).alpha, p.rho[l - 1],
                                    p.rho[l - 2], p.m[l - 1], next.mhat[l - 2], q);
    require_finite(u.mhat, "mhat at layer " + std::to_string(l));
    require_finite(u.m_prev, "m at layer " + std::to_string(l - 1));
    next.mhat[l - 1] = floor_conjugate(u.mhat);
    next.m[l - 2] = clamp_overlap(u.m_prev, p.rho[l - 2]);
  }
  const double m_signal = prior_overlap(spec.prior, next.mhat[depth - 1], q);
  require_finite(m_signal, "m at layer " + std::to_string(depth));
  next.m[depth - 1] = clamp_overlap(m_signal, p.rho[depth - 1]);
  return next;
}

SeResult se_fixed_point(const NetworkSpec& spec, SeInit init, const QuadratureConfig& q,
                        const SeOptions& opt) {
  spec.validate();
  q.validate();
  SeResult res;
  SePoint p = initial_point(spec, init);
  if (opt.record_trajectory) res.trajectory.push_back(p);
  for (int it = 1; it <= opt.max_iter; ++it) {
    SePoint next = se_step(spec, p, q, &res.clamp_count);
    double change = 0.0;
    for (std::size_t k = 0; k < p.m.size(); ++k) change = std::max(change, std::abs(next.m[k] - p.m[k]));
    p = std::move(next);
    res.iterations = it;
    if (opt.record_trajectory) res.trajectory.push_back(p);
    if (change < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.point = std::move(p);
  return res;
}

std::vector<double> se_mse(const SePoint& p) {
  std::vector<double> out(p.m.size());
  for (std::size_t k = 0; k < p.m.size(); ++k) out[k] = std::max(p.rho[k] - p.m[k], 0.0);
  return out;
}

}  // namespace mlamp
