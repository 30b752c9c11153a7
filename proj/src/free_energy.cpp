#include "mlamp/free_energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "expectations.hpp"
#include "mlamp/components.hpp"
#include "mlamp/errors.hpp"

namespace mlamp {

namespace {

double checked(double v, const std::string& term) {
  if (!std::isfinite(v)) throw NumericError("free energy: non-finite " + term);
  return v;
}

double prior_term(const PriorSpec& prior, double mhat_in, const QuadratureConfig& q) {
  const double mhat = std::max(mhat_in, kConjugateFloor);
  const auto e = detail::prior_expectation<1>(prior, mhat, q, [&](double b, double) {
    return std::array<double, 1>{prior_moments(prior, {mhat, b}).log_z};
  });
  return e[0];
}

double mid_term(const ChannelSpec& ch, double rho, double rho_prev, double m_in, double a_in,
                const QuadratureConfig& q) {
  const double m = std::clamp(m_in, 0.0, rho - kOverlapMargin);
  const double a = std::max(a_in, kConjugateFloor);
  const double v = rho - m;
  if (ch.kind == ChannelKind::Awgn) {
    const double s = v + inference_delta(ch);
    const double d = 1.0 + a * s;
    return -0.5 * std::log(d) + (a * m + s * (a * a * rho_prev + a)) / (2.0 * d);
  }
  const auto e = detail::sign_mid_expectation<1>(ch, rho, m, a, q, [&](double, double w, double b) {
    return std::array<double, 1>{mid_layer_moments(ch, {a, b}, {v, w}).log_z};
  });
  return e[0];
}

// mid_term minus the conjugate term 1/2 m_prev a of the layer below, for an
// Awgn layer. Both grow like a rho_prev / 2; combined analytically the
// difference keeps full precision when a is large (nearly noiseless layers).
double awgn_mid_excess(const ChannelSpec& ch, double rho, double rho_prev, double m_in,
                       double m_prev, double a_in) {
  const double m = std::clamp(m_in, 0.0, rho - kOverlapMargin);
  const double a = std::max(a_in, kConjugateFloor);
  const double s = rho - m + inference_delta(ch);
  const double d = 1.0 + a * s;
  return -0.5 * std::log(d) + a * (m + s - m_prev + a * s * (rho_prev - m_prev)) / (2.0 * d);
}

double first_term(const ChannelSpec& ch, double rho, double m_in, const QuadratureConfig& q) {
  const double m = std::clamp(m_in, 0.0, rho - kOverlapMargin);
  const double v = rho - m;
  if (ch.kind == ChannelKind::Awgn) {
    const double s = v + inference_delta(ch);
    return -0.5 * std::log(2.0 * std::numbers::pi * s) - (v + ch.delta) / (2.0 * s);
  }
  const auto e = detail::sign_first_expectation<1>(ch, rho, m, q, [&](double y, double w) {
    return std::array<double, 1>{first_layer_g(ch, y, {v, w}).log_z};
  });
  return e[0];
}

}  // namespace

double phi_rs(const NetworkSpec& spec, std::span<const double> m, std::span<const double> mhat,
              const QuadratureConfig& q) {
  const std::size_t depth = spec.depth();
  if (m.size() != depth || mhat.size() != depth) {
    throw ConfigError("phi_rs: overlap vectors must have one entry per layer");
  }
  const auto rho = second_moment_profile(spec);
  const auto widths = relative_widths(spec);
  double phi = 0.5 * widths[depth] * m[depth - 1] * mhat[depth - 1];
  phi -= widths[depth] * checked(prior_term(spec.prior, mhat[depth - 1], q), "prior term");
  for (std::size_t l = 2; l <= depth; ++l) {
    const ChannelSpec& ch = spec.layer(l).channel;
    const std::string name = "layer " + std::to_string(l) + " term";
    if (ch.kind == ChannelKind::Awgn) {
      phi -= widths[l - 1] * checked(awgn_mid_excess(ch, rho[l - 1], rho[l - 2], m[l - 1], m[l - 2],
                                                     mhat[l - 2]),
                                     name);
    } else {
      phi += 0.5 * widths[l - 1] * m[l - 2] * mhat[l - 2];
      phi -= widths[l - 1] * checked(mid_term(ch, rho[l - 1], rho[l - 2], m[l - 1], mhat[l - 2], q), name);
    }
  }
  phi -= widths[0] * checked(first_term(spec.layer(1).channel, rho[0], m[0], q), "layer 1 term");
  return phi;
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Easy: return "easy";
    case Phase::Hard: return "hard";
    case Phase::Impossible: return "impossible";
    case Phase::Unknown: return "unknown";
  }
  return "unknown";
}

Phase classify_phase(double mmse, double amp_mse, double threshold) {
  if (amp_mse <= threshold) return Phase::Easy;
  if (mmse <= threshold) return Phase::Hard;
  return Phase::Impossible;
}

FreeEnergyReport locate_m_it(const NetworkSpec& spec, const QuadratureConfig& q,
                             const FreeEnergyOptions& opt) {
  FreeEnergyReport r;
  r.uninformed = se_fixed_point(spec, SeInit::Uninformed, q, opt.se);
  r.informed = se_fixed_point(spec, SeInit::Informed, q, opt.se);
  const SePoint& pu = r.uninformed.point;
  const SePoint& pi = r.informed.point;
  r.phi_uninformed = phi_rs(spec, pu.m, pu.mhat, q);
  r.phi_informed = phi_rs(spec, pi.m, pi.mhat, q);

  const double rho_signal = pu.rho.back();
  r.mse_threshold = opt.mse_threshold > 0.0 ? opt.mse_threshold : 1e-4 * rho_signal;
  if (std::abs(r.phi_informed - r.phi_uninformed) < opt.tie_tolerance) {
    r.informed_selected = pi.m.back() > pu.m.back();
  } else {
    r.informed_selected = r.phi_informed < r.phi_uninformed;
  }
  r.m_it = r.informed_selected ? pi.m : pu.m;
  r.mmse = std::max(rho_signal - r.m_it.back(), 0.0);
  r.amp_mse = std::max(rho_signal - pu.m.back(), 0.0);
  r.phase = (r.uninformed.converged && r.informed.converged)
                ? classify_phase(r.mmse, r.amp_mse, r.mse_threshold)
                : Phase::Unknown;
  return r;
}

StationarityReport stationarity_gradient(const NetworkSpec& spec, const SePoint& p,
                                         const QuadratureConfig& q, double step) {
  const std::size_t depth = spec.depth();
  StationarityReport out;
  out.conjugate_gradient.assign(depth, 0.0);
  out.overlap_gradient.assign(depth, std::numeric_limits<double>::quiet_NaN());

  auto phi_of_conjugates = [&](std::vector<double> mhat) {
    const auto m = overlaps_from_conjugates(spec, mhat, q);
    return phi_rs(spec, m, mhat, q);
  };
  for (std::size_t k = 0; k < depth; ++k) {
    const double h = step * std::max(1.0, p.mhat[k]);
    auto at = [&](double offset) {
      auto mhat = p.mhat;
      mhat[k] += offset;
      return phi_of_conjugates(mhat);
    };
    double grad;
    if (p.mhat[k] - h > 0.0) {
      grad = (at(h) - at(-h)) / (2.0 * h);
    } else {
      grad = (-3.0 * at(0.0) + 4.0 * at(h) - at(2.0 * h)) / (2.0 * h);
    }
    out.conjugate_gradient[k] = grad;
    out.max_abs = std::max(out.max_abs, std::abs(grad));
  }

  auto phi_of_overlaps = [&](std::vector<double> m) {
    const auto mhat = conjugates_from_overlaps(spec, m, q);
    return phi_rs(spec, m, mhat, q);
  };
  for (std::size_t k = 0; k < depth; ++k) {
    if (p.m[k] <= 10.0 * step || p.rho[k] - p.m[k] <= 10.0 * step) continue;
    auto at = [&](double offset) {
      auto m = p.m;
      m[k] += offset;
      return phi_of_overlaps(m);
    };
    const double grad = (at(step) - at(-step)) / (2.0 * step);
    out.overlap_gradient[k] = grad;
    out.max_abs = std::max(out.max_abs, std::abs(grad));
  }
  return out;
}

std::vector<ScanRow> scan_free_energy(const NetworkSpec& spec, const QuadratureConfig& q,
                                      double m_min, double m_max, int steps,
                                      const SeOptions& opt) {
  spec.validate();
  q.validate();
  const auto rho = second_moment_profile(spec);
  const std::size_t depth = spec.depth();
  const double rho_signal = rho.back();
  if (!(m_min >= 0.0 && m_min <= m_max && m_max <= rho_signal)) {
    throw ConfigError("free-energy scan range must satisfy 0 <= m_min <= m_max <= rho_L");
  }
  if (steps < 1) throw ConfigError("free-energy scan needs at least one point");
  const int count = m_min == m_max ? 1 : steps;

  std::vector<ScanRow> rows;
  for (int i = 0; i < count; ++i) {
    ScanRow row;
    const double target = count == 1 ? m_min : m_min + (m_max - m_min) * i / (count - 1);
    const double fixed = std::clamp(target, 0.0, rho_signal - kOverlapMargin);
    row.m_signal = target;

    SePoint p;
    p.rho = rho;
    for (double r : rho) p.m.push_back(std::clamp(fixed / rho_signal * r, 0.0, r - kOverlapMargin));
    p.mhat.assign(depth, 0.0);
    if (depth > 1) {
      row.inner_converged = false;
      for (int it = 0; it < opt.max_iter; ++it) {
        SePoint next = se_step(spec, p, q);
        next.m.back() = fixed;
        double change = 0.0;
        for (std::size_t k = 0; k + 1 < depth; ++k) {
          change = std::max(change, std::abs(next.m[k] - p.m[k]));
        }
        p = std::move(next);
        if (change < opt.tol) {
          row.inner_converged = true;
          break;
        }
      }
    }
    row.m = p.m;
    row.mhat = conjugates_from_overlaps(spec, p.m, q);
    row.phi = phi_rs(spec, row.m, row.mhat, q);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mlamp
