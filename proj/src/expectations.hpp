#pragma once

// Gaussian expectations shared by the state evolution and the free energy.
// Not part of the public interface.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "mlamp/components.hpp"
#include "mlamp/gaussian.hpp"
#include "mlamp/model.hpp"
#include "mlamp/quadrature.hpp"
#include "mlamp/se.hpp"

namespace mlamp::detail {

/// Overlaps below this are treated as zero: N(0, m) becomes a point mass.
inline constexpr double kDegenerateVariance = 1e-10;

template <std::size_t K, class F>
std::array<double, K> gaussian_expect(F&& f, double mean, double sd,
                                      std::span<const quadrature::Feature> features,
                                      const QuadratureConfig& q, double abs_tol) {
  if (sd <= 0.0) return f(mean);
  if (q.adaptive) {
    return quadrature::normal_expectation<K>(f, mean, sd, features, abs_tol, q.rel_tol).value;
  }
  const auto& rule = quadrature::gauss_hermite(q.nodes_per_dim);
  std::array<double, K> acc{};
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const auto v = f(mean + sd * rule.nodes[i]);
    for (std::size_t k = 0; k < K; ++k) acc[k] += rule.weights[i] * v[k];
  }
  return acc;
}

inline double overlap_sd(double m) { return m < kDegenerateVariance ? 0.0 : std::sqrt(m); }

/// E over w ~ N(0, m), h ~ P(h | w) = Phi(h w / sqrt(rho - m + delta)),
/// b ~ N(a h, a) of f(h, w, b), for a sign channel between two layers.
template <std::size_t K, class F>
std::array<double, K> sign_mid_expectation(const ChannelSpec& ch, double rho, double m, double a,
                                           const QuadratureConfig& q, F&& f) {
  const double v = rho - m;
  const double root = std::sqrt(v + ch.delta);
  const double root_inf = std::sqrt(v + inference_delta(ch));
  const double sd_b = std::sqrt(a);
  auto outer = [&](double w) {
    std::array<double, K> acc{};
    const double u = w / root_inf;
    const double c = 0.5 * (gaussian::log_cdf(u) - gaussian::log_cdf(-u));
    const std::array<quadrature::Feature, 1> inner_features = {{{-c, 1.0}}};
    for (double h : {1.0, -1.0}) {
      const double log_weight = gaussian::log_cdf(h * w / root);
      if (log_weight < -700.0) continue;
      const double weight = std::exp(log_weight);
      const auto inner = gaussian_expect<K>([&](double b) { return f(h, w, b); }, a * h, sd_b,
                                            inner_features, q, 0.1 * q.abs_tol);
      for (std::size_t k = 0; k < K; ++k) acc[k] += weight * inner[k];
    }
    return acc;
  };
  const std::array<quadrature::Feature, 2> features = {{{0.0, root}, {0.0, root_inf}}};
  return gaussian_expect<K>(outer, 0.0, overlap_sd(m), features, q, q.abs_tol);
}

/// E over w ~ N(0, m), y ~ Phi(y w / sqrt(rho - m + delta)) of f(y, w).
template <std::size_t K, class F>
std::array<double, K> sign_first_expectation(const ChannelSpec& ch, double rho, double m,
                                             const QuadratureConfig& q, F&& f) {
  const double root = std::sqrt(rho - m + ch.delta);
  auto outer = [&](double w) {
    std::array<double, K> acc{};
    for (double y : {1.0, -1.0}) {
      const double log_weight = gaussian::log_cdf(y * w / root);
      if (log_weight < -700.0) continue;
      const auto v = f(y, w);
      const double weight = std::exp(log_weight);
      for (std::size_t k = 0; k < K; ++k) acc[k] += weight * v[k];
    }
    return acc;
  };
  const std::array<quadrature::Feature, 1> features = {{{0.0, root}}};
  return gaussian_expect<K>(outer, 0.0, overlap_sd(m), features, q, q.abs_tol);
}

/// E over x ~ P_X, b ~ N(mhat x, mhat) of f(b, E[x | b, component]), split
/// into the prior's mixture components so each piece is one Gaussian in b.
template <std::size_t K, class F>
std::array<double, K> prior_expectation(const PriorSpec& prior, double mhat,
                                        const QuadratureConfig& q, F&& f) {
  struct Piece {
    double weight;
    bool point;
    double value;  ///< location (point) or variance (Gaussian)
  };
  std::vector<Piece> pieces;
  std::vector<quadrature::Feature> features;
  switch (prior.kind) {
    case PriorKind::Rademacher:
      pieces = {{0.5, true, 1.0}, {0.5, true, -1.0}};
      features = {{0.0, 1.0}};
      break;
    case PriorKind::Gaussian:
      pieces = {{1.0, false, prior.variance}};
      break;
    case PriorKind::GaussBernoulli: {
      pieces = {{1.0 - prior.rho, true, 0.0}, {prior.rho, false, 1.0}};
      // Where the slab and spike posteriors balance.
      const double p = 1.0 + mhat;
      const double arg = 2.0 * p * (0.5 * std::log(p) + std::log((1.0 - prior.rho) / prior.rho));
      if (arg > 0.0) {
        const double b = std::sqrt(arg);
        features = {{b, p / b}, {-b, p / b}};
      }
      break;
    }
  }
  std::array<double, K> acc{};
  for (const Piece& piece : pieces) {
    if (piece.weight <= 0.0) continue;
    std::array<double, K> part{};
    if (piece.point) {
      part = gaussian_expect<K>([&](double b) { return f(b, piece.value); }, mhat * piece.value,
                                std::sqrt(mhat), features, q, q.abs_tol);
    } else {
      const double shrink = piece.value / (1.0 + mhat * piece.value);
      part = gaussian_expect<K>([&](double b) { return f(b, b * shrink); }, 0.0,
                                std::sqrt(mhat * mhat * piece.value + mhat), features, q,
                                q.abs_tol);
    }
    for (std::size_t k = 0; k < K; ++k) acc[k] += piece.weight * part[k];
  }
  return acc;
}

}  // namespace mlamp::detail
