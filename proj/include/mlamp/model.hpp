#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlamp/matrix.hpp"

namespace mlamp {

// Layer indexing: layer l = 1..L maps the n_l-dimensional h^(l) (h^(L) = x)
// to the n_{l-1}-dimensional h^(l-1) (h^(0) = y) through W^(l) and a channel.
// Containers store layer l at index l - 1.

enum class PriorKind { GaussBernoulli, Rademacher, Gaussian };

/// i.i.d. signal prior P_X.
struct PriorSpec {
  PriorKind kind = PriorKind::Gaussian;
  double rho = 1.0;       ///< nonzero fraction (GaussBernoulli)
  double variance = 1.0;  ///< variance (Gaussian)

  static PriorSpec gauss_bernoulli(double rho) { return {PriorKind::GaussBernoulli, rho, 1.0}; }
  static PriorSpec rademacher() { return {PriorKind::Rademacher, 1.0, 1.0}; }
  static PriorSpec gaussian(double variance) { return {PriorKind::Gaussian, 1.0, variance}; }

  bool operator==(const PriorSpec&) const = default;
};

enum class ChannelKind { Awgn, SignWithNoise };

/// Output channel P_out(h | z): Gaussian noise of variance delta added to z,
/// followed by the identity (Awgn) or sgn (SignWithNoise).
struct ChannelSpec {
  ChannelKind kind = ChannelKind::Awgn;
  double delta = 0.0;

  static ChannelSpec awgn(double delta) { return {ChannelKind::Awgn, delta}; }
  static ChannelSpec sign(double delta) { return {ChannelKind::SignWithNoise, delta}; }

  bool operator==(const ChannelSpec&) const = default;
};

struct LayerSpec {
  ChannelSpec channel;
  double alpha = 1.0;  ///< n_{l-1} / n_l

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;  ///< layers[0] is layer 1 (produces y)
  PriorSpec prior;
  std::size_t n_signal = 1;  ///< n_L

  std::size_t depth() const { return layers.size(); }
  const LayerSpec& layer(std::size_t l) const { return layers.at(l - 1); }

  /// n_0, ..., n_L. Computed right to left as n_{l-1} = round(alpha_l n_l),
  /// so the realized ratios differ from the requested ones by O(1/n).
  std::vector<std::size_t> dimensions() const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

void validate(const PriorSpec& prior);
void validate(const ChannelSpec& channel);

double second_moment(const PriorSpec& prior);

/// rho_1, ..., rho_L (second moments of h^(1), ..., h^(L) = x).
std::vector<double> second_moment_profile(const NetworkSpec& spec);

/// alpha-tilde_l = n_l / n_L for l = 0..L, in the large-system limit.
std::vector<double> relative_widths(const NetworkSpec& spec);

std::string to_string(PriorKind kind);
std::string to_string(ChannelKind kind);

/// A sampled problem. Immutable once built; safe to share read-only.
struct ModelInstance {
  NetworkSpec spec;
  std::vector<Matrix> weights;          ///< W^(l) at index l-1, shape n_{l-1} x n_l
  std::vector<Matrix> squared_weights;  ///< entrywise squares, cached for the solver
  std::vector<double> x;
  std::vector<std::vector<double>> hidden;  ///< h^(l) at index l-1, l = 1..L-1
  std::vector<double> y;
  std::uint64_t seed = 0;

  /// Ground truth of layer l = 1..L (h^(l), or x for l = L).
  std::span<const double> truth(std::size_t l) const;
};

/// Draws x from the prior, then for l = L..1 computes
/// h^(l-1) = f_l(W^(l) h^(l) + N(0, delta_l)). Deterministic in (spec, seed);
/// every (layer, row) uses its own random stream.
ModelInstance sample_instance(const NetworkSpec& spec, std::uint64_t seed);

/// Samples n values from the prior (stream-seeded).
std::vector<double> sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed);

}  // namespace mlamp
