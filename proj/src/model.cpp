#include "mlamp/model.hpp"

#include <cmath>
#include <random>

#include "mlamp/errors.hpp"
#include "mlamp/kernels.hpp"
#include "mlamp/rng.hpp"

namespace mlamp {

namespace {

// Stream identifiers for sample_instance.
constexpr std::uint64_t kSignalStream = 1;
constexpr std::uint64_t kWeightStream = 1000;
constexpr std::uint64_t kNoiseStream = 2000;

}  // namespace

Matrix Matrix::squared() const {
  Matrix out(rows_, cols_);
  for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] = data_[k] * data_[k];
  return out;
}

void validate(const PriorSpec& prior) {
  switch (prior.kind) {
    case PriorKind::GaussBernoulli:
      if (!(prior.rho > 0.0 && prior.rho <= 1.0)) {
        throw ConfigError("GaussBernoulli sparsity must lie in (0, 1]");
      }
      break;
    case PriorKind::Gaussian:
      if (!(prior.variance > 0.0) || !std::isfinite(prior.variance)) {
        throw ConfigError("Gaussian prior variance must be positive");
      }
      break;
    case PriorKind::Rademacher:
      break;
  }
}

void validate(const ChannelSpec& channel) {
  if (!(channel.delta >= 0.0) || !std::isfinite(channel.delta)) {
    throw ConfigError("channel noise variance must be finite and >= 0");
  }
}

std::vector<std::size_t> NetworkSpec::dimensions() const {
  std::vector<std::size_t> n(layers.size() + 1);
  n.back() = n_signal;
  for (std::size_t l = layers.size(); l >= 1; --l) {
    const double next = std::round(layers[l - 1].alpha * static_cast<double>(n[l]));
    n[l - 1] = next < 1.0 ? 0 : static_cast<std::size_t>(next);
  }
  return n;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ConfigError("network needs at least one layer");
  if (n_signal < 1) throw ConfigError("signal dimension must be >= 1");
  mlamp::validate(prior);
  for (const auto& layer : layers) {
    mlamp::validate(layer.channel);
    if (!(layer.alpha > 0.0) || !std::isfinite(layer.alpha)) {
      throw ConfigError("layer aspect ratios must be positive");
    }
  }
  for (std::size_t n : dimensions()) {
    if (n < 1) throw ConfigError("aspect ratios produce an empty layer");
  }
}

double second_moment(const PriorSpec& prior) {
  switch (prior.kind) {
    case PriorKind::GaussBernoulli: return prior.rho;
    case PriorKind::Rademacher: return 1.0;
    case PriorKind::Gaussian: return prior.variance;
  }
  return 0.0;
}

std::vector<double> second_moment_profile(const NetworkSpec& spec) {
  const std::size_t depth = spec.depth();
  std::vector<double> rho(depth);
  rho[depth - 1] = second_moment(spec.prior);
  for (std::size_t l = depth; l >= 2; --l) {
    const ChannelSpec& ch = spec.layer(l).channel;
    // rho_{l-1} = E_{z ~ N(0, rho_l)} E[h^2 | z]
    rho[l - 2] = ch.kind == ChannelKind::Awgn ? rho[l - 1] + ch.delta : 1.0;
  }
  return rho;
}

std::vector<double> relative_widths(const NetworkSpec& spec) {
  const std::size_t depth = spec.depth();
  std::vector<double> widths(depth + 1);
  widths[depth] = 1.0;
  for (std::size_t l = depth; l >= 1; --l) widths[l - 1] = spec.layer(l).alpha * widths[l];
  return widths;
}

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::GaussBernoulli: return "gauss_bernoulli";
    case PriorKind::Rademacher: return "rademacher";
    case PriorKind::Gaussian: return "gaussian";
  }
  return "?";
}

std::string to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Awgn: return "awgn";
    case ChannelKind::SignWithNoise: return "sign";
  }
  return "?";
}

std::span<const double> ModelInstance::truth(std::size_t l) const {
  if (l == spec.depth()) return x;
  return hidden.at(l - 1);
}

std::vector<double> sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed) {
  auto gen = make_stream(seed, kSignalStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& xi : x) {
    switch (prior.kind) {
      case PriorKind::GaussBernoulli: {
        const bool active = uniform(gen) < prior.rho;
        const double value = normal(gen);
        xi = active ? value : 0.0;
        break;
      }
      case PriorKind::Rademacher:
        xi = uniform(gen) < 0.5 ? -1.0 : 1.0;
        break;
      case PriorKind::Gaussian:
        xi = std::sqrt(prior.variance) * normal(gen);
        break;
    }
  }
  return x;
}

ModelInstance sample_instance(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto dims = spec.dimensions();
  const std::size_t depth = spec.depth();

  ModelInstance inst;
  inst.spec = spec;
  inst.seed = seed;
  inst.weights.resize(depth);
  inst.squared_weights.resize(depth);
  inst.hidden.resize(depth - 1);
  inst.x = sample_prior(spec.prior, dims[depth], seed);

  std::vector<double> input = inst.x;
  for (std::size_t l = depth; l >= 1; --l) {
    const std::size_t rows = dims[l - 1];
    const std::size_t cols = dims[l];
    Matrix w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < nrows; ++r) {
      auto gen = make_stream(seed, kWeightStream + l, static_cast<std::uint64_t>(r));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (double& v : w.row(static_cast<std::size_t>(r))) v = scale * normal(gen);
    }

    std::vector<double> output(rows);
    kernels::matvec(w, input, output);

    const ChannelSpec& ch = spec.layer(l).channel;
    auto noise_gen = make_stream(seed, kNoiseStream + l);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double noise_sd = std::sqrt(ch.delta);
    for (double& v : output) {
      if (ch.delta > 0.0) v += noise_sd * normal(noise_gen);
      if (ch.kind == ChannelKind::SignWithNoise) v = v >= 0.0 ? 1.0 : -1.0;
    }

    inst.squared_weights[l - 1] = w.squared();
    inst.weights[l - 1] = std::move(w);
    if (l >= 2) {
      inst.hidden[l - 2] = output;
    } else {
      inst.y = output;
    }
    input = std::move(output);
  }
  return inst;
}

}  // namespace mlamp
