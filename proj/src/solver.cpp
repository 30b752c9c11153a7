#include "mlamp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "mlamp/components.hpp"
#include "mlamp/errors.hpp"
#include "mlamp/kernels.hpp"

namespace mlamp {

void SolverConfig::validate() const {
  if (max_iter < 1) throw ConfigError("solver max_iter must be >= 1");
  if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("solver damping must lie in [0, 1)");
  if (!(retry_damping >= 0.0 && retry_damping < 1.0)) {
    throw ConfigError("solver retry damping must lie in [0, 1)");
  }
  if (!(tol > 0.0)) throw ConfigError("solver tol must be > 0");
  if (stall_window < 0) throw ConfigError("solver stall_window must be >= 0");
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double instance_mse(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("instance_mse: length mismatch");
  if (estimate.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(estimate.size());
}

InferenceProblem InferenceProblem::from_instance(const ModelInstance& inst) {
  InferenceProblem p;
  for (const auto& layer : inst.spec.layers) p.channels.push_back(layer.channel);
  p.prior = inst.spec.prior;
  for (std::size_t k = 0; k < inst.weights.size(); ++k) {
    p.weights.push_back(&inst.weights[k]);
    p.squared_weights.push_back(&inst.squared_weights[k]);
  }
  p.y = inst.y;
  return p;
}

MlampIteration::MlampIteration(const InferenceProblem& problem, double damping,
                               bool scalar_variance)
    : problem_(problem), damping_(damping), scalar_variance_(scalar_variance) {
  const std::size_t depth = problem.depth();
  if (depth == 0 || problem.weights.size() != depth || problem.squared_weights.size() != depth) {
    throw ConfigError("inference problem: layer count mismatch");
  }
  if (!problem.initial_sigma.empty() && problem.initial_sigma.size() != depth) {
    throw ConfigError("inference problem: initial sigma needs one value per layer");
  }
  if (problem.weights[0]->rows() != problem.y.size()) {
    throw ConfigError("inference problem: observation length mismatch");
  }
  for (std::size_t k = 0; k < depth; ++k) {
    const Matrix& w = *problem.weights[k];
    if (k + 1 < depth && problem.weights[k + 1]->rows() != w.cols()) {
      throw ConfigError("inference problem: inconsistent layer shapes");
    }
    state_.hhat.emplace_back(w.cols(), 0.0);
    state_.sigma.emplace_back(w.cols(), problem.initial_sigma.empty() ? 1.0 : problem.initial_sigma[k]);
    state_.A.emplace_back(w.cols(), 0.0);
    state_.B.emplace_back(w.cols(), 0.0);
    state_.g.emplace_back(w.rows(), 0.0);
    state_.dg.emplace_back(w.rows(), 0.0);
    state_.V.emplace_back(w.rows(), 0.0);
    state_.omega.emplace_back(w.rows(), 0.0);
  }
}

void MlampIteration::step() {
  const std::size_t depth = problem_.depth();
  const bool damp = damping_ > 0.0 && state_.t > 0;
  const double keep = damp ? damping_ : 0.0;
  auto blend = [keep](double fresh, double old) { return (1.0 - keep) * fresh + keep * old; };

  for (std::size_t k = 0; k < depth; ++k) {
    const Matrix& w = *problem_.weights[k];
    const Matrix& w2 = *problem_.squared_weights[k];
    const std::size_t rows = w.rows(), cols = w.cols();
    auto& V = state_.V[k];
    auto& omega = state_.omega[k];
    auto& g = state_.g[k];
    auto& dg = state_.dg[k];

    scratch_a_.resize(rows);
    scratch_b_.resize(rows);
    if (scalar_variance_) {
      kernels::matvec(w, state_.hhat[k], scratch_a_);
      std::fill(scratch_b_.begin(), scratch_b_.end(), mean(state_.sigma[k]));
    } else {
      kernels::forward(w, w2, state_.hhat[k], state_.sigma[k], scratch_a_, scratch_b_);
    }
    for (std::size_t mu = 0; mu < rows; ++mu) {
      const double v_new = scratch_b_[mu];
      // Onsager term uses g from the previous iteration
      const double w_new = scratch_a_[mu] - v_new * g[mu];
      V[mu] = std::max(blend(v_new, V[mu]), kVarianceFloor);
      omega[mu] = blend(w_new, omega[mu]);
    }

    for (std::size_t mu = 0; mu < rows; ++mu) {
      const FactorSide fs{V[mu], omega[mu]};
      if (k == 0) {
        const auto out = first_layer_g(problem_.channels[0], problem_.y[mu], fs);
        g[mu] = out.g;
        dg[mu] = out.dg;
      } else {
        const VariableSide vs{state_.A[k - 1][mu], state_.B[k - 1][mu]};
        const auto out = mid_layer_moments(problem_.channels[k], vs, fs);
        g[mu] = out.g;
        dg[mu] = out.dg;
      }
    }

    scratch_a_.resize(cols);
    scratch_b_.resize(cols);
    if (scalar_variance_) {
      kernels::matvec_transposed(w, g, scratch_a_);
      const double a = -mean(dg) * static_cast<double>(rows) / static_cast<double>(cols);
      std::fill(scratch_b_.begin(), scratch_b_.end(), a);
    } else {
      kernels::backward(w, w2, g, dg, scratch_a_, scratch_b_);
    }
    auto& A = state_.A[k];
    auto& B = state_.B[k];
    const auto& hhat = state_.hhat[k];
    for (std::size_t i = 0; i < cols; ++i) {
      const double a_new = scratch_b_[i];
      const double b_new = scratch_a_[i] + a_new * hhat[i];
      const double a = blend(a_new, A[i]);
      // A at the floor means every factor below lost its information about
      // this variable (dg underflowed or turned positive). Clamping silently
      // resets the variable to its prior and the undamped sweep cycles.
      if (!(a > kVarianceFloor)) {
        throw DomainError("ML-AMP variable precision collapsed at layer " + std::to_string(k + 1));
      }
      A[i] = a;
      B[i] = blend(b_new, B[i]);
    }
  }

  for (std::size_t k = 0; k < depth; ++k) {
    auto& hhat = state_.hhat[k];
    auto& sigma = state_.sigma[k];
    const auto& A = state_.A[k];
    const auto& B = state_.B[k];
    for (std::size_t i = 0; i < hhat.size(); ++i) {
      const VariableSide vs{A[i], B[i]};
      if (k + 1 < depth) {
        const FactorSide fs{state_.V[k + 1][i], state_.omega[k + 1][i]};
        const auto out = mid_layer_moments(problem_.channels[k + 1], vs, fs);
        hhat[i] = out.hhat;
        sigma[i] = out.sigma;
      } else {
        const auto out = prior_moments(problem_.prior, vs);
        hhat[i] = out.hhat;
        sigma[i] = out.sigma;
      }
      if (!std::isfinite(hhat[i]) || !std::isfinite(sigma[i])) {
        throw NumericError("ML-AMP state became non-finite");
      }
    }
  }
  ++state_.t;
}

namespace {

struct Attempt {
  SolverResult result;
  bool failed = false;
};

Attempt attempt(const InferenceProblem& problem, const SolverConfig& cfg, double damping,
                int stall_window, std::span<const std::span<const double>> truth) {
  Attempt out;
  SolverResult& res = out.result;
  res.damping_used = damping;
  MlampIteration it(problem, damping, cfg.scalar_variance);
  std::vector<double> previous(it.x_hat().size(), 0.0);
  const std::size_t depth = problem.depth();
  double best_delta = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    try {
      it.step();
    } catch (const DomainError&) {
      out.failed = true;
    } catch (const NumericError&) {
      out.failed = true;
    }
    res.iterations = t;
    if (out.failed) break;
    const double delta = instance_mse(it.x_hat(), previous);
    res.final_delta = delta;
    std::copy(it.x_hat().begin(), it.x_hat().end(), previous.begin());
    if (cfg.record_trace && !truth.empty()) {
      for (std::size_t k = 0; k < depth; ++k) {
        res.trace.push_back({t, static_cast<int>(k + 1),
                             instance_mse(it.state().hhat[k], truth[k]), delta});
      }
    }
    if (delta < cfg.tol) {
      res.converged = true;
      break;
    }
    if (delta < 0.9 * best_delta) {
      best_delta = delta;
      since_best = 0;
    } else if (stall_window > 0 && ++since_best >= stall_window) {
      out.failed = true;
      break;
    }
  }
  const AmpState& st = it.state();
  res.hhat = st.hhat;
  res.sigma = st.sigma;
  res.x_hat = st.hhat.back();
  if (!truth.empty()) {
    for (std::size_t k = 0; k < depth; ++k) {
      res.final_mse.push_back(out.failed ? std::nan("") : instance_mse(st.hhat[k], truth[k]));
    }
  }
  return out;
}

SolverResult solve(const InferenceProblem& problem, const SolverConfig& cfg,
                   std::span<const std::span<const double>> truth) {
  cfg.validate();
  const int window = cfg.damping < cfg.retry_damping ? cfg.stall_window : 0;
  Attempt first = attempt(problem, cfg, cfg.damping, window, truth);
  if (!first.failed) return std::move(first.result);
  if (cfg.damping < cfg.retry_damping) {
    Attempt second = attempt(problem, cfg, cfg.retry_damping, 0, truth);
    if (!second.failed) return std::move(second.result);
    second.result.diverged = true;
    return std::move(second.result);
  }
  first.result.diverged = true;
  return std::move(first.result);
}

}  // namespace

SolverResult run_mlamp(const ModelInstance& inst, const SolverConfig& cfg) {
  auto problem = InferenceProblem::from_instance(inst);
  if (cfg.prior_variance_init) problem.initial_sigma = second_moment_profile(inst.spec);
  std::vector<std::span<const double>> truth;
  for (std::size_t l = 1; l <= inst.spec.depth(); ++l) truth.push_back(inst.truth(l));
  return solve(problem, cfg, truth);
}

SolverResult run_layerwise_baseline(const ModelInstance& inst, const SolverConfig& cfg,
                                    std::span<const PriorSpec> stage_priors) {
  if (inst.spec.depth() != 2) throw ConfigError("layer-wise baseline needs a two-layer model");
  const ChannelSpec second = inst.spec.layer(2).channel;
  const double rho1 = second_moment_profile(inst.spec)[0];
  PriorSpec surrogate = second.kind == ChannelKind::SignWithNoise ? PriorSpec::rademacher()
                                                                  : PriorSpec::gaussian(rho1);
  PriorSpec signal_prior = inst.spec.prior;
  if (!stage_priors.empty()) surrogate = stage_priors[0];
  if (stage_priors.size() > 1) signal_prior = stage_priors[1];
  validate(surrogate);
  validate(signal_prior);

  InferenceProblem stage1;
  stage1.channels = {inst.spec.layer(1).channel};
  stage1.prior = surrogate;
  stage1.weights = {&inst.weights[0]};
  stage1.squared_weights = {&inst.squared_weights[0]};
  stage1.y = inst.y;
  const std::vector<std::span<const double>> truth1 = {inst.truth(1)};
  SolverResult r1 = solve(stage1, cfg, truth1);

  std::vector<double> pseudo(r1.x_hat.size());
  ChannelSpec channel2 = second;
  if (second.kind == ChannelKind::SignWithNoise) {
    double flip = 0.0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      const double h = std::isfinite(r1.x_hat[i]) ? r1.x_hat[i] : 0.0;
      pseudo[i] = h >= 0.0 ? 1.0 : -1.0;
      flip += 0.5 * (1.0 - std::min(1.0, std::abs(h)));
    }
    flip = std::min(flip / static_cast<double>(pseudo.size()), 0.499);
    const double t = std::tan(std::numbers::pi * flip);
    channel2.delta = std::max(second.delta, t * t);
  } else {
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      pseudo[i] = std::isfinite(r1.x_hat[i]) ? r1.x_hat[i] : 0.0;
    }
    channel2.delta = second.delta + mean(r1.sigma[0]);
  }

  InferenceProblem stage2;
  stage2.channels = {channel2};
  stage2.prior = signal_prior;
  stage2.weights = {&inst.weights[1]};
  stage2.squared_weights = {&inst.squared_weights[1]};
  stage2.y = pseudo;
  const std::vector<std::span<const double>> truth2 = {inst.x};
  SolverResult r2 = solve(stage2, cfg, truth2);

  SolverResult out;
  out.x_hat = r2.x_hat;
  out.hhat = {r1.x_hat, r2.x_hat};
  out.sigma = {r1.sigma[0], r2.sigma[0]};
  out.converged = r1.converged && r2.converged;
  out.diverged = r1.diverged || r2.diverged;
  out.iterations = r1.iterations + r2.iterations;
  out.damping_used = std::max(r1.damping_used, r2.damping_used);
  out.final_delta = r2.final_delta;
  out.stage_mse = {r1.final_mse.at(0), r2.final_mse.at(0)};
  out.final_mse = out.stage_mse;
  out.trace = r1.trace;
  for (TraceRow row : r2.trace) {
    row.layer = 2;
    out.trace.push_back(row);
  }
  return out;
}

}  // namespace mlamp
