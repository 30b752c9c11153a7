#include "mlamp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlamp/components.hpp"
#include "mlamp/errors.hpp"
#include "mlamp/kernels.hpp"
#include "mlamp/oracle.hpp"

namespace mlamp::experiments {

using nlohmann::json;

namespace {

const std::set<std::string> kPresets = {"slr2", "perceptron2", "decoder2"};
const std::set<std::string> kSweepParams = {"alpha", "alpha1", "alpha2", "delta1", "delta2", "rho"};

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    return v.get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key " + where(key));
    }
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

PriorSpec parse_prior(const json& j, const std::string& path) {
  Section s(j, path);
  const std::string kind = s.string("kind", "");
  PriorSpec p;
  if (kind == "gauss_bernoulli") {
    p = PriorSpec::gauss_bernoulli(s.number("rho", 0.3));
  } else if (kind == "rademacher") {
    p = PriorSpec::rademacher();
  } else if (kind == "gaussian") {
    p = PriorSpec::gaussian(s.number("variance", 1.0));
  } else {
    throw ConfigError(path + ".kind: expected gauss_bernoulli, rademacher or gaussian");
  }
  s.finish();
  validate(p);
  return p;
}

json prior_json(const PriorSpec& p) {
  switch (p.kind) {
    case PriorKind::GaussBernoulli: return {{"kind", "gauss_bernoulli"}, {"rho", p.rho}};
    case PriorKind::Rademacher: return {{"kind", "rademacher"}};
    case PriorKind::Gaussian: return {{"kind", "gaussian"}, {"variance", p.variance}};
  }
  return {};
}

LayerSpec parse_layer(const json& j, const std::string& path) {
  Section s(j, path);
  const std::string channel = s.string("channel", "");
  LayerSpec layer;
  if (channel == "awgn") {
    layer.channel = ChannelSpec::awgn(s.number("delta", 0.0));
  } else if (channel == "sign") {
    layer.channel = ChannelSpec::sign(s.number("delta", 0.0));
  } else {
    throw ConfigError(path + ".channel: expected awgn or sign");
  }
  layer.alpha = s.number("alpha", 1.0);
  s.finish();
  return layer;
}

ModelConfig parse_model(const json& j) {
  Section s(j, "model");
  ModelConfig m;
  if (s.has("preset")) {
    const std::string name = s.string("preset", "");
    m = ModelConfig::from_preset(name);
    if (s.has("layers") || s.has("prior")) {
      throw ConfigError("model: 'preset' cannot be combined with 'layers' or 'prior'");
    }
    if (s.has("alpha") && s.has("alpha1")) {
      throw ConfigError("model: give either alpha or alpha1, not both");
    }
    if (s.has("alpha")) m.set("alpha", s.number("alpha", 0.0));
    if (s.has("alpha1")) m.set("alpha1", s.number("alpha1", 0.0));
    m.alpha2 = s.number("alpha2", m.alpha2);
    m.delta1 = s.number("delta1", m.delta1);
    m.delta2 = s.number("delta2", m.delta2);
    if (s.has("rho")) {
      if (name != "slr2") throw ConfigError("model.rho applies to the slr2 preset only");
      m.rho = s.number("rho", m.rho);
    }
    m.single_layer = s.boolean("single_layer", false);
  } else {
    m = ModelConfig{};
    if (!s.has("layers") || !s.has("prior")) {
      throw ConfigError("model: needs either 'preset' or both 'layers' and 'prior'");
    }
    const json& layers = s.raw("layers");
    if (!layers.is_array() || layers.empty()) throw ConfigError("model.layers: expected a non-empty array");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      m.layers.push_back(parse_layer(layers[k], "model.layers[" + std::to_string(k) + "]"));
    }
    m.prior = parse_prior(s.raw("prior"), "model.prior");
  }
  const std::int64_t n = s.integer("n", static_cast<std::int64_t>(m.n));
  if (n < 1) throw ConfigError("model.n must be >= 1");
  m.n = static_cast<std::size_t>(n);
  s.finish();
  m.network().validate();
  return m;
}

json model_json(const ModelConfig& m) {
  json j;
  if (m.preset.empty()) {
    j["layers"] = json::array();
    for (const auto& layer : m.layers) {
      j["layers"].push_back({{"channel", layer.channel.kind == ChannelKind::Awgn ? "awgn" : "sign"},
                             {"delta", layer.channel.delta},
                             {"alpha", layer.alpha}});
    }
    j["prior"] = prior_json(m.prior);
  } else {
    j["preset"] = m.preset;
    if (m.alpha > 0.0) j["alpha"] = m.alpha;
    if (m.alpha1 > 0.0) j["alpha1"] = m.alpha1;
    j["alpha2"] = m.alpha2;
    j["delta1"] = m.delta1;
    j["delta2"] = m.delta2;
    if (m.preset == "slr2") j["rho"] = m.rho;
    j["single_layer"] = m.single_layer;
  }
  j["n"] = m.n;
  return j;
}

SolverConfig parse_solver(const json& j) {
  Section s(j, "solver");
  SolverConfig c;
  c.max_iter = static_cast<int>(s.integer("max_iter", c.max_iter));
  c.damping = s.number("damping", c.damping);
  c.tol = s.number("tol", c.tol);
  c.record_trace = s.boolean("record_trace", c.record_trace);
  c.scalar_variance = s.boolean("scalar_variance", c.scalar_variance);
  c.retry_damping = s.number("retry_damping", c.retry_damping);
  c.stall_window = static_cast<int>(s.integer("stall_window", c.stall_window));
  c.prior_variance_init = s.boolean("prior_variance_init", c.prior_variance_init);
  s.finish();
  return c;
}

QuadratureConfig parse_quadrature(const json& j) {
  Section s(j, "quadrature");
  QuadratureConfig q;
  q.nodes_per_dim = static_cast<int>(s.integer("nodes_per_dim", q.nodes_per_dim));
  q.adaptive = s.boolean("adaptive", q.adaptive);
  q.abs_tol = s.number("abs_tol", q.abs_tol);
  q.rel_tol = s.number("rel_tol", q.rel_tol);
  q.mc_fallback_samples = s.integer("mc_fallback_samples", q.mc_fallback_samples);
  q.mc_seed = s.unsigned_integer("mc_seed", q.mc_seed);
  s.finish();
  return q;
}

std::vector<SweepAxis> parse_axes(const json& j) {
  if (!j.is_array()) throw ConfigError("sweep.axes: expected an array");
  std::vector<SweepAxis> axes;
  for (std::size_t k = 0; k < j.size(); ++k) {
    Section s(j[k], "sweep.axes[" + std::to_string(k) + "]");
    SweepAxis a;
    a.param = s.string("param", "");
    a.min = s.number("min", 0.0);
    a.max = s.number("max", a.min);
    a.steps = static_cast<int>(s.integer("steps", 1));
    s.finish();
    axes.push_back(a);
  }
  return axes;
}

// Table of realized layer sizes, for metadata.
std::string dims_string(const NetworkSpec& spec) {
  std::string out;
  for (std::size_t n : spec.dimensions()) {
    if (!out.empty()) out += 'x';
    out += std::to_string(n);
  }
  return out;
}

void common_meta(CsvTable& table, const ExperimentConfig& cfg, const std::string& command) {
  table.meta("command", command);
  table.meta("config", serialize_config(cfg, -1));
  table.meta("dims", dims_string(cfg.model.network()));
  table.run_meta("threads", std::to_string(kernels::max_threads()));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string layer_cell(std::size_t l) { return std::to_string(l); }

}  // namespace

ModelConfig ModelConfig::from_preset(const std::string& name) {
  if (!kPresets.count(name)) {
    throw ConfigError("unknown preset '" + name + "' (expected slr2, perceptron2 or decoder2)");
  }
  ModelConfig m;
  m.preset = name;
  if (name == "slr2") {
    m.alpha = 0.8;
    m.alpha2 = 1.0;
    m.delta1 = 1e-8;
    m.delta2 = 0.0;
  } else if (name == "perceptron2") {
    m.alpha = 1.5;
    m.alpha2 = 1.0;
    m.delta1 = 0.0;
    m.delta2 = 0.0;
  } else {
    m.alpha1 = 0.6;
    m.alpha2 = 2.0;
    m.delta1 = 1e-8;
    m.delta2 = 1e-8;
  }
  return m;
}

double ModelConfig::resolved_alpha1() const {
  return alpha1 > 0.0 ? alpha1 : alpha / alpha2;
}

void ModelConfig::set(const std::string& param, double value) {
  if (preset.empty()) throw ConfigError("parameter '" + param + "' needs a preset model");
  if (param == "alpha") {
    alpha = value;
    alpha1 = 0.0;
  } else if (param == "alpha1") {
    alpha1 = value;
    alpha = 0.0;
  } else if (param == "alpha2") {
    alpha2 = value;
  } else if (param == "delta1") {
    delta1 = value;
  } else if (param == "delta2") {
    delta2 = value;
  } else if (param == "rho") {
    if (preset != "slr2") throw ConfigError("rho applies to the slr2 preset only");
    rho = value;
  } else {
    throw ConfigError("unknown model parameter '" + param + "'");
  }
}

double ModelConfig::get(const std::string& param) const {
  if (param == "alpha") return alpha > 0.0 ? alpha : alpha1 * alpha2;
  if (param == "alpha1") return resolved_alpha1();
  if (param == "alpha2") return alpha2;
  if (param == "delta1") return delta1;
  if (param == "delta2") return delta2;
  if (param == "rho") return rho;
  throw ConfigError("unknown model parameter '" + param + "'");
}

NetworkSpec ModelConfig::network() const {
  NetworkSpec spec;
  spec.n_signal = n;
  if (preset.empty()) {
    spec.layers = layers;
    spec.prior = prior;
    return spec;
  }
  if (!(alpha2 > 0.0) || !((alpha > 0.0) != (alpha1 > 0.0))) {
    throw ConfigError("model: aspect ratios must be positive, with exactly one of alpha, alpha1");
  }
  const double a1 = resolved_alpha1();
  const double a = a1 * alpha2;
  if (preset == "slr2") {
    spec.prior = PriorSpec::gauss_bernoulli(rho);
    if (single_layer) {
      spec.layers = {{ChannelSpec::awgn(delta1), a}};
    } else {
      spec.layers = {{ChannelSpec::awgn(delta1), a1}, {ChannelSpec::awgn(delta2), alpha2}};
    }
  } else if (preset == "perceptron2") {
    spec.prior = PriorSpec::rademacher();
    if (single_layer) {
      spec.layers = {{ChannelSpec::sign(delta1), a}};
    } else {
      spec.layers = {{ChannelSpec::sign(delta1), a1}, {ChannelSpec::awgn(delta2), alpha2}};
    }
  } else {
    spec.prior = PriorSpec::rademacher();
    if (single_layer) {
      spec.layers = {{ChannelSpec::awgn(delta1), a1}};
    } else {
      spec.layers = {{ChannelSpec::awgn(delta1), a1}, {ChannelSpec::sign(delta2), alpha2}};
    }
  }
  return spec;
}

std::vector<double> SweepAxis::values() const {
  if (steps == 1 || min == max) return {min};
  std::vector<double> v(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) v[k] = min + (max - min) * k / (steps - 1);
  return v;
}

void ExperimentConfig::validate() const {
  model.network().validate();
  solver.validate();
  quadrature.validate();
  if (se.max_iter < 1 || !(se.tol > 0.0)) throw ConfigError("se: max_iter >= 1 and tol > 0 required");
  if (!(tie_tolerance >= 0.0)) throw ConfigError("free_energy.tie_tolerance must be >= 0");
  if (scan.steps < 1) throw ConfigError("free_energy.scan.steps must be >= 1");
  if (sweep.instance_every < 0) throw ConfigError("sweep.instance_every must be >= 0");
  for (const auto& axis : sweep.axes) {
    if (!kSweepParams.count(axis.param)) throw ConfigError("sweep axis: unknown parameter '" + axis.param + "'");
    if (axis.steps < 1) throw ConfigError("sweep axis " + axis.param + ": steps must be >= 1");
    if (!(axis.min <= axis.max)) throw ConfigError("sweep axis " + axis.param + ": min > max");
  }
  if (instance.repeats < 1) throw ConfigError("instance.repeats must be >= 1");
  if (instance.baseline && model.network().depth() != 2) {
    throw ConfigError("the layer-wise baseline needs a two-layer model");
  }
  if (instance.stage_priors.size() > 2) throw ConfigError("instance.stage_priors takes at most two priors");
}

FreeEnergyOptions ExperimentConfig::free_energy_options() const {
  FreeEnergyOptions o;
  o.se = se;
  o.mse_threshold = mse_threshold;
  o.tie_tolerance = tie_tolerance;
  return o;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section s(root, "config");
  ExperimentConfig cfg;
  if (s.has("model")) cfg.model = parse_model(s.raw("model"));
  if (s.has("solver")) cfg.solver = parse_solver(s.raw("solver"));
  if (s.has("quadrature")) cfg.quadrature = parse_quadrature(s.raw("quadrature"));
  if (s.has("se")) {
    Section se(s.raw("se"), "se");
    cfg.se.max_iter = static_cast<int>(se.integer("max_iter", cfg.se.max_iter));
    cfg.se.tol = se.number("tol", cfg.se.tol);
    se.finish();
  }
  if (s.has("free_energy")) {
    Section fe(s.raw("free_energy"), "free_energy");
    cfg.mse_threshold = fe.number("mse_threshold", cfg.mse_threshold);
    cfg.tie_tolerance = fe.number("tie_tolerance", cfg.tie_tolerance);
    if (fe.has("scan")) {
      Section sc(fe.raw("scan"), "free_energy.scan");
      cfg.scan.m_min = sc.number("m_min", cfg.scan.m_min);
      cfg.scan.m_max = sc.number("m_max", cfg.scan.m_max);
      cfg.scan.steps = static_cast<int>(sc.integer("steps", cfg.scan.steps));
      sc.finish();
    }
    fe.finish();
  }
  if (s.has("sweep")) {
    Section sw(s.raw("sweep"), "sweep");
    if (sw.has("axes")) cfg.sweep.axes = parse_axes(sw.raw("axes"));
    cfg.sweep.instance_every = static_cast<int>(sw.integer("instance_every", 0));
    sw.finish();
  }
  if (s.has("instance")) {
    Section in(s.raw("instance"), "instance");
    cfg.instance.baseline = in.boolean("baseline", false);
    cfg.instance.repeats = static_cast<int>(in.integer("repeats", 1));
    if (in.has("stage_priors")) {
      const json& list = in.raw("stage_priors");
      if (!list.is_array()) throw ConfigError("instance.stage_priors: expected an array");
      for (std::size_t k = 0; k < list.size(); ++k) {
        cfg.instance.stage_priors.push_back(
            parse_prior(list[k], "instance.stage_priors[" + std::to_string(k) + "]"));
      }
    }
    in.finish();
  }
  cfg.seed = s.unsigned_integer("seed", cfg.seed);
  cfg.output = s.string("output", cfg.output);
  s.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg, int indent) {
  json j;
  j["model"] = model_json(cfg.model);
  j["solver"] = {{"max_iter", cfg.solver.max_iter},
                 {"damping", cfg.solver.damping},
                 {"tol", cfg.solver.tol},
                 {"record_trace", cfg.solver.record_trace},
                 {"scalar_variance", cfg.solver.scalar_variance},
                 {"retry_damping", cfg.solver.retry_damping},
                 {"stall_window", cfg.solver.stall_window},
                 {"prior_variance_init", cfg.solver.prior_variance_init}};
  j["quadrature"] = {{"nodes_per_dim", cfg.quadrature.nodes_per_dim},
                     {"adaptive", cfg.quadrature.adaptive},
                     {"abs_tol", cfg.quadrature.abs_tol},
                     {"rel_tol", cfg.quadrature.rel_tol},
                     {"mc_fallback_samples", cfg.quadrature.mc_fallback_samples},
                     {"mc_seed", cfg.quadrature.mc_seed}};
  j["se"] = {{"max_iter", cfg.se.max_iter}, {"tol", cfg.se.tol}};
  j["free_energy"] = {{"mse_threshold", cfg.mse_threshold},
                      {"tie_tolerance", cfg.tie_tolerance},
                      {"scan", {{"m_min", cfg.scan.m_min}, {"m_max", cfg.scan.m_max}, {"steps", cfg.scan.steps}}}};
  json axes = json::array();
  for (const auto& a : cfg.sweep.axes) {
    axes.push_back({{"param", a.param}, {"min", a.min}, {"max", a.max}, {"steps", a.steps}});
  }
  j["sweep"] = {{"axes", axes}, {"instance_every", cfg.sweep.instance_every}};
  json priors = json::array();
  for (const auto& p : cfg.instance.stage_priors) priors.push_back(prior_json(p));
  j["instance"] = {{"baseline", cfg.instance.baseline},
                   {"stage_priors", priors},
                   {"repeats", cfg.instance.repeats}};
  j["seed"] = cfg.seed;
  j["output"] = cfg.output;
  return j.dump(indent);
}

std::vector<SweepAxis> default_axes(const ModelConfig& model) {
  if (model.preset == "slr2") {
    return {{"alpha2", 0.05, 1.05, 41}, {"alpha", 0.05, 1.05, 41}};
  }
  if (model.preset == "perceptron2") {
    return {{"alpha2", 0.5, 2.5, 41}, {"alpha", 0.5, 2.5, 41}};
  }
  if (model.preset == "decoder2") {
    return {{"alpha2", 0.5, 2.5, 41}, {"alpha1", 0.1, 1.1, 41}};
  }
  throw ConfigError("sweeps need a preset model");
}

CsvTable cmd_instance(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  CsvTable table({"record", "solver", "seed", "t", "layer", "mse", "delta", "converged",
                  "diverged", "iterations", "mean_sigma", "damping", "runtime_s"});
  common_meta(table, cfg, "instance");
  const NetworkSpec spec = cfg.model.network();
  SolverConfig solver = cfg.solver;
  solver.record_trace = true;

  auto emit = [&](const std::string& name, std::uint64_t seed, const SolverResult& r,
                  double runtime) {
    for (const auto& row : r.trace) {
      table.add_row({"trace", name, std::to_string(seed), std::to_string(row.t),
                     layer_cell(row.layer), format_number(row.mse), format_number(row.delta),
                     kMissing, kMissing, kMissing, kMissing, kMissing, kMissing});
    }
    for (std::size_t l = 0; l < r.final_mse.size(); ++l) {
      table.add_row({"final", name, std::to_string(seed), std::to_string(r.iterations),
                     layer_cell(l + 1), format_number(r.final_mse[l]),
                     format_number(r.final_delta), format_bool(r.converged),
                     format_bool(r.diverged), std::to_string(r.iterations),
                     format_number(mean(r.sigma[l])), format_number(r.damping_used),
                     run.timestamps ? format_number(runtime) : kMissing});
    }
  };

  for (int rep = 0; rep < cfg.instance.repeats; ++rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    const ModelInstance inst = sample_instance(spec, seed);
    auto t0 = std::chrono::steady_clock::now();
    const SolverResult r = run_mlamp(inst, solver);
    emit("mlamp", seed, r, seconds_since(t0));
    if (cfg.instance.baseline) {
      t0 = std::chrono::steady_clock::now();
      const SolverResult b = run_layerwise_baseline(inst, solver, cfg.instance.stage_priors);
      emit("baseline", seed, b, seconds_since(t0));
    }
  }
  return table;
}

CsvTable cmd_se(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  (void)run;
  CsvTable table({"record", "init", "t", "layer", "m", "mhat", "mse", "converged", "iterations",
                  "clamp_count", "phi"});
  common_meta(table, cfg, "se");
  const NetworkSpec spec = cfg.model.network();
  SeOptions opt = cfg.se;
  opt.record_trajectory = true;
  for (SeInit init : {SeInit::Uninformed, SeInit::Informed}) {
    const SeResult r = se_fixed_point(spec, init, cfg.quadrature, opt);
    const std::string name = to_string(init);
    for (const SePoint& p : r.trajectory) {
      const auto mse = se_mse(p);
      for (std::size_t l = 0; l < p.m.size(); ++l) {
        table.add_row({"trajectory", name, std::to_string(p.t), layer_cell(l + 1),
                       format_number(p.m[l]), format_number(p.mhat[l]), format_number(mse[l]),
                       kMissing, kMissing, kMissing, kMissing});
      }
    }
    const double phi = phi_rs(spec, r.point.m, r.point.mhat, cfg.quadrature);
    const auto mse = se_mse(r.point);
    for (std::size_t l = 0; l < r.point.m.size(); ++l) {
      table.add_row({"fixed_point", name, std::to_string(r.point.t), layer_cell(l + 1),
                     format_number(r.point.m[l]), format_number(r.point.mhat[l]),
                     format_number(mse[l]), format_bool(r.converged), std::to_string(r.iterations),
                     std::to_string(r.clamp_count), format_number(phi)});
    }
  }
  return table;
}

CsvTable cmd_sweep(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  const std::vector<SweepAxis> axes =
      cfg.sweep.axes.empty() ? default_axes(cfg.model) : cfg.sweep.axes;
  std::vector<std::string> columns = {"cell"};
  for (const auto& a : axes) columns.push_back(a.param);
  for (const char* c : {"alpha1", "alpha2"}) {
    if (std::none_of(axes.begin(), axes.end(), [&](const SweepAxis& a) { return a.param == c; })) {
      columns.push_back(c);
    }
  }
  const std::size_t n_coord = columns.size() - 1;
  for (const char* c : {"se_mse", "mmse", "amp_mse_instance", "phase", "phi_uninformed",
                        "phi_informed", "converged_uninformed", "converged_informed",
                        "iterations_uninformed", "iterations_informed", "informed_selected",
                        "status", "runtime_s", "seed"}) {
    columns.push_back(c);
  }
  CsvTable table(columns);
  common_meta(table, cfg, "sweep");
  std::string grid;
  for (const auto& a : axes) {
    if (!grid.empty()) grid += ';';
    grid += a.param + ":" + format_number(a.min) + ":" + format_number(a.max) + ":" +
            std::to_string(a.steps);
  }
  table.meta("grid", grid);

  // Cartesian product, first axis slowest.
  std::vector<std::vector<double>> values;
  std::size_t cells = 1;
  for (const auto& a : axes) {
    values.push_back(a.values());
    cells *= values.back().size();
  }
  std::vector<std::vector<std::string>> rows(cells);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig model = cfg.model;
    std::vector<std::string> row = {std::to_string(cell)};
    std::size_t rest = cell;
    std::vector<double> coords(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
      coords[k] = values[k][rest % values[k].size()];
      rest /= values[k].size();
    }
    const std::uint64_t seed = cfg.seed + cell;
    try {
      for (std::size_t k = 0; k < axes.size(); ++k) model.set(axes[k].param, coords[k]);
      for (std::size_t k = 0; k < axes.size(); ++k) row.push_back(format_number(coords[k]));
      for (std::size_t k = row.size(); k <= n_coord; ++k) row.push_back(format_number(model.get(columns[k])));
      const NetworkSpec spec = model.network();
      spec.validate();
      const FreeEnergyReport rep = locate_m_it(spec, cfg.quadrature, cfg.free_energy_options());
      std::optional<double> amp_instance;
      if (cfg.sweep.instance_every > 0 && cell % static_cast<std::size_t>(cfg.sweep.instance_every) == 0) {
        const ModelInstance inst = sample_instance(spec, seed);
        SolverConfig solver = cfg.solver;
        solver.record_trace = false;
        const SolverResult r = run_mlamp(inst, solver);
        amp_instance = r.final_mse.back();
      }
      const std::vector<std::string> tail = {
          format_number(rep.amp_mse), format_number(rep.mmse), format_number(amp_instance),
          rep.phase == Phase::Unknown ? kMissing : to_string(rep.phase),
          format_number(rep.phi_uninformed), format_number(rep.phi_informed),
          format_bool(rep.uninformed.converged), format_bool(rep.informed.converged),
          std::to_string(rep.uninformed.iterations), std::to_string(rep.informed.iterations),
          format_bool(rep.informed_selected), "ok"};
      row.insert(row.end(), tail.begin(), tail.end());
    } catch (const std::exception&) {
      row.resize(1);
      for (std::size_t k = 0; k < axes.size(); ++k) row.push_back(format_number(coords[k]));
      while (row.size() <= n_coord) row.push_back(kMissing);
      for (int k = 0; k < 11; ++k) row.push_back(kMissing);
      row.push_back("error");
    }
    row.push_back(run.timestamps ? format_number(seconds_since(t0)) : kMissing);
    row.push_back(std::to_string(seed));
    rows[cell] = std::move(row);
  }
  for (auto& r : rows) table.add_row(std::move(r));
  return table;
}

CsvTable cmd_free_energy(const ExperimentConfig& cfg, const RunOptions& run) {
  cfg.validate();
  (void)run;
  const NetworkSpec spec = cfg.model.network();
  const std::size_t depth = spec.depth();
  std::vector<std::string> columns = {"m_signal", "phi", "inner_converged"};
  for (std::size_t l = 1; l <= depth; ++l) columns.push_back("m_" + std::to_string(l));
  for (std::size_t l = 1; l <= depth; ++l) columns.push_back("mhat_" + std::to_string(l));
  CsvTable table(columns);
  common_meta(table, cfg, "free-energy");
  const double rho_signal = second_moment(spec.prior);
  const double m_max = cfg.scan.m_max < 0.0 ? rho_signal : cfg.scan.m_max;
  const auto rows = scan_free_energy(spec, cfg.quadrature, cfg.scan.m_min, m_max, cfg.scan.steps, cfg.se);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {format_number(r.m_signal), format_number(r.phi),
                                      format_bool(r.inner_converged)};
    for (double v : r.m) cells.push_back(format_number(v));
    for (double v : r.mhat) cells.push_back(format_number(v));
    table.add_row(std::move(cells));
  }
  return table;
}

namespace {

struct Check {
  std::string name;
  int draws = 0;
  double max_abs = 0.0;   ///< closed form vs oracle, all moments
  double max_rel = 0.0;   ///< derivative identities
  void abs(double a, double b) { max_abs = std::max(max_abs, std::abs(a - b)); }
  void rel(double analytic, double fd) {
    max_rel = std::max(max_rel, std::abs(analytic - fd) / std::max(std::abs(analytic), 1e-4));
  }
};

constexpr double kOracleTolerance = 1e-8;
constexpr double kDerivativeTolerance = 1e-6;
constexpr double kFdStep = 1e-3;

}  // namespace

SelftestResult cmd_selftest(int draws, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(gen); };
  std::vector<Check> checks;

  for (ChannelKind kind : {ChannelKind::Awgn, ChannelKind::SignWithNoise}) {
    Check mid{std::string("mid_layer_") + to_string(kind)};
    Check first{std::string("first_layer_") + to_string(kind)};
    for (int i = 0; i < draws; ++i) {
      ChannelSpec ch{kind, kind == ChannelKind::Awgn ? uniform(0.05, 1.05)
                                                     : (i % 3 == 0 ? 0.0 : uniform(0.0, 1.0))};
      const VariableSide vs{uniform(0.05, 3.05), uniform(-2.0, 2.0)};
      const FactorSide fs{uniform(0.05, 2.05), uniform(-2.0, 2.0)};
      const auto a = mid_layer_moments(ch, vs, fs);
      const auto o = oracle_moments(ch, vs, fs);
      mid.abs(a.g, o.g);
      mid.abs(a.dg, o.dg);
      mid.abs(a.hhat, o.hhat);
      mid.abs(a.sigma, o.sigma);
      const auto dg = richardson_derivatives(
          [&](double w) { return mid_layer_moments(ch, vs, {fs.V, w}).g; }, fs.omega, kFdStep);
      mid.rel(a.dg, dg.first);
      const auto ds = richardson_derivatives(
          [&](double b) { return mid_layer_moments(ch, {vs.A, b}, fs).hhat; }, vs.B, kFdStep);
      mid.rel(a.sigma, ds.first);
      ++mid.draws;

      const double y = kind == ChannelKind::Awgn ? uniform(-2.0, 2.0) : (unit(gen) < 0.5 ? -1.0 : 1.0);
      const auto fa = first_layer_g(ch, y, fs);
      const auto fo = oracle_moments(ch, y, fs);
      first.abs(fa.g, fo.g);
      first.abs(fa.dg, fo.dg);
      const auto fd = richardson_derivatives(
          [&](double w) { return first_layer_g(ch, y, {fs.V, w}).g; }, fs.omega, kFdStep);
      first.rel(fa.dg, fd.first);
      ++first.draws;
    }
    checks.push_back(mid);
    checks.push_back(first);
  }
  for (PriorSpec prior : {PriorSpec::gauss_bernoulli(0.3), PriorSpec::rademacher(),
                          PriorSpec::gaussian(1.5)}) {
    Check c{"prior_" + to_string(prior.kind)};
    for (int i = 0; i < draws; ++i) {
      const VariableSide vs{uniform(0.05, 3.05), uniform(-3.0, 3.0)};
      const auto a = prior_moments(prior, vs);
      const auto o = oracle_moments(prior, vs);
      c.abs(a.hhat, o.hhat);
      c.abs(a.sigma, o.sigma);
      const auto ds = richardson_derivatives(
          [&](double b) { return prior_moments(prior, {vs.A, b}).hhat; }, vs.B, kFdStep);
      c.rel(a.sigma, ds.first);
      ++c.draws;
    }
    checks.push_back(c);
  }

  CsvTable table({"component", "draws", "max_abs_vs_oracle", "max_rel_derivative", "abs_tol",
                  "rel_tol", "pass"});
  table.meta("command", "selftest");
  table.meta("seed", std::to_string(seed));
  bool passed = true;
  for (const auto& c : checks) {
    const bool ok = c.max_abs <= kOracleTolerance && c.max_rel <= kDerivativeTolerance;
    passed = passed && ok;
    table.add_row({c.name, std::to_string(c.draws), format_number(c.max_abs),
                   format_number(c.max_rel), format_number(kOracleTolerance),
                   format_number(kDerivativeTolerance), format_bool(ok)});
  }
  return {std::move(table), passed};
}

}  // namespace mlamp::experiments
