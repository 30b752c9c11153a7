// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and runtime limits are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mlamp/experiments.hpp"
#include "mlamp/free_energy.hpp"
#include "mlamp/se.hpp"
#include "mlamp/solver.hpp"
#include "support/reference.hpp"

using namespace mlamp;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail, double runtime) {
  if (!pass) ++failures;
  std::printf("%s [%d] %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(),
              runtime);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const QuadratureConfig kQ{};

// Converged fixed points met along the way, checked for stationarity last.
struct FixedPoint {
  NetworkSpec spec;
  SePoint point;
  std::string label;
};
std::vector<FixedPoint> fixed_points;
std::mutex fixed_points_mutex;

void keep(const NetworkSpec& spec, const SeResult& r, const std::string& label) {
  if (!r.converged) return;
  std::lock_guard lock(fixed_points_mutex);
  fixed_points.push_back({spec, r.point, label});
}

void keep(const NetworkSpec& spec, const FreeEnergyReport& rep, const std::string& label) {
  keep(spec, rep.uninformed, label + "/uninformed");
  keep(spec, rep.informed, label + "/informed");
}

NetworkSpec single(ChannelSpec ch, double alpha, PriorSpec prior) {
  NetworkSpec s;
  s.layers = {{ch, alpha}};
  s.prior = prior;
  s.n_signal = 2000;
  return s;
}

NetworkSpec preset(const std::string& name, const std::string& param, double value,
                   double alpha2) {
  auto m = experiments::ModelConfig::from_preset(name);
  m.set("alpha2", alpha2);
  m.set(param, value);
  return m.network();
}

// Smallest alpha in [lo, hi] whose uninformed fixed point has mse < 1e-4,
// by bisection down to `width`.
double bisect_threshold(const std::function<NetworkSpec(double)>& make, double lo, double hi,
                        double width, const std::string& label) {
  auto easy = [&](double a) {
    const NetworkSpec s = make(a);
    const auto r = se_fixed_point(s, SeInit::Uninformed, kQ);
    keep(s, r, label);
    return r.converged && se_mse(r.point).back() < 1e-4;
  };
  if (easy(lo) || !easy(hi)) return std::nan("");
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    (easy(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

struct RunSummary {
  double mse_signal, mean_sigma_signal;
  bool converged;
};

void criterion_selftest() {
  const auto t0 = Clock::now();
  const auto r = experiments::cmd_selftest(1000, 1);
  double max_abs = 0.0, max_rel = 0.0;
  const auto& t = r.table;
  for (const auto& row : t.rows()) {
    max_abs = std::max(max_abs, std::stod(row[t.column_index("max_abs_vs_oracle")]));
    max_rel = std::max(max_rel, std::stod(row[t.column_index("max_rel_derivative")]));
  }
  const double dt = seconds_since(t0);
  report(1, r.passed && max_abs <= 1e-8 && max_rel <= 1e-6 && dt < 120.0,
         "closed forms vs quadrature oracle (1000 draws per channel/prior)",
         "max abs " + fmt("%.2e", max_abs) + " <= 1e-8, max rel derivative " + fmt("%.2e", max_rel) +
             " <= 1e-6, runtime < 120 s",
         dt);
}

void criterion_reduction() {
  const auto t0 = Clock::now();
  const double delta = 1e-2;
  const PriorSpec prior = PriorSpec::gauss_bernoulli(0.3);
  NetworkSpec s = single(ChannelSpec::awgn(delta), 0.5, prior);
  s.n_signal = 400;
  const auto inst = sample_instance(s, 2024);
  const auto problem = InferenceProblem::from_instance(inst);
  MlampIteration it(problem, 0.0, false);
  ref::Gamp gamp(inst.weights[0], inst.y, delta, prior);
  double amp_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    it.step();
    gamp.iterate();
    for (std::size_t i = 0; i < 400; ++i) {
      amp_err = std::max(amp_err, std::abs(it.x_hat()[i] - gamp.xhat(static_cast<Eigen::Index>(i))));
      amp_err = std::max(amp_err, std::abs(it.state().sigma[0][i] - gamp.v(static_cast<Eigen::Index>(i))));
    }
  }
  const ref::ScalarSe se{0.5, delta, prior};
  SePoint p = initial_point(s, SeInit::Uninformed);
  double m = p.m[0], se_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    p = se_step(s, p, kQ);
    const double mhat = se.conjugate(m);
    m = se.overlap(mhat);
    se_err = std::max({se_err, std::abs(p.m[0] - m), std::abs(p.mhat[0] - mhat) / std::max(1.0, mhat)});
  }
  const double dt = seconds_since(t0);
  report(2, amp_err <= 1e-10 && se_err <= 1e-10 && dt < 60.0,
         "single-layer reduction (200x400 Awgn, 50 iterations)",
         "ML-AMP vs G-AMP " + fmt("%.2e", amp_err) + " <= 1e-10, SE vs scalar SE " +
             fmt("%.2e", se_err) + " <= 1e-10, runtime < 60 s",
         dt);
}

std::vector<RunSummary> slr2_runs;  // alpha = 0.8, reused for the Nishimori check

void criterion_instance_vs_se() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (double alpha : {0.6, 0.8, 1.0}) {
    const NetworkSpec spec = preset("slr2", "alpha", alpha, 1.0);
    const auto rep = locate_m_it(spec, kQ);
    keep(spec, rep, "slr2 alpha=" + fmt("%.2f", alpha));
    const double se = rep.amp_mse;
    double avg = 0.0;
    for (int seed = 1; seed <= 5; ++seed) {
      const auto r = run_mlamp(sample_instance(spec, static_cast<std::uint64_t>(seed)), SolverConfig{});
      avg += r.final_mse.back() / 5.0;
      if (alpha == 0.8) slr2_runs.push_back({r.final_mse.back(), mean(r.sigma.back()), r.converged});
    }
    const bool ok = rep.phase == Phase::Easy &&
                    (se < 1e-2 ? std::abs(avg - se) <= 1e-3 : std::abs(avg - se) <= 0.1 * se);
    pass = pass && ok;
    detail += "alpha=" + fmt("%.1f", alpha) + " inst " + fmt("%.3e", avg) + " se " + fmt("%.3e", se) +
              (ok ? "" : " (out of tolerance)") + "; ";
  }
  const double dt = seconds_since(t0);
  pass = pass && dt < 600.0;
  report(3, pass, "slr2 instance MSE vs SE (n=2000, 5 seeds, easy alphas)",
         detail + "tol 10% rel or 1e-3 abs below 1e-2, runtime < 600 s", dt);
}

void criterion_binary_threshold() {
  const auto t0 = Clock::now();
  const double thr = bisect_threshold(
      [](double a) { return single(ChannelSpec::awgn(1e-8), a, PriorSpec::rademacher()); }, 0.3, 0.7,
      1e-3, "rademacher single layer");
  const double dt = seconds_since(t0);
  report(4, std::abs(thr - 0.48) <= 0.03 && dt < 300.0,
         "binary-prior AMP threshold (single-layer SE, Awgn 1e-8)",
         "alpha_c = " + fmt("%.4f", thr) + " in 0.48 +- 0.03, runtime < 300 s", dt);
}

void criterion_factorization() {
  const auto t0 = Clock::now();
  const PriorSpec prior = PriorSpec::gauss_bernoulli(0.3);
  // single-layer thresholds: product matrix with Awgn(1e-8), inner layer noiseless
  auto cfg = experiments::ModelConfig::from_preset("slr2");
  cfg.single_layer = true;
  const double thr_alpha = bisect_threshold(
      [&](double a) {
        auto c = cfg;
        c.set("alpha", a);
        return c.network();
      },
      0.1, 1.0, 1e-3, "slr single layer");
  const double thr_alpha2 = bisect_threshold(
      [&](double a) { return single(ChannelSpec::awgn(0.0), a, prior); }, 0.1, 1.0, 1e-3,
      "noiseless single layer");

  const int steps = 21;
  const double lo = 0.05, hi = 1.05, step = (hi - lo) / (steps - 1);
  int violations = 0, exempt = 0, easy = 0, unknown = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : violations, exempt, easy, unknown)
  for (int cell = 0; cell < steps * steps; ++cell) {
    const double alpha2 = lo + step * (cell / steps);
    const double alpha = lo + step * (cell % steps);
    const NetworkSpec spec = preset("slr2", "alpha", alpha, alpha2);
    const auto rep = locate_m_it(spec, kQ);
    keep(spec, rep, "slr2 grid");
    const bool is_easy = rep.phase == Phase::Easy;
    easy += is_easy;
    unknown += rep.phase == Phase::Unknown;
    if (std::abs(alpha - thr_alpha) < step || std::abs(alpha2 - thr_alpha2) < step) {
      ++exempt;
      continue;
    }
    const bool above = alpha > thr_alpha && alpha2 > thr_alpha2;
    if (above != is_easy) {
      ++violations;
#pragma omp critical
      std::printf("  violation: alpha2=%.2f alpha=%.2f phase=%s\n", alpha2, alpha,
                  to_string(rep.phase).c_str());
    }
  }
  const double dt = seconds_since(t0);
  report(5, violations == 0 && dt < 1800.0, "noiseless slr2 factorization (21x21 grid)",
         "thresholds alpha " + fmt("%.4f", thr_alpha) + ", alpha2 " + fmt("%.4f", thr_alpha2) + "; " +
             std::to_string(easy) + " easy, " + std::to_string(unknown) + " unknown, " +
             std::to_string(exempt) + " exempt, " + std::to_string(violations) +
             " violations (0 allowed), runtime < 1800 s",
         dt);
}

std::vector<RunSummary> decoder_runs;  // alpha1 = 0.6

void criterion_decoder() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (double a1 : {0.40, 0.44, 0.60}) {
    const NetworkSpec spec = preset("decoder2", "alpha1", a1, 2.0);
    keep(spec, locate_m_it(spec, kQ), "decoder2 alpha1=" + fmt("%.2f", a1));
    int wins = 0, both_ok = 0;
    double worst = 0.0;
    for (int seed = 1; seed <= 5; ++seed) {
      const auto inst = sample_instance(spec, static_cast<std::uint64_t>(seed));
      const auto amp = run_mlamp(inst, SolverConfig{});
      const auto base = run_layerwise_baseline(inst, SolverConfig{}, {});
      const double a = amp.final_mse.back(), b = base.final_mse.back();
      wins += a < b;
      both_ok += a < 1e-2 && b < 1e-2;
      worst = std::max({worst, a, b});
      if (a1 == 0.60) decoder_runs.push_back({a, mean(amp.sigma.back()), amp.converged});
    }
    if (a1 < 0.5) {
      pass = pass && wins >= 4;
      detail += "alpha1=" + fmt("%.2f", a1) + " ML-AMP better on " + std::to_string(wins) + "/5; ";
    } else {
      pass = pass && both_ok == 5;
      detail += "alpha1=0.60 both below 1e-2 on " + std::to_string(both_ok) + "/5 (worst " +
                fmt("%.1e", worst) + "); ";
    }
  }
  const double dt = seconds_since(t0);
  pass = pass && dt < 600.0;
  report(6, pass, "decoder2 ML-AMP vs layer-wise baseline (alpha2=2, n=2000)",
         detail + "need >= 4/5 and 5/5, runtime < 600 s", dt);
}

void criterion_stationarity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  int nan_count = 0, above = 0;
  std::map<std::string, double> family_worst;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < fixed_points.size(); ++i) {
    const auto& fp = fixed_points[i];
    const auto g = stationarity_gradient(fp.spec, fp.point, kQ);
#pragma omp critical
    {
      if (!std::isfinite(g.max_abs)) ++nan_count;
      if (!(g.max_abs < 1e-5)) ++above;
      double& fw = family_worst[fp.label];
      fw = std::max(fw, g.max_abs);
      if (!(g.max_abs <= worst)) {
        worst = g.max_abs;
        where = fp.label;
      }
    }
  }
  for (const auto& [label, w] : family_worst) std::printf("  %-40s max |grad| %.2e\n", label.c_str(), w);
  const double dt = seconds_since(t0);
  report(7, nan_count == 0 && worst < 1e-5 && !fixed_points.empty(),
         "free-energy stationarity at converged SE fixed points",
         std::to_string(fixed_points.size()) + " fixed points, " + std::to_string(above) +
             " at or above the bound, max |grad| " + fmt("%.2e", worst) +
             " (" + where + ") < 1e-5",
         dt);
}

void criterion_nishimori() {
  const auto t0 = Clock::now();
  // Exact recovery leaves both sides at rounding level; relative error is
  // taken against max(mse, 1e-12).
  auto check = [](const std::vector<RunSummary>& runs, std::string& detail, const char* name) {
    double mse = 0.0, sig = 0.0;
    bool converged = runs.size() == 5;
    for (const auto& r : runs) {
      mse += r.mse_signal / 5.0;
      sig += r.mean_sigma_signal / 5.0;
      converged = converged && r.converged;
    }
    const double rel = std::abs(sig - mse) / std::max(mse, 1e-12);
    detail += std::string(name) + " mse " + fmt("%.3e", mse) + " mean sigma " + fmt("%.3e", sig) +
              " rel " + fmt("%.3f", rel) + "; ";
    return converged && rel <= 0.15;
  };
  std::string detail;
  const bool a = check(slr2_runs, detail, "slr2 alpha=0.8");
  const bool b = check(decoder_runs, detail, "decoder2 alpha1=0.6");
  report(8, a && b, "Nishimori consistency (n=2000, 5 seeds, averaged)",
         detail + "tol 15% relative", seconds_since(t0));
}

}  // namespace

int main() {
  criterion_selftest();
  criterion_reduction();
  criterion_instance_vs_se();
  criterion_binary_threshold();
  criterion_factorization();
  criterion_decoder();
  criterion_stationarity();
  criterion_nishimori();
  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
