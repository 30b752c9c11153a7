#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <vector>

namespace mlamp::quadrature {

/// Gauss-Hermite rule for E_{s ~ N(0,1)} f(s): nodes and weights summing to 1.
struct HermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule with n nodes (n >= 1); cached per thread after the first call.
const HermiteRule& gauss_hermite(int n);

/// 7-point Gauss / 15-point Kronrod pair on [-1, 1].
struct KronrodPair {
  static constexpr std::array<double, 8> kronrod_nodes = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> kronrod_weights = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  // Gauss weights for kronrod_nodes[1], [3], [5], [7].
  static constexpr std::array<double, 4> gauss_weights = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
};

template <std::size_t K>
struct Integral {
  std::array<double, K> value{};
  double error = 0.0;
  bool converged = true;
  int evaluations = 0;
};

/// Globally adaptive Gauss-Kronrod integration of a vector-valued integrand
/// f : double -> std::array<double, K> over the union of [b_0, b_1], ...,
/// [b_{m-1}, b_m] (sorted breakpoints). The interval with the largest error
/// is bisected until the summed error (max over components) drops below
/// max(abs_tol, rel_tol * |value|_inf) or max_intervals is reached.
template <std::size_t K, class F>
Integral<K> integrate(F&& f, std::span<const double> breakpoints, double abs_tol,
                      double rel_tol = 0.0, int max_intervals = 4000) {
  using Value = std::array<double, K>;
  struct Piece {
    double a, b;
    Value value;
    double error;
    bool operator<(const Piece& other) const { return error < other.error; }
  };
  Integral<K> out;
  auto rule = [&](double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    Value kron{}, gauss{};
    for (std::size_t j = 0; j < 8; ++j) {
      const double dx = half * KronrodPair::kronrod_nodes[j];
      const double wk = KronrodPair::kronrod_weights[j];
      const bool on_gauss = (j % 2) == 1;
      const double wg = on_gauss ? KronrodPair::gauss_weights[j / 2] : 0.0;
      if (j == 7) {
        const Value fc = f(center);
        for (std::size_t k = 0; k < K; ++k) {
          kron[k] += wk * fc[k];
          gauss[k] += wg * fc[k];
        }
        out.evaluations += 1;
      } else {
        const Value fl = f(center - dx);
        const Value fr = f(center + dx);
        for (std::size_t k = 0; k < K; ++k) {
          kron[k] += wk * (fl[k] + fr[k]);
          gauss[k] += wg * (fl[k] + fr[k]);
        }
        out.evaluations += 2;
      }
    }
    double err = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      kron[k] *= half;
      gauss[k] *= half;
      err = std::max(err, std::abs(kron[k] - gauss[k]));
    }
    return Piece{a, b, kron, err};
  };

  std::priority_queue<Piece> pieces;
  Value total{};
  double total_error = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!(breakpoints[i + 1] > breakpoints[i])) continue;
    Piece p = rule(breakpoints[i], breakpoints[i + 1]);
    for (std::size_t k = 0; k < K; ++k) total[k] += p.value[k];
    total_error += p.error;
    pieces.push(p);
  }
  auto tolerance = [&] {
    double norm = 0.0;
    for (double v : total) norm = std::max(norm, std::abs(v));
    return std::max(abs_tol, rel_tol * norm);
  };
  while (!pieces.empty() && total_error > tolerance()) {
    if (static_cast<int>(pieces.size()) >= max_intervals) {
      out.converged = false;
      break;
    }
    Piece worst = pieces.top();
    pieces.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Interval at floating-point resolution; keep it and give up refining.
      pieces.push(worst);
      out.converged = false;
      break;
    }
    Piece left = rule(worst.a, mid);
    Piece right = rule(mid, worst.b);
    for (std::size_t k = 0; k < K; ++k) total[k] += left.value[k] + right.value[k] - worst.value[k];
    total_error += left.error + right.error - worst.error;
    pieces.push(left);
    pieces.push(right);
  }
  // Re-sum to shed the drift of incremental updates.
  Value sum{};
  double err = 0.0;
  while (!pieces.empty()) {
    const Piece& p = pieces.top();
    for (std::size_t k = 0; k < K; ++k) sum[k] += p.value[k];
    err += p.error;
    pieces.pop();
  }
  out.value = sum;
  out.error = err;
  return out;
}

/// A narrow feature of an integrand (a step or a bump) at `location`
/// with characteristic `width`, in the integration variable's units.
struct Feature {
  double location;
  double width;
};

/// Standardized range [-kNormalCutoff, kNormalCutoff] used for Gaussian
/// expectations; the neglected mass is below 1e-38.
inline constexpr double kNormalCutoff = 13.0;

/// E_{u ~ N(mean, sd^2)} f(u) by adaptive Gauss-Kronrod over the
/// standardized variable, with extra breakpoints around each feature.
/// sd == 0 evaluates f(mean).
template <std::size_t K, class F>
Integral<K> normal_expectation(F&& f, double mean, double sd, std::span<const Feature> features,
                               double abs_tol, double rel_tol = 0.0) {
  if (sd <= 0.0) {
    Integral<K> out;
    out.value = f(mean);
    out.evaluations = 1;
    return out;
  }
  std::vector<double> cuts = {-kNormalCutoff, 0.0, kNormalCutoff};
  for (const Feature& feat : features) {
    const double center = (feat.location - mean) / sd;
    const double w = std::max(feat.width / sd, 1e-300);
    for (double k : {0.0, 1.0, 8.0, 64.0}) {
      for (double sgn : {-1.0, 1.0}) {
        const double c = center + sgn * k * w;
        if (c > -kNormalCutoff && c < kNormalCutoff) cuts.push_back(c);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  auto weighted = [&](double s) {
    auto v = f(mean + sd * s);
    const double density = 0.39894228040143267794 * std::exp(-0.5 * s * s);
    for (double& x : v) x *= density;
    return v;
  };
  return integrate<K>(weighted, cuts, abs_tol, rel_tol);
}

}  // namespace mlamp::quadrature
