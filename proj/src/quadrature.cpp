#include "mlamp/quadrature.hpp"

#include <map>
#include <numbers>
#include <stdexcept>

namespace mlamp::quadrature {

namespace {

// Golub-Welsch-free construction: Newton iteration on the orthonormal
// physicists' Hermite recurrence, then rescaling to the N(0, 1) weight.
HermiteRule build_rule(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Hermite order must be >= 1");
  const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
  std::vector<double> x(n), w(n);
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  HermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int i = 0; i < n; ++i) {
    // physicists' nodes in decreasing order; store ascending
    rule.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
    rule.weights[i] = w[n - 1 - i] * inv_sqrt_pi;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace

const HermiteRule& gauss_hermite(int n) {
  thread_local std::map<int, HermiteRule> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

}  // namespace mlamp::quadrature
