#include "mlamp/kernels.hpp"

#include <algorithm>
#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mlamp::kernels {

namespace {

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Accumulates rows [.., ..) into out[c0, c1) in row order.
inline void accumulate_columns(const Matrix& w, std::span<const double> v, double scale,
                               std::size_t c0, std::size_t c1, double* out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double coeff = scale * v[r];
    const double* row = w.row(r).data();
    for (std::size_t c = c0; c < c1; ++c) out[c] += row[c] * coeff;
  }
}

// Column blocks sized so each thread streams contiguous row segments.
constexpr std::size_t kColumnBlock = 256;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
  assert(x.size() == w.cols() && out.size() == w.rows());
  const auto rows = static_cast<std::ptrdiff_t>(w.rows());
  const std::size_t cols = w.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    out[r] = dot(w.row(r).data(), x.data(), cols);
  }
}

void matvec_transposed(const Matrix& w, std::span<const double> v, std::span<double> out) {
  assert(v.size() == w.rows() && out.size() == w.cols());
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t cols = w.cols();
  const auto blocks = static_cast<std::ptrdiff_t>((cols + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::size_t c0 = static_cast<std::size_t>(b) * kColumnBlock;
    accumulate_columns(w, v, 1.0, c0, std::min(cols, c0 + kColumnBlock), out.data());
  }
}

void forward(const Matrix& w, const Matrix& w2, std::span<const double> h,
             std::span<const double> s, std::span<double> omega_raw, std::span<double> var) {
  const auto rows = static_cast<std::ptrdiff_t>(w.rows());
  const std::size_t cols = w.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    omega_raw[r] = dot(w.row(r).data(), h.data(), cols);
    var[r] = dot(w2.row(r).data(), s.data(), cols);
  }
}

void backward(const Matrix& w, const Matrix& w2, std::span<const double> g,
              std::span<const double> dg, std::span<double> field, std::span<double> precision) {
  std::fill(field.begin(), field.end(), 0.0);
  std::fill(precision.begin(), precision.end(), 0.0);
  const std::size_t cols = w.cols();
  const auto blocks = static_cast<std::ptrdiff_t>((cols + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::size_t c0 = static_cast<std::size_t>(b) * kColumnBlock;
    const std::size_t c1 = std::min(cols, c0 + kColumnBlock);
    accumulate_columns(w, g, 1.0, c0, c1, field.data());
    accumulate_columns(w2, dg, -1.0, c0, c1, precision.data());
  }
}

namespace reference {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r).data(), x.data(), w.cols());
}

void matvec_transposed(const Matrix& w, std::span<const double> v, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  accumulate_columns(w, v, 1.0, 0, w.cols(), out.data());
}

void forward(const Matrix& w, const Matrix& w2, std::span<const double> h,
             std::span<const double> s, std::span<double> omega_raw, std::span<double> var) {
  matvec(w, h, omega_raw);
  matvec(w2, s, var);
}

void backward(const Matrix& w, const Matrix& w2, std::span<const double> g,
              std::span<const double> dg, std::span<double> field, std::span<double> precision) {
  matvec_transposed(w, g, field);
  std::fill(precision.begin(), precision.end(), 0.0);
  accumulate_columns(w2, dg, -1.0, 0, w2.cols(), precision.data());
}

}  // namespace reference

}  // namespace mlamp::kernels
