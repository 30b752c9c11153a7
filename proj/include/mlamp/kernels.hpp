#pragma once

#include <span>

#include "mlamp/matrix.hpp"

// Dense matrix-vector kernels used by the sampler and the ML-AMP sweep.
//
// The OpenMP versions partition outputs across threads and keep the
// per-output accumulation order of the serial reference, so both produce
// bitwise identical results for any thread count.
namespace mlamp::kernels {

/// out = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> out);

/// out = W^T v
void matvec_transposed(const Matrix& w, std::span<const double> v, std::span<double> out);

/// Fused forward pass of one layer: omega_raw = W h, var = W2 s.
void forward(const Matrix& w, const Matrix& w2, std::span<const double> h,
             std::span<const double> s, std::span<double> omega_raw, std::span<double> var);

/// Fused backward pass of one layer: field = W^T g, precision = W2^T (-dg).
void backward(const Matrix& w, const Matrix& w2, std::span<const double> g,
              std::span<const double> dg, std::span<double> field, std::span<double> precision);

/// Number of threads the kernels will use (omp_get_max_threads, or 1).
int max_threads();
void set_threads(int n);

namespace reference {

void matvec(const Matrix& w, std::span<const double> x, std::span<double> out);
void matvec_transposed(const Matrix& w, std::span<const double> v, std::span<double> out);
void forward(const Matrix& w, const Matrix& w2, std::span<const double> h,
             std::span<const double> s, std::span<double> omega_raw, std::span<double> var);
void backward(const Matrix& w, const Matrix& w2, std::span<const double> g,
              std::span<const double> dg, std::span<double> field, std::span<double> precision);

}  // namespace reference

}  // namespace mlamp::kernels
