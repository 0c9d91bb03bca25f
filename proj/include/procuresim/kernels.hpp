#pragma once

#include <cstddef>

// Numeric inner loops for the neural nets. Scalar reference kernels plus an
// AVX2/FMA variant selected once at startup from cpuid; the choice can be
// overridden for tests or reproducibility comparisons via force_backend() or
// the PROCURESIM_NO_SIMD environment variable.
namespace procuresim::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
const char* backend_name();
// Scalar always succeeds; Avx2 returns false when the CPU lacks support.
bool force_backend(Backend b);

// dot product of a and b, length n
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x, length n
void axpy(double alpha, const double* x, double* y, std::size_t n);

// One Adam step over n parameters. m, v are the running moments; bias1/bias2
// are the 1-beta^t corrections already evaluated by the caller.
void adam_step(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bias1,
               double bias2);

// --- composites (built on the dispatched primitives) ---

// y = W x + b with W row-major [rows x cols]; b may be null
void affine(const double* w, const double* b, const double* x, double* y,
            std::size_t rows, std::size_t cols);

// out = W^T g (assigns), W row-major [rows x cols], g length rows
void matvec_t(const double* w, const double* g, double* out, std::size_t rows,
              std::size_t cols);

// wg += g x^T (accumulates), wg row-major [rows x cols]
void outer_accum(double* wg, const double* g, const double* x,
                 std::size_t rows, std::size_t cols);

}  // namespace procuresim::kernels
