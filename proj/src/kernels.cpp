#include "procuresim/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace procuresim::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_step_scalar(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bias1, double bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bias1;
    double vhat = v[i] / bias2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*adam_step)(double*, const double*, double*, double*, std::size_t,
                    double, double, double, double, double, double);
};

constexpr KernelTable kScalarTable{dot_scalar, axpy_scalar, adam_step_scalar};

}  // namespace

#if defined(__x86_64__) || defined(_M_X64)
#define PROCURESIM_X86 1
// defined in kernels_avx2.cpp (compiled with -mavx2 -mfma)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void adam_step(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bias1,
               double bias2);
}  // namespace avx2
#endif

namespace {

bool avx2_supported() {
#ifdef PROCURESIM_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct Dispatch {
  KernelTable table = kScalarTable;
  Backend backend = Backend::Scalar;

  Dispatch() {
    if (std::getenv("PROCURESIM_NO_SIMD") != nullptr) return;
    select(Backend::Avx2);
  }

  bool select(Backend b) {
    if (b == Backend::Avx2) {
#ifdef PROCURESIM_X86
      if (!avx2_supported()) return false;
      table = KernelTable{avx2::dot, avx2::axpy, avx2::adam_step};
      backend = Backend::Avx2;
      return true;
#else
      return false;
#endif
    }
    table = kScalarTable;
    backend = Backend::Scalar;
    return true;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

const char* backend_name() {
  return dispatch().backend == Backend::Avx2 ? "avx2" : "scalar";
}

bool force_backend(Backend b) { return dispatch().select(b); }

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().table.dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().table.axpy(alpha, x, y, n);
}

void adam_step(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bias1,
               double bias2) {
  dispatch().table.adam_step(p, g, m, v, n, lr, beta1, beta2, eps, bias1,
                             bias2);
}

void affine(const double* w, const double* b, const double* x, double* y,
            std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot(w + r * cols, x, cols) + (b != nullptr ? b[r] : 0.0);
  }
}

void matvec_t(const double* w, const double* g, double* out, std::size_t rows,
              std::size_t cols) {
  std::memset(out, 0, cols * sizeof(double));
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(g[r], w + r * cols, out, cols);
  }
}

void outer_accum(double* wg, const double* g, const double* x,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(g[r], x, wg + r * cols, cols);
  }
}

}  // namespace procuresim::kernels
