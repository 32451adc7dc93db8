#include <arm_neon.h>

#include "stmc/kernels.hpp"

namespace stmc::kernels::neon {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void xpay(const double* x, double a, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(x + i), vmulq_f64(va, vld1q_f64(y + i))));
  for (; i < n; ++i) y[i] = x[i] + a * y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void spmv(const CsrView& a, const double* x, double* y) {
  const int* rp = a.row_ptr.data();
  const int* ci = a.cols.data();
  const double* v = a.vals.data();
  for (int r = 0; r < a.rows; ++r) {
    int k = rp[r];
    const int end = rp[r + 1];
    float64x2_t acc = vdupq_n_f64(0.0);
    for (; k + 2 <= end; k += 2) {
      const double pair[2] = {x[ci[k]], x[ci[k + 1]]};
      acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(v + k), vld1q_f64(pair)));
    }
    double s = vaddvq_f64(acc);
    for (; k < end; ++k) s += v[k] * x[ci[k]];
    y[r] = s;
  }
}

}  // namespace

const KernelTable kTable{&dot, &axpy, &xpay, &mul, &spmv};

}  // namespace stmc::kernels::neon
