#include "stmc/kernels.hpp"

namespace stmc::kernels::scalar {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void xpay(const double* x, double a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + a * y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void spmv(const CsrView& a, const double* x, double* y) {
  const int* rp = a.row_ptr.data();
  const int* ci = a.cols.data();
  const double* v = a.vals.data();
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = rp[r]; k < rp[r + 1]; ++k) s += v[k] * x[ci[k]];
    y[r] = s;
  }
}

}  // namespace

const KernelTable kTable{&dot, &axpy, &xpay, &mul, &spmv};

}  // namespace stmc::kernels::scalar
