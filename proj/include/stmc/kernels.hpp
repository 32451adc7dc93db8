#pragma once
// Vector kernels used by the iterative solvers.
//
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on aarch64). The active backend is chosen once at
// startup from CPU capabilities and may be overridden with the
// STMC_KERNELS environment variable ("scalar", "avx2", "neon") or with
// set_backend(). Element-wise kernels are bit-identical across backends;
// reductions (dot, spmv rows) differ only in summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace stmc::kernels {

enum class Backend { Scalar, Avx2, Neon };

/// Compressed-row view over a sparse matrix; no ownership.
struct CsrView {
  int rows = 0;
  std::span<const int> row_ptr;
  std::span<const int> cols;
  std::span<const double> vals;
};

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  void (*xpay)(const double* x, double a, double* y, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  void (*spmv)(const CsrView& a, const double* x, double* y);
};

bool backend_available(Backend b) noexcept;
Backend best_available_backend() noexcept;
Backend active_backend() noexcept;
std::string_view backend_name(Backend b) noexcept;

/// Throws std::invalid_argument if the backend is not compiled in or the
/// CPU lacks the instruction set.
void set_backend(Backend b);

/// Direct access to one backend's table, for equivalence tests.
const KernelTable& table(Backend b);

// Dispatching entry points.
double dot(std::span<const double> x, std::span<const double> y);
/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
/// y = x + a * y
void xpay(std::span<const double> x, double a, std::span<double> y);
/// out = x .* y
void mul(std::span<const double> x, std::span<const double> y, std::span<double> out);
/// y = A x
void spmv(const CsrView& a, std::span<const double> x, std::span<double> y);

namespace scalar {
extern const KernelTable kTable;
}
#if defined(STMC_HAVE_AVX2_TU)
namespace avx2 {
extern const KernelTable kTable;
}
#endif
#if defined(STMC_HAVE_NEON_TU)
namespace neon {
extern const KernelTable kTable;
}
#endif

}  // namespace stmc::kernels
