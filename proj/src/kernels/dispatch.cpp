#include <atomic>
#include <cassert>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "stmc/kernels.hpp"

namespace stmc::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(STMC_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("STMC_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return Backend::Scalar;
    if (want == "avx2" && backend_available(Backend::Avx2)) return Backend::Avx2;
    if (want == "neon" && backend_available(Backend::Neon)) return Backend::Neon;
  }
  return best_available_backend();
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
    case Backend::Neon:
#if defined(STMC_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend best_available_backend() noexcept {
  if (backend_available(Backend::Avx2)) return Backend::Avx2;
  if (backend_available(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

Backend active_backend() noexcept { return active().load(std::memory_order_relaxed); }

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

void set_backend(Backend b) {
  if (!backend_available(b))
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  active().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
  if (!backend_available(b))
    throw std::invalid_argument("kernel backend not available: " + std::string(backend_name(b)));
  switch (b) {
#if defined(STMC_HAVE_AVX2_TU)
    case Backend::Avx2:
      return avx2::kTable;
#endif
#if defined(STMC_HAVE_NEON_TU)
    case Backend::Neon:
      return neon::kTable;
#endif
    default:
      return scalar::kTable;
  }
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return table(active_backend()).dot(x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  table(active_backend()).axpy(a, x.data(), y.data(), x.size());
}

void xpay(std::span<const double> x, double a, std::span<double> y) {
  assert(x.size() == y.size());
  table(active_backend()).xpay(x.data(), a, y.data(), x.size());
}

void mul(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  assert(x.size() == y.size() && out.size() == x.size());
  table(active_backend()).mul(x.data(), y.data(), out.data(), x.size());
}

void spmv(const CsrView& a, std::span<const double> x, std::span<double> y) {
  assert(static_cast<int>(y.size()) == a.rows);
  table(active_backend()).spmv(a, x.data(), y.data());
}

}  // namespace stmc::kernels
