#include "riskswitch/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace riskswitch::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double dot_rev_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  const double* br = b + n - 1;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * br[-(std::ptrdiff_t)i];
    s1 += a[i + 1] * br[-(std::ptrdiff_t)(i + 1)];
    s2 += a[i + 2] * br[-(std::ptrdiff_t)(i + 2)];
    s3 += a[i + 3] * br[-(std::ptrdiff_t)(i + 3)];
  }
  for (; i < n; ++i) s0 += a[i] * br[-(std::ptrdiff_t)i];
  return (s0 + s1) + (s2 + s3);
}

double max_abs_diff_scalar(const double* a, const double* b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

// Fixed-shape pairwise tree: blocks of 64 summed serially, block sums merged
// by recursive halving. The shape depends only on n.
static double sum_block(const double* a, std::size_t n) {
  if (n <= 64) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t half = (n / 2 + 63) & ~std::size_t{63};
  if (half >= n) half = n / 2;
  return sum_block(a, half) + sum_block(a + half, n - half);
}

double sum_scalar(const double* a, std::size_t n) { return sum_block(a, n); }

}  // namespace detail

namespace {

struct Backend {
  const char* name;
  double (*dot)(const double*, const double*, std::size_t);
  double (*dot_rev)(const double*, const double*, std::size_t);
  double (*max_abs_diff)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
};

constexpr Backend kScalar{"scalar", detail::dot_scalar, detail::dot_rev_scalar,
                          detail::max_abs_diff_scalar, detail::sum_scalar};

#if RISKSWITCH_HAVE_AVX2_TU
constexpr Backend kAvx2{"avx2", detail::dot_avx2, detail::dot_rev_avx2,
                        detail::max_abs_diff_avx2, detail::sum_avx2};
#endif
#if RISKSWITCH_HAVE_NEON_TU
constexpr Backend kNeon{"neon", detail::dot_neon, detail::dot_rev_neon,
                        detail::max_abs_diff_neon, detail::sum_neon};
#endif

const Backend* g_backend = nullptr;
std::once_flag g_init_flag;

const Backend* best_backend() {
#if RISKSWITCH_HAVE_AVX2_TU
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2;
#endif
#if RISKSWITCH_HAVE_NEON_TU
  return &kNeon;  // NEON is baseline on aarch64
#endif
  return &kScalar;
}

const Backend* by_name(const char* name) {
  if (name == nullptr) return best_backend();
  if (std::strcmp(name, "scalar") == 0) return &kScalar;
#if RISKSWITCH_HAVE_AVX2_TU
  if (std::strcmp(name, "avx2") == 0 && __builtin_cpu_supports("avx2") &&
      __builtin_cpu_supports("fma"))
    return &kAvx2;
#endif
#if RISKSWITCH_HAVE_NEON_TU
  if (std::strcmp(name, "neon") == 0) return &kNeon;
#endif
  return &kScalar;
}

const Backend& backend() {
  std::call_once(g_init_flag, [] {
    if (g_backend == nullptr) g_backend = by_name(std::getenv("RISKSWITCH_SIMD"));
  });
  return *g_backend;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) { return backend().dot(a, b, n); }

double dot_rev(const double* a, const double* b, std::size_t n) {
  return backend().dot_rev(a, b, n);
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
  return backend().max_abs_diff(a, b, n);
}

double sum(const double* a, std::size_t n) { return backend().sum(a, n); }

const char* active_backend() { return backend().name; }

void force_backend(const char* name) {
  backend();  // ensure one-time init already ran
  g_backend = by_name(name);
}

}  // namespace riskswitch::kernels
