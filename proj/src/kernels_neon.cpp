// NEON kernel variants for aarch64, where 128-bit SIMD is baseline.
// Mirrors the scalar reference loop for loop; two lanes per vector.

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "riskswitch/kernels.hpp"

namespace riskswitch::kernels::detail {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(acc0) + vaddvq_f64(acc1);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot_rev_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t va = vld1q_f64(a + i);
    float64x2_t vb = vld1q_f64(b + n - 2 - i);
    acc = vfmaq_f64(acc, va, vextq_f64(vb, vb, 1));
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[n - 1 - i];
  return s;
}

double max_abs_diff_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t m = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t d = vabdq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    m = vmaxq_f64(m, d);
  }
  double r = vmaxvq_f64(m);
  for (; i < n; ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > r) r = d;
  }
  return r;
}

namespace {

double sum_block_neon(const double* a, std::size_t n) {
  if (n <= 64) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t half = (n / 2 + 63) & ~std::size_t{63};
  if (half >= n) half = n / 2;
  return sum_block_neon(a, half) + sum_block_neon(a + half, n - half);
}

}  // namespace

double sum_neon(const double* a, std::size_t n) { return sum_block_neon(a, n); }

}  // namespace riskswitch::kernels::detail
