// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma in this TU only;
// callers reach these through the dispatch table after a cpuid check.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "riskswitch/kernels.hpp"

namespace riskswitch::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// Lane order 3,2,1,0: turns a descending memory window into ascending lanes.
inline __m256d reverse(__m256d v) { return _mm256_permute4x64_pd(v, _MM_SHUFFLE(0, 1, 2, 3)); }

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot_rev_avx2(const double* a, const double* b, std::size_t n) {
  // b is read back to front: lane l of chunk i holds b[n-1-(i+l)].
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    __m256d vb = reverse(_mm256_loadu_pd(b + n - 4 - i));
    acc = _mm256_fmadd_pd(va, vb, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[n - 1 - i];
  return s;
}

double max_abs_diff_avx2(const double* a, const double* b, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    m = _mm256_max_pd(m, _mm256_andnot_pd(signmask, d));
  }
  double r = hmax(m);
  for (; i < n; ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > r) r = d;
  }
  return r;
}

namespace {

double sum_block_avx2(const double* a, std::size_t n) {
  if (n <= 64) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t half = (n / 2 + 63) & ~std::size_t{63};
  if (half >= n) half = n / 2;
  return sum_block_avx2(a, half) + sum_block_avx2(a + half, n - half);
}

}  // namespace

double sum_avx2(const double* a, std::size_t n) { return sum_block_avx2(a, n); }

}  // namespace riskswitch::kernels::detail
