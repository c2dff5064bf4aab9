#pragma once

#include <cstddef>

// Data-parallel inner loops with a scalar baseline and vectorized variants
// (AVX2 on x86-64, NEON on aarch64) behind runtime dispatch. Only arithmetic
// that vectorizes without changing math semantics lives here; transcendental
// functions stay scalar at the call sites so backends differ by rounding of
// reassociated sums only. Equivalence is pinned by tests at 1e-13 relative.

namespace riskswitch::kernels {

/// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

/// Correlation tap: sum_{l=0}^{n-1} a[l] * b[n-1-l]. This is the reduced
/// Volterra march's history product, with b the append-only history array.
double dot_rev(const double* a, const double* b, std::size_t n);

/// max_i |a[i] - b[i]|; sup-norm distance between fixed-point sweeps.
double max_abs_diff(const double* a, const double* b, std::size_t n);

/// Pairwise-tree sum. The tree shape is fixed by n alone, so the result is
/// independent of thread count and call order (Monte-Carlo reductions rely
/// on this for bitwise reproducibility).
double sum(const double* a, std::size_t n);

/// Backend currently selected by dispatch: "scalar", "avx2", or "neon".
const char* active_backend();

/// Force a backend by name for testing; unknown or unsupported names fall
/// back to "scalar". Passing nullptr restores automatic detection. Also
/// honours the RISKSWITCH_SIMD environment variable on first use.
void force_backend(const char* name);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
double dot_rev_scalar(const double* a, const double* b, std::size_t n);
double max_abs_diff_scalar(const double* a, const double* b, std::size_t n);
double sum_scalar(const double* a, std::size_t n);
#if RISKSWITCH_HAVE_AVX2_TU
double dot_avx2(const double* a, const double* b, std::size_t n);
double dot_rev_avx2(const double* a, const double* b, std::size_t n);
double max_abs_diff_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* a, std::size_t n);
#endif
#if RISKSWITCH_HAVE_NEON_TU
double dot_neon(const double* a, const double* b, std::size_t n);
double dot_rev_neon(const double* a, const double* b, std::size_t n);
double max_abs_diff_neon(const double* a, const double* b, std::size_t n);
double sum_neon(const double* a, std::size_t n);
#endif
}  // namespace detail

}  // namespace riskswitch::kernels
