#include "toolforge/kernels.hpp"

#include <immintrin.h>

namespace toolforge::kernels::avx2 {

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d va = _mm256_loadu_pd(a + i);
        __m256d vb = _mm256_loadu_pd(b + i);
        // mul then add, never fused: keeps rounding identical to scalar::dot
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
    }
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    __m128d pair = _mm_add_pd(lo, hi);            // (l0 + l2, l1 + l3)
    __m128d swapped = _mm_unpackhi_pd(pair, pair);
    double sum = _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

double squared_norm(const double* a, std::size_t n) {
    return dot(a, a, n);
}

} // namespace toolforge::kernels::avx2
