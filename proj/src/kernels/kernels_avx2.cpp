/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

// Compiled with -mavx2 -mfma. Nothing here may run unless the dispatcher has
// confirmed CPU support.

#include "vlrep/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace vlrep::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4x8 register block: 8 accumulators, two B loads and four broadcasts per k.
inline void block_4x8(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
    __m256d acc[4][2];
    for (int r = 0; r < 4; ++r) {
        if (accumulate) {
            acc[r][0] = _mm256_loadu_pd(c + r * n);
            acc[r][1] = _mm256_loadu_pd(c + r * n + 4);
        } else {
            acc[r][0] = _mm256_setzero_pd();
            acc[r][1] = _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
        for (int r = 0; r < 4; ++r) {
            const __m256d av = _mm256_broadcast_sd(a + r * k + p);
            acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < 4; ++r) {
        _mm256_storeu_pd(c + r * n, acc[r][0]);
        _mm256_storeu_pd(c + r * n + 4, acc[r][1]);
    }
}

// One row, four columns.
inline void block_1x4(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
    __m256d acc = accumulate ? _mm256_loadu_pd(c) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) acc = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * n), acc);
    _mm256_storeu_pd(c, acc);
}

inline void cell_1x1(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
    double s = accumulate ? *c : 0.0;
    for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p], b[p * n], s);
    *c = s;
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
    const std::size_t m4 = m - m % 4;
    const std::size_t n8 = n - n % 8;
    auto row_tail = [&](std::size_t i, std::size_t j) {
        for (; j + 4 <= n; j += 4) block_1x4(n, k, a + i * k, b + j, c + i * n + j, accumulate);
        for (; j < n; ++j) cell_1x1(n, k, a + i * k, b + j, c + i * n + j, accumulate);
    };
    for (std::size_t i = 0; i < m4; i += 4) {
        for (std::size_t j = 0; j < n8; j += 8) block_4x8(n, k, a + i * k, b + j, c + i * n + j, accumulate);
        for (std::size_t r = 0; r < 4; ++r) row_tail(i + r, n8);
    }
    for (std::size_t i = m4; i < m; ++i) row_tail(i, 0);
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double sq_dist_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

double abs_sum_avx2(const double* x, std::size_t n) {
    const __m256d sign = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, _mm256_loadu_pd(x + i)));
    double s = hsum(acc);
    for (; i < n; ++i) s += std::fabs(x[i]);
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void adam_avx2(double* theta, const double* grad, double* m, double* v, std::size_t n, double beta1, double beta2,
               double eps, double lr, double bias1, double bias2) {
    const __m256d b1 = _mm256_set1_pd(beta1), b2 = _mm256_set1_pd(beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - beta1), omb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d ib1 = _mm256_set1_pd(bias1), ib2 = _mm256_set1_pd(bias2);
    const __m256d veps = _mm256_set1_pd(eps), vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
        const __m256d vi =
            _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(_mm256_mul_pd(omb2, g), g));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, ib1);
        const __m256d vhat = _mm256_div_pd(vi, ib2);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
        _mm256_storeu_pd(theta + i, _mm256_sub_pd(_mm256_loadu_pd(theta + i), step));
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{Isa::avx2, gemm_avx2, dot_avx2, sq_dist_avx2, abs_sum_avx2, axpy_avx2, adam_avx2};
    return &table;
}

} // namespace vlrep::kernels
