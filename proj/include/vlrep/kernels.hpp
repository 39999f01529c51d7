/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and,
// when compiled in and supported by the CPU, an AVX2/FMA variant. The active
// variant is picked once at startup and can be overridden (tests do this to
// check equivalence).

#include <cstddef>
#include <string_view>

namespace vlrep::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
    Isa isa;
    /// C(m x n) = A(m x k) * B(k x n), all row-major; accumulates into C when `accumulate`.
    void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                 bool accumulate);
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sq_dist)(const double* x, const double* y, std::size_t n);
    double (*abs_sum)(const double* x, std::size_t n);
    /// y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// theta -= lr * mhat / (sqrt(vhat) + eps) with moment updates, see adam_update below.
    void (*adam)(double* theta, const double* grad, double* m, double* v, std::size_t n, double beta1, double beta2,
                 double eps, double lr, double bias1, double bias2);
};

const KernelTable& scalar_table();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);
Isa best_available();

/// Kernel table currently in use. Defaults to best_available(), or to the
/// value of the VLREP_ISA environment variable ("scalar" / "avx2").
const KernelTable& active();
/// Select a variant explicitly. Returns false if it is unavailable.
bool select(Isa isa);

inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                 bool accumulate = false) {
    active().gemm(m, n, k, a, b, c, accumulate);
}
/// C(m x n) (+)= A^T * B with A stored (k x m).
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);
/// C(m x n) (+)= A * B^T with B stored (n x k).
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate = false);

inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline double sq_dist(const double* x, const double* y, std::size_t n) { return active().sq_dist(x, y, n); }
inline double abs_sum(const double* x, std::size_t n) { return active().abs_sum(x, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }

/// One bias-corrected Adam update over a contiguous parameter block.
/// bias1 = 1 - beta1^t, bias2 = 1 - beta2^t.
inline void adam_update(double* theta, const double* grad, double* m, double* v, std::size_t n, double beta1,
                        double beta2, double eps, double lr, double bias1, double bias2) {
    active().adam(theta, grad, m, v, n, beta1, beta2, eps, lr, bias1, bias2);
}

} // namespace vlrep::kernels
