/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/kernels.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace vlrep {
namespace {

using kernels::Isa;

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(rng, -1.0, 1.0);
    return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol * (1.0 + std::fabs(a[i]))) << "at " << i;
}

class KernelEquivalence : public ::testing::Test {
  protected:
    void SetUp() override {
        if (!kernels::cpu_supports(Isa::avx2)) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
        simd_ = kernels::avx2_table();
        ref_ = &kernels::scalar_table();
    }
    const kernels::KernelTable* simd_ = nullptr;
    const kernels::KernelTable* ref_ = nullptr;
};

TEST_F(KernelEquivalence, GemmMatchesScalarAcrossEdgeShapes) {
    Rng rng(7);
    for (std::size_t m : {1u, 3u, 4u, 5u, 9u, 17u})
        for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 13u, 32u})
            for (std::size_t k : {1u, 2u, 27u, 64u})
                for (bool acc : {false, true}) {
                    const auto a = rand_vec(rng, m * k), b = rand_vec(rng, k * n), c0 = rand_vec(rng, m * n);
                    auto c_ref = c0, c_simd = c0;
                    ref_->gemm(m, n, k, a.data(), b.data(), c_ref.data(), acc);
                    simd_->gemm(m, n, k, a.data(), b.data(), c_simd.data(), acc);
                    expect_close(c_ref, c_simd, 1e-12);
                }
}

TEST_F(KernelEquivalence, ReductionsMatchScalar) {
    Rng rng(11);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 31u, 100u}) {
        const auto x = rand_vec(rng, n), y = rand_vec(rng, n);
        EXPECT_NEAR(ref_->dot(x.data(), y.data(), n), simd_->dot(x.data(), y.data(), n), 1e-12);
        EXPECT_NEAR(ref_->sq_dist(x.data(), y.data(), n), simd_->sq_dist(x.data(), y.data(), n), 1e-12);
        EXPECT_NEAR(ref_->abs_sum(x.data(), n), simd_->abs_sum(x.data(), n), 1e-12);
    }
}

TEST_F(KernelEquivalence, AxpyAndAdamMatchScalar) {
    Rng rng(13);
    for (std::size_t n : {1u, 4u, 7u, 33u}) {
        const auto x = rand_vec(rng, n);
        auto y1 = rand_vec(rng, n);
        auto y2 = y1;
        ref_->axpy(0.37, x.data(), y1.data(), n);
        simd_->axpy(0.37, x.data(), y2.data(), n);
        expect_close(y1, y2, 1e-14);

        auto th1 = rand_vec(rng, n), m1 = std::vector<double>(n, 0.0), v1 = std::vector<double>(n, 0.0);
        auto th2 = th1, m2 = m1, v2 = v1;
        for (int t = 1; t <= 5; ++t) {
            const auto g = rand_vec(rng, n);
            const double b1 = 1.0 - std::pow(0.9, t), b2 = 1.0 - std::pow(0.999, t);
            ref_->adam(th1.data(), g.data(), m1.data(), v1.data(), n, 0.9, 0.999, 1e-8, 1e-3, b1, b2);
            simd_->adam(th2.data(), g.data(), m2.data(), v2.data(), n, 0.9, 0.999, 1e-8, 1e-3, b1, b2);
        }
        expect_close(th1, th2, 1e-13);
        expect_close(m1, m2, 1e-13);
        expect_close(v1, v2, 1e-13);
    }
}

TEST(KernelDispatch, SelectScalarAlwaysWorks) {
    const Isa before = kernels::active().isa;
    EXPECT_TRUE(kernels::select(Isa::scalar));
    EXPECT_EQ(kernels::active().isa, Isa::scalar);
    kernels::select(before);
    EXPECT_EQ(kernels::active().isa, before);
}

TEST(KernelDispatch, TransposedGemmVariants) {
    Rng rng(5);
    const std::size_t m = 5, n = 6, k = 7;
    const auto a = rand_vec(rng, k * m), b = rand_vec(rng, k * n);
    std::vector<double> c(m * n);
    kernels::gemm_tn(m, n, k, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            EXPECT_NEAR(c[i * n + j], s, 1e-12);
        }
    const auto bt = rand_vec(rng, n * k), a2 = rand_vec(rng, m * k);
    kernels::gemm_nt(m, n, k, a2.data(), bt.data(), c.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a2[i * k + p] * bt[j * k + p];
            EXPECT_NEAR(c[i * n + j], s, 1e-12);
        }
}

} // namespace
} // namespace vlrep
