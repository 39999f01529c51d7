/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

namespace vlrep::kernels {

#ifndef VLREP_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool cpu_supports(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
        return avx2_table() != nullptr && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

Isa best_available() { return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

namespace {

const KernelTable* table_for(Isa isa) { return isa == Isa::avx2 ? avx2_table() : &scalar_table(); }

const KernelTable* initial_table() {
    Isa isa = best_available();
    if (const char* env = std::getenv("VLREP_ISA")) {
        const std::string want(env);
        if (want == "scalar") isa = Isa::scalar;
        else if (want == "avx2" && cpu_supports(Isa::avx2)) isa = Isa::avx2;
    }
    return table_for(isa);
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

thread_local std::vector<double> transpose_scratch;

void transpose_into(std::size_t rows, std::size_t cols, const double* src, std::vector<double>& dst) {
    dst.resize(rows * cols);
    constexpr std::size_t tile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += tile)
        for (std::size_t c0 = 0; c0 < cols; c0 += tile)
            for (std::size_t r = r0; r < std::min(rows, r0 + tile); ++r)
                for (std::size_t c = c0; c < std::min(cols, c0 + tile); ++c) dst[c * rows + r] = src[r * cols + c];
}

} // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(Isa isa) {
    if (!cpu_supports(isa)) return false;
    current().store(table_for(isa), std::memory_order_relaxed);
    return true;
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    transpose_into(k, m, a, transpose_scratch);
    active().gemm(m, n, k, transpose_scratch.data(), b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    transpose_into(n, k, b, transpose_scratch);
    active().gemm(m, n, k, a, transpose_scratch.data(), c, accumulate);
}

} // namespace vlrep::kernels
