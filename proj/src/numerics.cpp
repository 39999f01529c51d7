/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/numerics.hpp"

#include "vlrep/error.hpp"
#include "vlrep/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vlrep {

double neg_l2_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionError("neg_l2_sim on lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    return -std::sqrt(kernels::sq_dist(a.data(), b.data(), a.size()));
}

double l1_norm(std::span<const double> v) { return kernels::abs_sum(v.data(), v.size()); }

double l2_norm(std::span<const double> v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

double log_sum_exp(std::span<const double> x) {
    if (x.empty()) throw ArgumentError("log_sum_exp of an empty list");
    const double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}

double contrastive_nll(double positive, std::span<const double> negatives) {
    if (negatives.empty()) throw ArgumentError("contrastive_nll needs at least one negative score");
    double mx = positive;
    for (double v : negatives) mx = std::max(mx, v);
    if (mx == positive) {
        // log1p keeps the tail positive when the positive dominates.
        double tail = 0.0;
        for (double v : negatives) tail += std::exp(v - positive);
        return std::log1p(tail);
    }
    double s = std::exp(positive - mx);
    for (double v : negatives) s += std::exp(v - mx);
    return mx + std::log(s) - positive;
}

} // namespace vlrep
