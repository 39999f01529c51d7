/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <span>

namespace vlrep {

/// -sqrt(sum (a-b)^2). Throws DimensionError on length mismatch.
double neg_l2_sim(std::span<const double> a, std::span<const double> b);
double l1_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);

/// log(sum exp(x)) with the max subtracted first.
double log_sum_exp(std::span<const double> x);

/// -log(e^pos / (e^pos + sum_k e^neg_k)). Throws ArgumentError when `negatives` is empty.
double contrastive_nll(double positive, std::span<const double> negatives);

} // namespace vlrep
