/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Differentiable primitives recorded on a Tape. All inputs of one call must
// live on the same tape.

#include "vlrep/tape.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace vlrep::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var sum(Var a);
Var mean(Var a);
/// Scalar result: sum_k weights[k] * terms[k]; every term must be a scalar.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);
/// Packs scalars into a vector of length terms.size().
Var stack(std::span<const Var> terms);
Var select(Var a, std::size_t index);
Var reshape(Var a, Shape shape);

Var relu(Var x);

/// y(N x out) = x(N x in) * w(in x out) + b(out)
Var affine(Var x, Var w, Var b);

/// NHWC convolution, square kernel. Weights are (k*k*cin x cout), ordered (ky, kx, cin).
Var conv2d(Var x, Var w, Var b, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Average over non-overlapping cells so that (N,H,W,C) becomes (N,grid,grid,C).
/// grid == 1 is global mean pooling.
Var avg_pool_grid(Var x, std::size_t grid);

enum class BatchNormMode { train, inference };

struct BatchNormState {
    Tensor* running_mean = nullptr;
    Tensor* running_var = nullptr;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Normalizes over every axis but the last. In train mode uses batch
/// statistics and, if state pointers are set, updates the running estimates.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormMode mode, const BatchNormState& state);

/// Row m of the result is the concatenation of parts[k].first.row(parts[k].second[m]).
Var gather_concat(std::span<const std::pair<Var, std::vector<std::uint32_t>>> parts);

/// s_p = -||z[a_p] - z[b_p]||. The gradient at a_p == b_p is taken as zero.
Var pair_neg_l2(Var z, std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs);

/// Negative L2 distance between two vectors of identical 1-D shape.
Var neg_l2_sim(Var a, Var b);

struct ContrastiveGroup {
    std::uint32_t positive;
    std::vector<std::uint32_t> negatives;
};

/// One value per group: -log(e^s_pos / (e^s_pos + sum_k e^s_neg_k)), stable log-sum-exp.
Var grouped_contrastive_nll(Var scores, std::span<const ContrastiveGroup> groups);

/// Scalar contrastive_nll over individually recorded scores.
Var contrastive_nll(Var positive, std::span<const Var> negatives);

enum class NormKind { l1, l2, l2_squared };
/// One norm per row. The l2 subgradient at the origin is zero.
Var row_norms(Var z, NormKind kind);
Var l1_norm(Var v);
Var l2_norm(Var v);

/// Row s = mean of table rows listed in tokens[s]. tokens[s] must be nonempty.
Var embed_mean(Var table, std::span<const std::vector<std::uint32_t>> tokens);

/// Mean over rows of the squared L2 error against a constant target.
Var mse_rows(Var pred, const Tensor& target);

} // namespace vlrep::ops
