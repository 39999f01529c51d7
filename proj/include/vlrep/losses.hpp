/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/encoder.hpp"
#include "vlrep/ops.hpp"
#include "vlrep/tape.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace vlrep {

enum class Reduce { sum, mean };

struct LossConfig {
    double lambda1 = 1.0;   // time contrastive
    double lambda2 = 1.0;   // video-language alignment
    double lambda3 = 1e-5;  // L1 on embeddings
    double lambda4 = 1e-5;  // L2 on embeddings
    std::size_t n_cross_negatives = 3;
    Reduce reduce = Reduce::sum;
    /// Use ||z||^2 instead of ||z|| for the lambda4 term.
    bool l2_squared = false;
    /// Penalize every sampled frame (initial, i, j, k, final) rather than only frame i.
    bool penalize_all_frames = true;

    void validate() const;
};

struct LossBreakdown {
    double tcn = 0.0;
    double language = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double total = 0.0;
};

/// Sampled frame roles within a clip, in time order.
enum class Role : std::uint32_t { initial = 0, i = 1, j = 2, k = 3, final = 4 };
inline constexpr std::uint32_t kRolesPerClip = 5;

/// Row layout of one batch's frame embeddings: row(b, role) = b * 5 + role.
/// cross_negatives[b] lists batch positions whose clips serve as negatives for clip b.
struct BatchLayout {
    std::size_t clips = 0;
    std::vector<std::vector<std::uint32_t>> cross_negatives;

    static std::uint32_t row(std::size_t clip, Role role) {
        return static_cast<std::uint32_t>(clip * kRolesPerClip + static_cast<std::uint32_t>(role));
    }
    void validate() const;
};

/// Per clip: contrastive_nll with positive S(z_i, z_j) and negatives
/// S(z_i, z_k) and S(z_i, z_i^c) for each cross-negative clip c.
Var time_contrastive_loss(Var embeddings, const BatchLayout& layout, Reduce reduce);

/// The three role pairs (initial, final), (initial, j), (initial, k), each with
/// the matched within-clip negative (initial, initial), (initial, i),
/// (initial, j), plus role-matched pairs from cross-negative clips scored
/// against this clip's language. Summed over pairs, reduced over clips.
Var video_language_loss(ParamBinding& bind, const AlignmentHeadConfig& head, Var embeddings, Var language,
                        const BatchLayout& layout, Reduce reduce);

struct Penalties {
    Var l1;
    Var l2;
};
/// L1 / L2 norms of the embedding rows, reduced over frames.
Penalties sparsity_penalty(Var embeddings, const BatchLayout& layout, const LossConfig& config);

struct LossTerms {
    Var tcn, language, l1, l2, total;
    LossBreakdown values() const;
};

/// Encodes every frame once and combines the components. `images` holds the
/// 5 frames of each clip in BatchLayout row order. When lambda2 == 0 the
/// alignment head and sentence encoder are not evaluated and language is 0.
LossTerms total_loss(ParamBinding& bind, const ModelConfig& model, Var images,
                     std::span<const std::vector<std::uint32_t>> annotations, const BatchLayout& layout,
                     const LossConfig& config, ops::BatchNormMode mode = ops::BatchNormMode::train);

/// Same combination over precomputed embeddings and language rows.
LossTerms combine_losses(ParamBinding& bind, const ModelConfig& model, Var embeddings, Var language,
                         const BatchLayout& layout, const LossConfig& config);

} // namespace vlrep
