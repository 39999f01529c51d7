/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Representation diagnostics on held-out clips.

#include "vlrep/data.hpp"
#include "vlrep/encoder.hpp"
#include "vlrep/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace vlrep {

/// Full-frame embeddings of every clip, one (T, E) tensor per clip.
std::vector<Tensor> embed_clips(ParamSet& params, const EncoderConfig& config, const ClipDataset& clips);

/// Fraction of random triplets i < j < k (uniform clip, uniform triplet)
/// where z_j is strictly closer to z_i than z_k is.
double temporal_ordering_accuracy(std::span<const Tensor> clip_embeddings, std::size_t n_triplets, Rng& rng);

/// Per clip: the alignment score of (first frame, last frame, true sentence)
/// must strictly exceed the scores of `distractors` different sentences drawn
/// from the clip set. Ties count as failures.
double language_retrieval_accuracy(ParamSet& params, const ModelConfig& model, const ClipDataset& clips,
                                   std::span<const Tensor> clip_embeddings, std::size_t distractors, Rng& rng);

/// G(z_0, z_t, l) for t = 0 .. T-1.
std::vector<double> score_over_time(ParamSet& params, const ModelConfig& model, const Tensor& clip_embedding,
                                    std::span<const std::string> annotation);

/// Rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct SparsityStats {
    double mean_abs = 0.0;
    /// Fraction of coordinates with |z_d| < 1e-3.
    double near_zero_fraction = 0.0;
    /// Mean over nonzero frames of (sum |z|)^2 / (E sum z^2); 0 when every frame is zero.
    double participation_ratio = 0.0;
    std::size_t frames = 0;
};

/// Rows of each tensor are frames.
SparsityStats sparsity_stats(std::span<const Tensor> embeddings);

struct ProbeConfig {
    std::size_t n_triplets = 4000;
    std::size_t distractors = 4;
    std::uint64_t seed = 0;
    /// Score curves kept in the report (all clips contribute to the Spearman mean).
    std::size_t curves_kept = 8;
};

struct ProbeReport {
    double temporal_ordering_accuracy = 0.0;
    double language_retrieval_accuracy = 0.0;
    std::size_t n_triplets = 0;
    std::size_t n_clips = 0;
    std::size_t distractors = 0;
    double mean_spearman = 0.0;
    std::vector<std::vector<double>> score_curves;
    SparsityStats sparsity;

    std::string to_json() const;
};

ProbeReport run_probes(ParamSet& params, const ModelConfig& model, const ClipDataset& heldout, const ProbeConfig& config);

} // namespace vlrep
