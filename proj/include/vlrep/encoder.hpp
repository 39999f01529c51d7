/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/kvconfig.hpp"
#include "vlrep/ops.hpp"
#include "vlrep/params.hpp"
#include "vlrep/tape.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vlrep {

enum class Normalization { none, batchnorm };

/// Strided conv image encoder: each stage is a 3x3 stride-2 convolution
/// (+ optional batch norm) + ReLU, followed by grid mean pooling and an
/// affine projection to the embedding.
struct EncoderConfig {
    std::size_t input_size = 64;
    std::vector<std::size_t> channel_widths{16, 32, 32, 32};
    std::size_t embedding_dim = 64;
    Normalization normalization = Normalization::none;
    /// Pooled output is pool_grid x pool_grid cells; 1 means global mean pooling.
    std::size_t pool_grid = 2;

    void validate() const;
    std::size_t final_spatial() const;
    std::size_t pooled_features() const;
};

/// Bag-of-words sentence encoder: the mean of learned per-token rows.
struct SentenceEncoderConfig {
    std::vector<std::string> vocabulary;
    std::size_t language_dim = 32;

    void validate() const;
    /// Throws VocabularyError for unknown tokens, ArgumentError for an empty list.
    std::vector<std::uint32_t> token_ids(std::span<const std::string> tokens) const;
};

/// MLP scoring [z0, zt, l] -> scalar; hidden layers use ReLU.
struct AlignmentHeadConfig {
    std::vector<std::size_t> hidden_widths{128, 128, 128, 128};

    static std::size_t input_dim(std::size_t embedding_dim, std::size_t language_dim) {
        return 2 * embedding_dim + language_dim;
    }
};

struct ModelConfig {
    EncoderConfig encoder;
    SentenceEncoderConfig sentence;
    AlignmentHeadConfig head;

    void validate() const;
    void write(KvConfig& kv) const;
    static ModelConfig read(const KvConfig& kv);
};

struct InitOptions {
    /// Zero weights and bias in the head's output layer, so every score is 0 at init.
    bool zero_final_head = true;
};

/// Weights ~ N(0, 2/fan_in) for layers followed by ReLU and N(0, 1/fan_in)
/// for the embedding projection and the head output; biases zero; token rows
/// ~ N(0, 1). Deterministic in `seed`.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed, InitOptions options = {});

inline constexpr const char* kEncoderPrefix = "encoder/";
inline constexpr const char* kSentencePrefix = "sentence/";
inline constexpr const char* kHeadPrefix = "head/";

/// images: (N, S, S, 3) with values in [0, 1]. Returns (N, E).
Var encode_images(ParamBinding& bind, const EncoderConfig& config, Var images,
                  ops::BatchNormMode mode = ops::BatchNormMode::inference);

/// No-gradient batched forward pass in inference mode, chunked to bound memory.
Tensor encode_batch(ParamSet& params, const EncoderConfig& config, const Tensor& images, std::size_t chunk = 64);

/// image: (S, S, 3). Returns (E).
Tensor encode_image(ParamSet& params, const EncoderConfig& config, const Tensor& image);

/// Returns (S, L).
Var encode_sentences(ParamBinding& bind, const SentenceEncoderConfig& config,
                     std::span<const std::vector<std::uint32_t>> tokens);
Tensor encode_sentence(ParamSet& params, const SentenceEncoderConfig& config, std::span<const std::string> tokens);

/// rows: (M, 2E+L) laid out as [z0, zt, l]. Returns (M).
Var alignment_scores(ParamBinding& bind, const AlignmentHeadConfig& config, Var rows);

double alignment_score(ParamSet& params, const ModelConfig& config, std::span<const double> z0,
                       std::span<const double> zt, std::span<const double> lang);

} // namespace vlrep
