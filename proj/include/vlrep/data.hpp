/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Procedural video-language clips, frame/batch sampling and video-level crops.

#include "vlrep/kvconfig.hpp"
#include "vlrep/losses.hpp"
#include "vlrep/render.hpp"
#include "vlrep/rng.hpp"
#include "vlrep/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vlrep {

enum class Split { train, heldout };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ClipMeta {
    ShapeKind shape = ShapeKind::square;
    ColorName color = ColorName::red;
    Region region = Region::top;
    Vec2 object_start;
    Vec2 object_goal;
    Vec2 agent_start;
    std::uint64_t seed = 0;
};

struct VideoClip {
    std::vector<Image> frames;
    std::vector<std::string> annotation;
    ClipMeta meta;

    std::size_t length() const { return frames.size(); }
};

/// The 14-token vocabulary of the "move the <color> <shape> to the <region>" grammar.
const std::vector<std::string>& task_vocabulary();
std::vector<std::string> describe(ColorName color, ShapeKind shape, Region region);

struct ClipDataset {
    std::vector<VideoClip> clips;
    std::vector<std::string> vocabulary;
    Split split = Split::train;
    std::uint64_t seed = 0;
    std::size_t render_size = 0;

    std::size_t size() const { return clips.size(); }
    /// Annotation of clip `c` as vocabulary ids.
    std::vector<std::uint32_t> token_ids(std::size_t c) const;
    void validate() const;
};

struct DatasetConfig {
    std::size_t n_clips = 200;
    std::size_t frames = 40;
    std::size_t render_size = 64;
    std::uint64_t seed = 1;
    std::string task_family = "push2d";
    Split split = Split::train;
    /// Strength of the independent per-frame lighting change; 0 disables it.
    double photometric_jitter = 0.1;

    void validate() const;
    void write(KvConfig& kv) const;
    static DatasetConfig read(const KvConfig& kv);
};

/// Seed of clip `index`; the heldout split draws from a separate stream.
std::uint64_t clip_seed(std::uint64_t dataset_seed, Split split, std::size_t index);

/// Scripted episode: the agent approaches the shape, pushes it into the named
/// region, then backs away from it.
VideoClip generate_clip(std::uint64_t seed, std::size_t frames, std::size_t render_size, double jitter = 0.0);

/// Per-frame lighting change: gain in [1 - s, 1 + s] and per-channel offset in
/// [-s/2, s/2] (as a fraction of full scale).
void apply_photometric_jitter(Image& frame, double strength, std::uint64_t seed);
ClipDataset generate_synthetic_dataset(const DatasetConfig& config);

struct FrameSample {
    std::size_t i0 = 0, i = 0, j = 0, k = 0, g = 0;

    /// Indices in role order: initial, i, j, k, final.
    std::array<std::size_t, kRolesPerClip> roles() const { return {i0, i, j, k, g}; }
    bool valid(std::size_t length) const;
};

/// i0 from the first 20% of the clip, g from the last 20%, (i, j, k) drawn
/// without replacement strictly between them and sorted.
FrameSample sample_frames(std::size_t length, Rng& rng);

/// Source-pixel rectangle resized to out_size x out_size.
struct CropRect {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
    std::size_t out_size = 0;

    static CropRect full(std::size_t source, std::size_t out_size);
    void check(std::size_t src_h, std::size_t src_w) const;
    friend bool operator==(const CropRect&, const CropRect&) = default;
};

/// Side lengths in [0.5, 1] of the source with aspect ratio in [3/4, 4/3].
CropRect sample_crop(std::size_t source, std::size_t out_size, Rng& rng);

/// Bilinear resample of the same rectangle from every frame; inputs are (H, W, 3).
std::vector<Tensor> apply_video_crop(std::span<const Tensor> frames, const CropRect& crop);
/// Writes the crop of an 8-bit frame into `out` (out_size^2 * 3 values in [0, 1]).
void crop_into(const Image& frame, const CropRect& crop, double* out);

struct BatchEntry {
    std::size_t clip = 0;
    FrameSample frames;
    CropRect crop;
};

struct BatchSample {
    std::vector<BatchEntry> entries;
    /// Per batch position, the batch positions whose clips act as negatives.
    std::vector<std::vector<std::uint32_t>> negatives;

    BatchLayout layout() const { return {entries.size(), negatives}; }
    /// Clip id of each negative, aligned with `negatives`.
    std::vector<std::vector<std::size_t>> negative_clips() const;
};

struct BatchOptions {
    std::size_t batch_size = 8;
    std::size_t n_cross = 3;
    bool augment = true;
    std::size_t input_size = 64;
};

BatchSample sample_batch(const ClipDataset& dataset, const BatchOptions& options, Rng& rng);

/// Frame tensor [5B, S, S, 3] in BatchLayout row order.
Tensor assemble_images(const ClipDataset& dataset, const BatchSample& batch);
std::vector<std::vector<std::uint32_t>> assemble_annotations(const ClipDataset& dataset, const BatchSample& batch);

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

/// Directory layout: index.kv plus clip_NNNNN.frames (raw uint8 T*H*W*3) and
/// clip_NNNNN.meta (key = value) per clip.
void save_dataset(const ClipDataset& dataset, const std::filesystem::path& dir);
ClipDataset load_dataset(const std::filesystem::path& dir);

} // namespace vlrep
