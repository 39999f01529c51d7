/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "test_util.hpp"

#include "vlrep/data.hpp"
#include "vlrep/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

namespace vlrep {
namespace {

DatasetConfig small_config(std::size_t clips = 6, std::size_t frames = 12) {
    DatasetConfig c;
    c.n_clips = clips;
    c.frames = frames;
    c.render_size = 16;
    c.seed = 3;
    return c;
}

TEST(Generator, ClipCountAndLength) {
    auto c = small_config(10, 40);
    const auto ds = generate_synthetic_dataset(c);
    ASSERT_EQ(ds.size(), 10u);
    for (const auto& clip : ds.clips) {
        EXPECT_EQ(clip.length(), 40u);
        EXPECT_EQ(clip.frames[0].height, 16u);
    }
    ds.validate();
}

TEST(Generator, SameSeedIsBitIdentical) {
    const auto a = generate_synthetic_dataset(small_config());
    const auto b = generate_synthetic_dataset(small_config());
    for (std::size_t c = 0; c < a.size(); ++c) {
        EXPECT_EQ(a.clips[c].frames, b.clips[c].frames);
        EXPECT_EQ(a.clips[c].annotation, b.clips[c].annotation);
    }
}

TEST(Generator, AnnotationMatchesFinalPosition) {
    auto cfg = small_config(60, 20);
    const auto ds = generate_synthetic_dataset(cfg);
    for (const auto& clip : ds.clips) {
        const Region r = parse_region(clip.annotation.back());
        EXPECT_EQ(r, clip.meta.region);
        EXPECT_TRUE(region_box(r).contains(clip.meta.object_goal));
        EXPECT_FALSE(region_box(r).contains(clip.meta.object_start));
        EXPECT_EQ(clip.annotation, describe(clip.meta.color, clip.meta.shape, clip.meta.region));
    }
}

TEST(Generator, FramesChangeOverTheClip) {
    const auto ds = generate_synthetic_dataset(small_config(2, 20));
    for (std::size_t t = 1; t < 20; ++t) EXPECT_NE(ds.clips[0].frames[t - 1], ds.clips[0].frames[t]) << t;
}

TEST(Generator, InvalidConfig) {
    auto c = small_config();
    c.n_clips = 1;
    EXPECT_THROW(generate_synthetic_dataset(c), ArgumentError);
    c = small_config();
    c.frames = 4;
    EXPECT_THROW(generate_synthetic_dataset(c), ArgumentError);
    c = small_config();
    c.task_family = "stack3d";
    EXPECT_THROW(generate_synthetic_dataset(c), ArgumentError);
}

TEST(Generator, HeldoutSharesVocabularyButNoSeeds) {
    auto c = small_config(30, 6);
    const auto train = generate_synthetic_dataset(c);
    c.split = Split::heldout;
    const auto held = generate_synthetic_dataset(c);
    EXPECT_EQ(train.vocabulary, held.vocabulary);
    std::set<std::uint64_t> seeds;
    for (const auto& clip : train.clips) seeds.insert(clip.meta.seed);
    for (const auto& clip : held.clips) EXPECT_FALSE(seeds.contains(clip.meta.seed));
}

TEST(Vocabulary, CoversGrammar) {
    const auto& v = task_vocabulary();
    EXPECT_EQ(v.size(), 14u);
    EXPECT_EQ(std::set<std::string>(v.begin(), v.end()).size(), v.size());
}

TEST(FrameSampling, EndpointWindowsAtHundredFrames) {
    Rng rng(1);
    double gap = 0.0;
    for (int n = 0; n < 10000; ++n) {
        const auto s = sample_frames(100, rng);
        ASSERT_LE(s.i0, 19u);
        ASSERT_GE(s.g, 80u);
        ASSERT_LE(s.g, 99u);
        ASSERT_TRUE(s.i0 < s.i && s.i < s.j && s.j < s.k && s.k <= s.g);
        gap += static_cast<double>(s.j - s.i);
    }
    EXPECT_GT(gap, 0.0);
}

TEST(FrameSampling, EndpointsCoverTheirWindows) {
    Rng rng(2);
    std::set<std::size_t> starts, ends;
    for (int n = 0; n < 5000; ++n) {
        const auto s = sample_frames(100, rng);
        starts.insert(s.i0);
        ends.insert(s.g);
    }
    EXPECT_EQ(starts.size(), 20u);
    EXPECT_EQ(ends.size(), 20u);
}

TEST(FrameSampling, MinimumLengthHasOneAssignment) {
    Rng rng(3);
    for (int n = 0; n < 100; ++n) {
        const auto s = sample_frames(5, rng);
        EXPECT_EQ(s.roles(), (std::array<std::size_t, 5>{0, 1, 2, 3, 4}));
    }
}

TEST(FrameSampling, TooShortIsDegenerate) {
    Rng rng(4);
    EXPECT_THROW(sample_frames(4, rng), DegenerateClipError);
}

TEST(Crop, IdentityIsExact) {
    Rng rng(5);
    const std::vector<Tensor> frames{testing::random_tensor(rng, {9, 9, 3}, 0, 1)};
    const auto out = apply_video_crop(frames, CropRect::full(9, 9));
    EXPECT_EQ(out[0], frames[0]);
}

TEST(Crop, ConstantFrameDownscale) {
    const std::vector<Tensor> frames{Tensor({16, 16, 3}, 0.25)};
    const auto out = apply_video_crop(frames, CropRect::full(16, 8));
    ASSERT_EQ(out[0].shape(), (Shape{8, 8, 3}));
    for (double v : out[0].values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Crop, SharedRectangleAcrossFrames) {
    Rng rng(6);
    const auto a = testing::random_tensor(rng, {12, 12, 3}, 0, 1);
    auto b = testing::random_tensor(rng, {12, 12, 3}, 0, 1);
    const CropRect crop{2.5, 1.25, 7.0, 8.0, 6};
    // Equal source pixels inside the rectangle's support give equal outputs.
    for (std::size_t y = 1; y < 11; ++y)
        for (std::size_t x = 2; x < 11; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) b[(y * 12 + x) * 3 + ch] = a[(y * 12 + x) * 3 + ch];
    const std::vector<Tensor> frames{a, b};
    const auto out = apply_video_crop(frames, crop);
    EXPECT_EQ(out[0], out[1]);
}

TEST(Crop, OutOfBoundsRejected) {
    const std::vector<Tensor> frames{Tensor({8, 8, 3})};
    EXPECT_THROW(apply_video_crop(frames, CropRect{1.0, 0.0, 8.0, 8.0, 4}), ArgumentError);
    EXPECT_THROW(apply_video_crop(frames, CropRect{-0.1, 0.0, 4.0, 4.0, 4}), ArgumentError);
    EXPECT_THROW(apply_video_crop(frames, CropRect{0.0, 0.0, 0.0, 4.0, 4}), ArgumentError);
}

TEST(Crop, SampledRectanglesRespectBounds) {
    Rng rng(7);
    for (int n = 0; n < 2000; ++n) {
        const auto c = sample_crop(64, 64, rng);
        EXPECT_NO_THROW(c.check(64, 64));
        EXPECT_GE(c.w, 32.0);
        EXPECT_GE(c.h, 32.0);
        EXPECT_GE(c.w / c.h, 0.75 - 1e-12);
        EXPECT_LE(c.w / c.h, 4.0 / 3.0 + 1e-12);
    }
}

TEST(Batch, NegativesAreOtherClips) {
    const auto ds = generate_synthetic_dataset(small_config(6, 10));
    Rng rng(8);
    for (std::size_t bsz : {2u, 4u, 6u, 9u}) {
        BatchOptions opt{bsz, 3, true, 12};
        for (int n = 0; n < 200; ++n) {
            const auto batch = sample_batch(ds, opt, rng);
            ASSERT_EQ(batch.entries.size(), bsz);
            const auto neg = batch.negative_clips();
            for (std::size_t b = 0; b < bsz; ++b) {
                ASSERT_EQ(neg[b].size(), 3u);
                for (auto c : neg[b]) ASSERT_NE(c, batch.entries[b].clip);
                ASSERT_TRUE(batch.entries[b].frames.valid(10));
            }
            if (bsz <= 6) {
                std::set<std::size_t> ids;
                for (const auto& e : batch.entries) ids.insert(e.clip);
                ASSERT_EQ(ids.size(), bsz);
            }
            batch.layout().validate();
        }
    }
}

TEST(Batch, AnchorNegativePairsAreUniform) {
    const auto ds = generate_synthetic_dataset(small_config(4, 5));
    Rng rng(9);
    BatchOptions opt{2, 1, false, 16};
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    const int draws = 10000;
    for (int n = 0; n < draws; ++n) {
        const auto batch = sample_batch(ds, opt, rng);
        const auto neg = batch.negative_clips();
        for (std::size_t b = 0; b < 2; ++b) ++counts[{batch.entries[b].clip, neg[b][0]}];
    }
    ASSERT_EQ(counts.size(), 12u);
    const double total = 2.0 * draws, p = 1.0 / 12.0;
    const double sigma = std::sqrt(total * p * (1.0 - p));
    for (const auto& [pair, c] : counts) EXPECT_LT(std::fabs(c - total * p), 3.0 * sigma);
}

TEST(Batch, SingleClipDatasetRejected) {
    auto ds = generate_synthetic_dataset(small_config(2, 5));
    ds.clips.pop_back();
    Rng rng(10);
    EXPECT_THROW(sample_batch(ds, BatchOptions{}, rng), BatchCompositionError);
}

TEST(Batch, SeedsDetermineEverything) {
    const auto ds = generate_synthetic_dataset(small_config(6, 10));
    Rng r1(11), r2(11);
    const BatchOptions opt{4, 3, true, 12};
    for (int n = 0; n < 20; ++n) {
        const auto a = sample_batch(ds, opt, r1);
        const auto b = sample_batch(ds, opt, r2);
        EXPECT_EQ(assemble_images(ds, a), assemble_images(ds, b));
        EXPECT_EQ(a.negatives, b.negatives);
    }
}

TEST(Batch, AssembledRowsUseOneCropPerClip) {
    const auto ds = generate_synthetic_dataset(small_config(4, 10));
    Rng rng(12);
    const auto batch = sample_batch(ds, BatchOptions{3, 2, true, 8}, rng);
    const auto images = assemble_images(ds, batch);
    ASSERT_EQ(images.shape(), (Shape{15, 8, 8, 3}));
    for (std::size_t b = 0; b < 3; ++b) {
        const auto& e = batch.entries[b];
        const auto roles = e.frames.roles();
        for (std::uint32_t r = 0; r < 5; ++r) {
            const std::vector<Tensor> src{ds.clips[e.clip].frames[roles[r]].to_tensor()};
            const auto want = apply_video_crop(src, e.crop)[0];
            const auto got = images.row(BatchLayout::row(b, static_cast<Role>(r)));
            for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-15);
        }
    }
}

TEST(DatasetIo, RoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "vlrep_data_io";
    std::filesystem::remove_all(dir);
    const auto ds = generate_synthetic_dataset(small_config(3, 6));
    save_dataset(ds, dir);
    const auto back = load_dataset(dir);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.vocabulary, ds.vocabulary);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(back.clips[c].frames, ds.clips[c].frames);
        EXPECT_EQ(back.clips[c].annotation, ds.clips[c].annotation);
        EXPECT_EQ(back.clips[c].meta.seed, ds.clips[c].meta.seed);
        EXPECT_EQ(back.clips[c].meta.object_goal, ds.clips[c].meta.object_goal);
    }
    std::filesystem::resize_file(dir / "clip_00001.frames", 100);
    EXPECT_THROW(load_dataset(dir), FormatError);
    std::filesystem::remove_all(dir);
}

TEST(DatasetIo, VersionChecked) {
    const auto dir = std::filesystem::temp_directory_path() / "vlrep_data_version";
    std::filesystem::remove_all(dir);
    save_dataset(generate_synthetic_dataset(small_config(2, 5)), dir);
    auto index = KvConfig::load(dir / "index.kv");
    index.set("version", static_cast<std::int64_t>(kDatasetFormatVersion + 1));
    index.save(dir / "index.kv");
    EXPECT_THROW(load_dataset(dir), VersionError);
    std::filesystem::remove_all(dir);
}

} // namespace
} // namespace vlrep
