/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "test_util.hpp"

#include "vlrep/error.hpp"
#include "vlrep/probe.hpp"
#include "vlrep/pretrain.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace vlrep {
namespace {

ModelConfig tiny_model() {
    ModelConfig m = desk_model();
    m.encoder.input_size = 16;
    m.encoder.channel_widths = {4, 4};
    m.encoder.embedding_dim = 6;
    m.sentence.language_dim = 4;
    m.head.hidden_widths = {8};
    return m;
}

ClipDataset tiny_clips(std::size_t n, std::size_t frames = 6) {
    DatasetConfig d;
    d.n_clips = n;
    d.frames = frames;
    d.render_size = 16;
    d.split = Split::heldout;
    return generate_synthetic_dataset(d);
}

TEST(TemporalOrdering, IndexOracleIsPerfect) {
    std::vector<Tensor> emb;
    for (int c = 0; c < 3; ++c) {
        Tensor z({20, 1});
        for (std::size_t t = 0; t < 20; ++t) z[t] = static_cast<double>(t);
        emb.push_back(z);
    }
    Rng rng(1);
    EXPECT_EQ(temporal_ordering_accuracy(emb, 2000, rng), 1.0);
}

TEST(TemporalOrdering, ConstantEmbeddingCountsTiesAsFailures) {
    const std::vector<Tensor> emb{Tensor({10, 3}, 0.5)};
    Rng rng(2);
    EXPECT_EQ(temporal_ordering_accuracy(emb, 500, rng), 0.0);
}

TEST(TemporalOrdering, RandomEmbeddingIsChance) {
    Rng gen(3);
    std::vector<Tensor> emb;
    for (int c = 0; c < 20; ++c) emb.push_back(testing::random_tensor(gen, {30, 4}));
    Rng rng(4);
    const std::size_t n = 4000;
    const double acc = temporal_ordering_accuracy(emb, n, rng);
    EXPECT_NEAR(acc, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Retrieval, ZeroHeadScoresZero) {
    const auto m = tiny_model();
    auto p = init_params(m, 1);
    const auto clips = tiny_clips(12);
    const auto emb = embed_clips(p, m.encoder, clips);
    Rng rng(5);
    EXPECT_EQ(language_retrieval_accuracy(p, m, clips, emb, 4, rng), 0.0);
}

TEST(Retrieval, RandomHeadWithOneDistractorIsChance) {
    const auto m = tiny_model();
    auto p = init_params(m, 2, InitOptions{false});
    const auto clips = tiny_clips(400, 5);
    const auto emb = embed_clips(p, m.encoder, clips);
    Rng rng(6);
    const double acc = language_retrieval_accuracy(p, m, clips, emb, 1, rng);
    EXPECT_NEAR(acc, 0.5, 3.0 * std::sqrt(0.25 / 400.0));
}

TEST(Retrieval, SingleSentenceIsAProbeError) {
    const auto m = tiny_model();
    auto p = init_params(m, 1);
    auto clips = tiny_clips(3);
    for (auto& c : clips.clips) c.annotation = clips.clips[0].annotation;
    const auto emb = embed_clips(p, m.encoder, clips);
    Rng rng(7);
    EXPECT_THROW(language_retrieval_accuracy(p, m, clips, emb, 4, rng), ProbeError);
}

TEST(ScoreOverTime, ZeroHeadIsFlatZero) {
    const auto m = tiny_model();
    auto p = init_params(m, 1);
    const auto clips = tiny_clips(2, 9);
    const auto emb = embed_clips(p, m.encoder, clips);
    const auto curve = score_over_time(p, m, emb[0], clips.clips[0].annotation);
    ASSERT_EQ(curve.size(), 9u);
    for (double s : curve) EXPECT_EQ(s, 0.0);
}

TEST(Spearman, MatchesClosedFormWithoutTies) {
    Rng rng(8);
    for (int n = 0; n < 20; ++n) {
        const auto x = testing::random_tensor(rng, {12});
        const auto y = testing::random_tensor(rng, {12});
        // Rank by counting smaller elements, then 1 - 6 sum d^2 / (n (n^2 - 1)).
        double d2 = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
            double rx = 0, ry = 0;
            for (std::size_t j = 0; j < 12; ++j) {
                rx += x[j] < x[i];
                ry += y[j] < y[i];
            }
            d2 += (rx - ry) * (rx - ry);
        }
        EXPECT_NEAR(spearman(x.values(), y.values()), 1.0 - 6.0 * d2 / (12.0 * 143.0), 1e-12);
    }
}

TEST(Spearman, EdgeCases) {
    const std::vector<double> t{0, 1, 2, 3}, up{1, 5, 7, 100}, down{4, 3, 2, 1}, flat{2, 2, 2, 2};
    EXPECT_NEAR(spearman(t, up), 1.0, 1e-15);
    EXPECT_NEAR(spearman(t, down), -1.0, 1e-15);
    EXPECT_EQ(spearman(t, flat), 0.0);
    const std::vector<double> tied{1, 1, 2, 3};
    EXPECT_GT(spearman(t, tied), 0.9);
}

TEST(Sparsity, ZeroEmbeddings) {
    const std::vector<Tensor> z{Tensor({5, 4})};
    const auto s = sparsity_stats(z);
    EXPECT_EQ(s.mean_abs, 0.0);
    EXPECT_EQ(s.near_zero_fraction, 1.0);
    EXPECT_EQ(s.frames, 5u);
}

TEST(Sparsity, ParticipationRatioExtremes) {
    const std::vector<Tensor> dense{Tensor({1, 4}, 1.0)};
    EXPECT_NEAR(sparsity_stats(dense).participation_ratio, 1.0, 1e-15);
    const std::vector<Tensor> one_hot{Tensor({1, 4}, {0.0, 3.0, 0.0, 0.0})};
    EXPECT_NEAR(sparsity_stats(one_hot).participation_ratio, 0.25, 1e-15);
    Rng rng(9);
    const std::vector<Tensor> rnd{testing::random_tensor(rng, {50, 8})};
    const double pr = sparsity_stats(rnd).participation_ratio;
    EXPECT_GT(pr, 0.0);
    EXPECT_LE(pr, 1.0);
}

TEST(RunProbes, DeterministicAndReadOnly) {
    const auto m = tiny_model();
    auto p = init_params(m, 3, InitOptions{false});
    const auto before = p.hash();
    const auto clips = tiny_clips(10, 8);
    ProbeConfig cfg;
    cfg.n_triplets = 300;
    const auto a = run_probes(p, m, clips, cfg);
    const auto b = run_probes(p, m, clips, cfg);
    EXPECT_EQ(p.hash(), before);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_GE(a.temporal_ordering_accuracy, 0.0);
    EXPECT_LE(a.language_retrieval_accuracy, 1.0);
    EXPECT_EQ(a.score_curves.size(), 8u);
}

} // namespace
} // namespace vlrep
