/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "test_util.hpp"

#include "vlrep/error.hpp"
#include "vlrep/gradcheck.hpp"
#include "vlrep/losses.hpp"
#include "vlrep/numerics.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace vlrep {
namespace {

using Rows = std::vector<std::vector<double>>;

// Scalar reference: every score is enumerated by hand from named frame roles.
struct Oracle {
    std::vector<Tensor> w, b;  // head layers

    static double sim(const std::vector<double>& a, const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t e = 0; e < a.size(); ++e) s += (a[e] - c[e]) * (a[e] - c[e]);
        return -std::sqrt(s);
    }
    static double nll(double pos, const std::vector<double>& negs) {
        double denom = std::exp(pos);
        for (double n : negs) denom += std::exp(n);
        return -std::log(std::exp(pos) / denom);
    }
    double head(const std::vector<double>& a, const std::vector<double>& c, const std::vector<double>& l) const {
        std::vector<double> x(a);
        x.insert(x.end(), c.begin(), c.end());
        x.insert(x.end(), l.begin(), l.end());
        for (std::size_t layer = 0; layer < w.size(); ++layer) {
            const std::size_t in = w[layer].shape()[0], out = w[layer].shape()[1];
            std::vector<double> y(out);
            for (std::size_t o = 0; o < out; ++o) {
                double s = b[layer][o];
                for (std::size_t i = 0; i < in; ++i) s += x[i] * w[layer][i * out + o];
                y[o] = layer + 1 < w.size() ? std::max(0.0, s) : s;
            }
            x = std::move(y);
        }
        return x[0];
    }

    static const std::vector<double>& frame(const Rows& z, std::size_t clip, int role) { return z[clip * 5 + role]; }

    static double tcn(const Rows& z, const BatchLayout& lay, Reduce r) {
        double total = 0.0;
        for (std::size_t c = 0; c < lay.clips; ++c) {
            const auto& zi = frame(z, c, 1);
            std::vector<double> negs{sim(zi, frame(z, c, 3))};
            for (auto o : lay.cross_negatives[c]) negs.push_back(sim(zi, frame(z, o, 1)));
            total += nll(sim(zi, frame(z, c, 2)), negs);
        }
        return r == Reduce::mean ? total / static_cast<double>(lay.clips) : total;
    }

    double language(const Rows& z, const Rows& lang, const BatchLayout& lay, Reduce r) const {
        const int positive[3] = {4, 2, 3};
        const int within[3] = {0, 1, 2};
        double total = 0.0;
        for (std::size_t c = 0; c < lay.clips; ++c) {
            for (int p = 0; p < 3; ++p) {
                const double pos = head(frame(z, c, 0), frame(z, c, positive[p]), lang[c]);
                std::vector<double> negs{head(frame(z, c, 0), frame(z, c, within[p]), lang[c])};
                for (auto o : lay.cross_negatives[c])
                    negs.push_back(head(frame(z, o, 0), frame(z, o, positive[p]), lang[c]));
                total += nll(pos, negs);
            }
        }
        return r == Reduce::mean ? total / static_cast<double>(lay.clips) : total;
    }
};

Tensor to_tensor(const Rows& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({rows.size(), rows[0].size()}, flat);
}

Rows random_rows(Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
    Rows r(n, std::vector<double>(d));
    for (auto& row : r)
        for (auto& v : row) v = uniform(rng, -scale, scale);
    return r;
}

BatchLayout random_layout(Rng& rng, std::size_t clips, std::size_t n_cross) {
    BatchLayout lay{clips, std::vector<std::vector<std::uint32_t>>(clips)};
    for (std::size_t c = 0; c < clips; ++c)
        for (std::size_t k = 0; k < n_cross; ++k) {
            std::uint32_t o;
            do {
                o = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::int64_t>(clips) - 1));
            } while (o == c);
            lay.cross_negatives[c].push_back(o);
        }
    return lay;
}

ModelConfig head_model(std::size_t e, std::size_t l) {
    ModelConfig m;
    m.encoder.input_size = 8;
    m.encoder.channel_widths = {3, 3};
    m.encoder.embedding_dim = e;
    m.sentence.vocabulary = {"a", "b", "c", "d"};
    m.sentence.language_dim = l;
    m.head.hidden_widths = {5, 4};
    return m;
}

double tcn_value(const Rows& z, const BatchLayout& lay, Reduce r = Reduce::sum) {
    Tape tape;
    return time_contrastive_loss(tape.constant(to_tensor(z)), lay, r).value()[0];
}

TEST(TimeContrastive, IdenticalEmbeddingsGiveLogFivePerClip) {
    const Rows z(10, std::vector<double>{0.3, -0.2, 0.7});
    const BatchLayout lay{2, {{1, 1, 1}, {0, 0, 0}}};
    EXPECT_NEAR(tcn_value(z, lay), 2.0 * std::log(5.0), 1e-12);
    EXPECT_NEAR(tcn_value(z, lay), 3.2189, 1e-4);
    EXPECT_NEAR(tcn_value(z, lay, Reduce::mean), std::log(5.0), 1e-12);
}

TEST(TimeContrastive, HandScalarCase) {
    // Clip 0: z_i = 0, z_j = 0, z_k = 1, cross negative z_i of clip 1 = 2.
    // Clip 1 mirrors it: z_i = 2, z_j = 2, z_k = 3, cross negative 0.
    const Rows z{{0}, {0}, {0}, {1}, {0}, {9}, {2}, {2}, {3}, {9}};
    const BatchLayout lay{2, {{1}, {0}}};
    const double expected = -std::log(1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)));
    EXPECT_NEAR(expected, 0.40761, 1e-5);
    EXPECT_NEAR(tcn_value(z, lay), 2.0 * expected, 1e-12);
}

TEST(TimeContrastive, SeparationLimit) {
    Rows z(10, std::vector<double>{0.0, 0.0});
    for (std::size_t c = 0; c < 2; ++c) {
        z[c * 5 + 1] = {1000.0 * static_cast<double>(c), 0.0};
        z[c * 5 + 2] = z[c * 5 + 1];
        z[c * 5 + 3] = {1000.0 * static_cast<double>(c), 1000.0};
    }
    EXPECT_LT(tcn_value(z, BatchLayout{2, {{1}, {0}}}), 1e-8);
}

TEST(TimeContrastive, MatchesOracleOnRandomInstances) {
    Rng rng(21);
    for (int t = 0; t < 50; ++t) {
        const auto clips = static_cast<std::size_t>(uniform_int(rng, 2, 4));
        const auto n_cross = static_cast<std::size_t>(uniform_int(rng, 1, 3));
        const auto lay = random_layout(rng, clips, n_cross);
        const auto z = random_rows(rng, clips * 5, static_cast<std::size_t>(uniform_int(rng, 1, 4)), 2.0);
        const Reduce r = t % 2 ? Reduce::mean : Reduce::sum;
        EXPECT_NEAR(tcn_value(z, lay, r), Oracle::tcn(z, lay, r), 1e-9);
    }
}

TEST(TimeContrastive, PermutingClipsLeavesSumUnchanged) {
    Rng rng(22);
    const auto lay = random_layout(rng, 4, 3);
    const auto z = random_rows(rng, 20, 3);
    const std::size_t perm[4] = {2, 0, 3, 1};  // new position of each clip
    Rows zp(20);
    BatchLayout lp{4, std::vector<std::vector<std::uint32_t>>(4)};
    for (std::size_t c = 0; c < 4; ++c) {
        for (int r = 0; r < 5; ++r) zp[perm[c] * 5 + r] = z[c * 5 + r];
        for (auto o : lay.cross_negatives[c]) lp.cross_negatives[perm[c]].push_back(static_cast<std::uint32_t>(perm[o]));
    }
    EXPECT_NEAR(tcn_value(z, lay), tcn_value(zp, lp), 1e-12);
}

TEST(TimeContrastive, CloserPositiveLowersLoss) {
    Rng rng(23);
    const auto lay = random_layout(rng, 3, 2);
    auto z = random_rows(rng, 15, 3);
    double prev = tcn_value(z, lay);
    for (int s = 0; s < 5; ++s) {
        for (std::size_t e = 0; e < 3; ++e) z[2][e] = 0.5 * (z[2][e] + z[1][e]);  // clip 0: z_j toward z_i
        const double cur = tcn_value(z, lay);
        EXPECT_LT(cur, prev);
        prev = cur;
    }
}

TEST(TimeContrastive, NotScaleInvariant) {
    Rng rng(24);
    const auto lay = random_layout(rng, 2, 1);
    auto z = random_rows(rng, 10, 3);
    const double base = tcn_value(z, lay);
    for (auto& row : z)
        for (auto& v : row) v *= 3.0;
    EXPECT_GT(std::fabs(tcn_value(z, lay) - base), 1e-6);
}

TEST(TimeContrastive, SingleClipBatchIsRejected) {
    const Rows z(5, std::vector<double>{0.0});
    EXPECT_THROW(tcn_value(z, BatchLayout{1, {{}}}), BatchCompositionError);
    const Rows z2(10, std::vector<double>{0.0});
    EXPECT_THROW(tcn_value(z2, BatchLayout{2, {{0}, {0}}}), BatchCompositionError);
}

struct LanguageFixture : ::testing::Test {
    double language_value(const ModelConfig& m, ParamSet& p, const Rows& z, const Rows& lang, const BatchLayout& lay,
                          Reduce r = Reduce::sum) {
        Tape tape;
        ParamBinding bind(tape, p);
        return video_language_loss(bind, m.head, tape.constant(to_tensor(z)), tape.constant(to_tensor(lang)), lay, r)
            .value()[0];
    }
    static Oracle oracle_for(const ModelConfig& m, const ParamSet& p) {
        Oracle o;
        for (std::size_t i = 0; i <= m.head.hidden_widths.size(); ++i) {
            o.w.push_back(p.at("head/fc" + std::to_string(i) + "/w"));
            o.b.push_back(p.at("head/fc" + std::to_string(i) + "/b"));
        }
        return o;
    }
};

TEST_F(LanguageFixture, ZeroHeadGivesThreeLogFivePerClip) {
    const auto m = head_model(3, 2);
    auto p = init_params(m, 1);
    Rng rng(31);
    const auto lay = random_layout(rng, 4, 3);
    const double v = language_value(m, p, random_rows(rng, 20, 3), random_rows(rng, 4, 2), lay, Reduce::mean);
    EXPECT_NEAR(v, 3.0 * std::log(5.0), 1e-12);
}

TEST_F(LanguageFixture, SeparatedScoresVanish) {
    const std::vector<double> negs(4, -10.0);
    EXPECT_LT(contrastive_nll(10.0, negs), 1e-8);
}

TEST_F(LanguageFixture, MatchesOracleOnRandomInstances) {
    Rng rng(32);
    for (int t = 0; t < 50; ++t) {
        const auto e = static_cast<std::size_t>(uniform_int(rng, 1, 3));
        const auto l = static_cast<std::size_t>(uniform_int(rng, 1, 3));
        const auto m = head_model(e, l);
        auto p = init_params(m, static_cast<std::uint64_t>(t), InitOptions{false});
        const auto clips = static_cast<std::size_t>(uniform_int(rng, 2, 4));
        const auto lay = random_layout(rng, clips, static_cast<std::size_t>(uniform_int(rng, 1, 3)));
        const auto z = random_rows(rng, clips * 5, e, 2.0);
        const auto lang = random_rows(rng, clips, l, 2.0);
        const Reduce r = t % 2 ? Reduce::mean : Reduce::sum;
        EXPECT_NEAR(language_value(m, p, z, lang, lay, r), oracle_for(m, p).language(z, lang, lay, r), 1e-9);
    }
}

TEST_F(LanguageFixture, SingleClipBatchIsRejected) {
    const auto m = head_model(2, 2);
    auto p = init_params(m, 1);
    const Rows z(5, std::vector<double>{0.0, 0.0});
    const Rows lang(1, std::vector<double>{0.0, 0.0});
    EXPECT_THROW(language_value(m, p, z, lang, BatchLayout{1, {{}}}), BatchCompositionError);
}

double penalty(const Rows& z, const LossConfig& cfg, bool l1) {
    Tape tape;
    const BatchLayout lay{z.size() / 5, {}};
    const auto p = sparsity_penalty(tape.constant(to_tensor(z)), lay, cfg);
    return (l1 ? p.l1 : p.l2).value()[0];
}

TEST(Sparsity, Examples) {
    const LossConfig cfg;
    EXPECT_EQ(penalty(Rows(3, std::vector<double>(4, 0.0)), cfg, true), 0.0);
    EXPECT_EQ(penalty(Rows(3, std::vector<double>(4, 0.0)), cfg, false), 0.0);
    const Rows one{{1.0, -2.0}};
    EXPECT_NEAR(penalty(one, cfg, true), 3.0, 1e-15);
    EXPECT_NEAR(penalty(one, cfg, false), std::sqrt(5.0), 1e-15);
}

TEST(Sparsity, MatchesScalarLoop) {
    Rng rng(41);
    const auto z = random_rows(rng, 4, 6);
    double l1 = 0.0, l2 = 0.0;
    for (const auto& row : z) {
        double a = 0.0, s = 0.0;
        for (double v : row) {
            a += std::fabs(v);
            s += v * v;
        }
        l1 += a;
        l2 += std::sqrt(s);
    }
    LossConfig cfg;
    EXPECT_NEAR(penalty(z, cfg, true), l1, 1e-12);
    EXPECT_NEAR(penalty(z, cfg, false), l2, 1e-12);
    cfg.reduce = Reduce::mean;
    EXPECT_NEAR(penalty(z, cfg, true), l1 / 4.0, 1e-12);
}

struct TotalFixture : ::testing::Test {
    ModelConfig m = head_model(4, 4);
    std::vector<std::vector<std::uint32_t>> ann{{0, 1, 2}, {3, 1}};
    BatchLayout lay{2, {{1, 1, 1}, {0, 0, 0}}};

    LossTerms run(Tape& tape, ParamSet& p, const Tensor& images, const LossConfig& cfg) {
        ParamBinding bind(tape, p);
        return total_loss(bind, m, tape.constant(images), ann, lay, cfg);
    }
};

TEST_F(TotalFixture, BreakdownInvariant) {
    auto p = init_params(m, 2, InitOptions{false});
    Rng rng(51);
    const auto images = testing::random_tensor(rng, {10, 8, 8, 3}, 0, 1);
    LossConfig cfg;
    cfg.lambda1 = 0.7;
    cfg.lambda2 = 1.3;
    cfg.lambda3 = 0.01;
    cfg.lambda4 = 0.02;
    Tape tape;
    const auto v = run(tape, p, images, cfg).values();
    EXPECT_NEAR(v.total, 0.7 * v.tcn + 1.3 * v.language + 0.01 * v.l1 + 0.02 * v.l2, 1e-9);
    cfg.lambda3 = cfg.lambda4 = 0.0;
    Tape tape2;
    const auto w = run(tape2, p, images, cfg).values();
    EXPECT_EQ(w.total, 0.7 * w.tcn + 1.3 * w.language);
}

TEST_F(TotalFixture, MidGreyImagesWithOnlyPenaltiesGiveZero) {
    auto p = init_params(m, 2);
    LossConfig cfg;
    cfg.lambda1 = cfg.lambda2 = 0.0;
    Tape tape;
    // Inputs are centred at 0.5, so a mid-grey frame is the zero input and biases start at 0.
    EXPECT_EQ(run(tape, p, Tensor({10, 8, 8, 3}, 0.5), cfg).values().total, 0.0);
}

TEST_F(TotalFixture, InitialBatchMatchesComponentOracles) {
    auto p = init_params(m, 2);
    Rng rng(52);
    const auto images = testing::random_tensor(rng, {10, 8, 8, 3}, 0, 1);
    Tape tape;
    const auto v = run(tape, p, images, LossConfig{}).values();
    EXPECT_NEAR(v.language, 2.0 * 3.0 * std::log(5.0), 1e-12);
    const auto z = encode_batch(p, m.encoder, images);
    Rows rows(10);
    for (std::size_t n = 0; n < 10; ++n) rows[n].assign(z.row(n).begin(), z.row(n).end());
    EXPECT_NEAR(v.tcn, Oracle::tcn(rows, lay, Reduce::sum), 1e-9);
    double l1 = 0.0;
    for (const auto& r : rows)
        for (double x : r) l1 += std::fabs(x);
    EXPECT_NEAR(v.l1, l1, 1e-9);
}

TEST_F(TotalFixture, LanguageSkippedWithoutWeight) {
    auto p = init_params(m, 2, InitOptions{false});
    ParamSet grads = p.zeros_like();
    Rng rng(53);
    const auto images = testing::random_tensor(rng, {10, 8, 8, 3}, 0, 1);
    LossConfig cfg;
    cfg.lambda2 = 0.0;
    Tape tape;
    ParamBinding bind(tape, p, &grads);
    const auto terms = total_loss(bind, m, tape.constant(images), ann, lay, cfg);
    tape.backward(terms.total);
    EXPECT_EQ(terms.values().language, 0.0);
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (grads.name(i).rfind(kEncoderPrefix, 0) != 0)
            for (double g : grads.tensor(i).values()) EXPECT_EQ(g, 0.0) << grads.name(i);
}

TEST_F(TotalFixture, GradCheckAllParameters) {
    auto p = init_params(m, 4, InitOptions{false});
    Rng rng(54);
    const auto images = testing::random_tensor(rng, {10, 8, 8, 3}, 0, 1);
    LossConfig cfg;
    cfg.lambda3 = 1e-2;
    cfg.lambda4 = 1e-2;
    const auto res = grad_check(
        [&](ParamBinding& b) {
            return total_loss(b, m, b.tape().constant(images), ann, lay, cfg).total;
        },
        p, 1e-6);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "] ad=" << res.analytic
                                       << " fd=" << res.numeric;
    EXPECT_GT(res.checked, 100u);
}

} // namespace
} // namespace vlrep
