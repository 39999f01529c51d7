/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/error.hpp"
#include "vlrep/gradcheck.hpp"
#include "vlrep/numerics.hpp"
#include "vlrep/ops.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace vlrep {
namespace {

using testing::random_tensor;

TEST(NegL2Sim, Examples) {
    const double a[] = {1, 2, 3}, b[] = {1, 2, 3};
    EXPECT_EQ(neg_l2_sim(a, b), 0.0);
    const double c[] = {0, 0}, d[] = {3, 4};
    EXPECT_DOUBLE_EQ(neg_l2_sim(c, d), -5.0);
}

TEST(NegL2Sim, MatchesScalarLoop) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = random_tensor(rng, {8}), b = random_tensor(rng, {8});
        double s = 0.0;
        for (int i = 0; i < 8; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        EXPECT_NEAR(neg_l2_sim(a.span(), b.span()), -std::sqrt(s), 1e-12);
        EXPECT_LE(neg_l2_sim(a.span(), b.span()), 0.0);
    }
}

TEST(NegL2Sim, ShapeMismatchIsDimensionError) {
    const double a[] = {1, 2}, b[] = {1, 2, 3};
    EXPECT_THROW(neg_l2_sim(a, b), DimensionError);
    Tape tape;
    EXPECT_THROW(ops::neg_l2_sim(tape.leaf(Tensor::vector({1, 2})), tape.leaf(Tensor::vector({1, 2, 3}))),
                 DimensionError);
}

TEST(Norms, Examples) {
    const double z3[] = {0, 0, 0}, v[] = {1, -2, 3}, z2[] = {0, 0}, p[] = {3, 4};
    EXPECT_EQ(l1_norm(z3), 0.0);
    EXPECT_EQ(l1_norm(v), 6.0);
    EXPECT_EQ(l2_norm(z2), 0.0);
    EXPECT_DOUBLE_EQ(l2_norm(p), 5.0);
}

TEST(Norms, MatchScalarLoop) {
    Rng rng(2);
    const Tensor v = random_tensor(rng, {16});
    double s1 = 0.0, s2 = 0.0;
    for (double x : v.values()) {
        s1 += std::fabs(x);
        s2 += x * x;
    }
    EXPECT_NEAR(l1_norm(v.span()), s1, 1e-12);
    EXPECT_NEAR(l2_norm(v.span()), std::sqrt(s2), 1e-12);
}

TEST(Norms, L2SubgradientAtOriginIsZero) {
    Tape tape;
    Var v = tape.leaf(Tensor({3}));
    Var n = ops::l2_norm(v);
    tape.backward(n);
    EXPECT_EQ(n.value()[0], 0.0);
    const Tensor g = tape.grad(v);
    for (double x : g.values()) EXPECT_EQ(x, 0.0);
}

TEST(ContrastiveNll, Examples) {
    const double zeros[] = {0, 0};
    EXPECT_NEAR(contrastive_nll(0.0, zeros), std::log(3.0), 1e-12);
    EXPECT_NEAR(contrastive_nll(1.0, zeros), std::log(std::exp(1.0) + 2.0) - 1.0, 1e-12);
    EXPECT_NEAR(contrastive_nll(1.0, zeros), 0.5514, 1e-4);
    const double sep = contrastive_nll(50.0, zeros);
    EXPECT_LT(sep, 1e-9);
    EXPECT_GT(sep, 0.0);
}

TEST(ContrastiveNll, EmptyNegativesIsArgumentError) {
    EXPECT_THROW(contrastive_nll(0.0, std::span<const double>{}), ArgumentError);
}

TEST(ContrastiveNll, UniformScoresGiveLogOnePlusK) {
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
        const std::vector<double> negs(k, 0.7);
        EXPECT_NEAR(contrastive_nll(0.7, negs), std::log(1.0 + static_cast<double>(k)), 1e-9);
    }
}

TEST(ContrastiveNll, StableForLargeMagnitudes) {
    const double negs[] = {1000.0, -1000.0};
    const double v = contrastive_nll(999.0, negs);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, std::log1p(std::exp(1.0)), 1e-9);
}

TEST(ContrastiveNll, MonotoneInPositiveAndNegatives) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const double pos = uniform(rng, -3, 3);
        std::vector<double> negs{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)};
        const double base = contrastive_nll(pos, negs);
        EXPECT_LT(contrastive_nll(pos + 1e-3, negs), base);
        for (std::size_t k = 0; k < negs.size(); ++k) {
            auto up = negs;
            up[k] += 1e-3;
            EXPECT_GT(contrastive_nll(pos, up), base);
        }
    }
}

TEST(ContrastiveNll, TapeVersionAgreesWithPureFunction) {
    Tape tape;
    Var pos = tape.leaf(Tensor::scalar(0.3));
    const Var negs[] = {tape.leaf(Tensor::scalar(-0.2)), tape.leaf(Tensor::scalar(1.1))};
    Var v = ops::contrastive_nll(pos, negs);
    const double ref[] = {-0.2, 1.1};
    EXPECT_NEAR(v.value()[0], contrastive_nll(0.3, ref), 1e-15);
}

TEST(GradCheck, SumOfSquares) {
    ParamSet ps;
    ps.add("x", Tensor::vector({1.0, 2.0}));
    ParamSet grads = ps.zeros_like();
    {
        Tape tape;
        ParamBinding bind(tape, ps, &grads);
        Var x = bind("x");
        Var f = ops::sum(ops::row_norms(ops::reshape(x, {1, 2}), ops::NormKind::l2_squared));
        tape.backward(f);
    }
    EXPECT_DOUBLE_EQ(grads.at("x")[0], 2.0);
    EXPECT_DOUBLE_EQ(grads.at("x")[1], 4.0);
    const auto res = grad_check(
        [](ParamBinding& b) {
            return ops::sum(ops::row_norms(ops::reshape(b("x"), {1, 2}), ops::NormKind::l2_squared));
        },
        ps, 1e-4);
    EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
    ParamSet ps;
    ps.add("x", Tensor::vector({1.0, -3.0}));
    const auto res = grad_check([](ParamBinding& b) { return b.tape().constant(Tensor::scalar(4.2)); }, ps, 1e-4);
    EXPECT_EQ(res.max_rel_error, 0.0);
}

TEST(GradCheck, NonFiniteFunctionIsEvaluationError) {
    ParamSet ps;
    ps.add("x", Tensor::vector({1.0}));
    EXPECT_THROW(grad_check(
                     [](ParamBinding& b) {
                         return ops::scale(ops::sum(b("x")), std::numeric_limits<double>::infinity());
                     },
                     ps, 1e-4),
                 EvaluationError);
    EXPECT_THROW(grad_check([](ParamBinding& b) { return ops::sum(b("x")); }, ps, 0.0), ArgumentError);
}

TEST(GradCheck, ContrastiveNllOverEmbeddingBatch) {
    Rng rng(4);
    ParamSet ps;
    ps.add("z", random_tensor(rng, {9, 4}));  // 3 clips x (i, j, k)
    auto f = [](ParamBinding& b) {
        Var z = b("z");
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        std::vector<ops::ContrastiveGroup> groups;
        for (std::uint32_t c = 0; c < 3; ++c) {
            const std::uint32_t base = static_cast<std::uint32_t>(pairs.size());
            pairs.push_back({3 * c, 3 * c + 1});
            pairs.push_back({3 * c, 3 * c + 2});
            pairs.push_back({3 * c, 3 * ((c + 1) % 3)});
            groups.push_back({base, {base + 1, base + 2}});
        }
        return ops::sum(ops::grouped_contrastive_nll(ops::pair_neg_l2(z, pairs), groups));
    };
    EXPECT_LT(grad_check(f, ps, 1e-6).max_rel_error, 1e-4);
}

// Every primitive passes a central-difference check on a small random instance.
class PrimitiveGradients : public ::testing::Test {
  protected:
    Rng rng{99};
    double check(ParamSet& ps, const ScalarFn& f) { return grad_check(f, ps, 1e-6).max_rel_error; }
    // Random linear functional of an output tensor, so that every element contributes.
    static Var probe(Var y, std::uint64_t seed) {
        Rng r(seed);
        Tensor w(y.shape());
        for (auto& v : w.values()) v = uniform(r, -1, 1);
        Tape& t = y.tape();
        Var prod = ops::reshape(y, {1, y.value().size()});
        Var wv = t.constant(w.reshaped({w.size(), 1}));
        return ops::select(ops::affine(prod, wv, t.constant(Tensor({1}))), 0);
    }
};

TEST_F(PrimitiveGradients, Affine) {
    ParamSet ps;
    ps.add("x", random_tensor(rng, {4, 5}));
    ps.add("w", random_tensor(rng, {5, 3}));
    ps.add("b", random_tensor(rng, {3}));
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::affine(b("x"), b("w"), b("b")), 1); }), 1e-4);
}

TEST_F(PrimitiveGradients, StridedConvolution) {
    ParamSet ps;
    ps.add("x", random_tensor(rng, {2, 6, 6, 2}));
    ps.add("w", random_tensor(rng, {3 * 3 * 2, 3}));
    ps.add("b", random_tensor(rng, {3}));
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::conv2d(b("x"), b("w"), b("b"), 3, 2, 1), 2); }), 1e-4);
}

TEST_F(PrimitiveGradients, ReluAndPooling) {
    ParamSet ps;
    ps.add("x", random_tensor(rng, {2, 4, 4, 3}));
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::relu(b("x")), 3); }), 1e-4);
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::avg_pool_grid(b("x"), 2), 4); }), 1e-4);
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::avg_pool_grid(b("x"), 1), 5); }), 1e-4);
}

TEST_F(PrimitiveGradients, BatchNormTrainAndInference) {
    ParamSet ps;
    ps.add("x", random_tensor(rng, {4, 5}));
    ps.add("gamma", random_tensor(rng, {5}, 0.5, 1.5));
    ps.add("beta", random_tensor(rng, {5}));
    EXPECT_LT(check(ps,
                    [](ParamBinding& b) {
                        return probe(ops::batch_norm(b("x"), b("gamma"), b("beta"), ops::BatchNormMode::train, {}), 6);
                    }),
              1e-4);
    Tensor rm = random_tensor(rng, {5}), rv = random_tensor(rng, {5}, 0.5, 2.0);
    EXPECT_LT(check(ps,
                    [&](ParamBinding& b) {
                        ops::BatchNormState st{&rm, &rv};
                        return probe(ops::batch_norm(b("x"), b("gamma"), b("beta"), ops::BatchNormMode::inference, st), 7);
                    }),
              1e-4);
}

TEST_F(PrimitiveGradients, ElementwiseSumScaleAndGather) {
    ParamSet ps;
    ps.add("a", random_tensor(rng, {3, 4}));
    ps.add("c", random_tensor(rng, {3, 4}));
    ps.add("l", random_tensor(rng, {2, 2}));
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::scale(ops::add(b("a"), b("c")), -1.7), 8); }), 1e-4);
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::sub(b("a"), b("c")), 9); }), 1e-4);
    EXPECT_LT(check(ps,
                    [](ParamBinding& b) {
                        const std::pair<Var, std::vector<std::uint32_t>> parts[] = {
                            {b("a"), {0, 2, 2}}, {b("c"), {1, 1, 0}}, {b("l"), {1, 0, 1}}};
                        return probe(ops::gather_concat(parts), 10);
                    }),
              1e-4);
}

TEST_F(PrimitiveGradients, NormsEmbeddingAndSquaredError) {
    ParamSet ps;
    ps.add("z", random_tensor(rng, {3, 4}));
    ps.add("table", random_tensor(rng, {5, 3}));
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::row_norms(b("z"), ops::NormKind::l1), 11); }), 1e-4);
    EXPECT_LT(check(ps, [](ParamBinding& b) { return probe(ops::row_norms(b("z"), ops::NormKind::l2), 12); }), 1e-4);
    EXPECT_LT(check(ps,
                    [](ParamBinding& b) {
                        const std::vector<std::vector<std::uint32_t>> toks{{0, 3, 3}, {4}};
                        return probe(ops::embed_mean(b("table"), toks), 13);
                    }),
              1e-4);
    const Tensor target = random_tensor(rng, {3, 4});
    EXPECT_LT(check(ps, [&](ParamBinding& b) { return ops::mse_rows(b("z"), target); }), 1e-4);
    EXPECT_LT(check(ps, [](ParamBinding& b) { return ops::neg_l2_sim(ops::reshape(b("z"), {12}), ops::reshape(ops::scale(b("z"), 0.5), {12})); }), 1e-4);
}

TEST(Tape, UnusedParametersGetExactlyZeroGradient) {
    ParamSet ps;
    ps.add("used", Tensor::vector({1.0, 2.0}));
    ps.add("unused", Tensor::vector({3.0}));
    ParamSet grads = ps.zeros_like();
    Tape tape;
    ParamBinding bind(tape, ps, &grads);
    (void)bind("unused");
    tape.backward(ops::sum(bind("used")));
    EXPECT_EQ(grads.at("unused")[0], 0.0);
    EXPECT_EQ(grads.at("used")[0], 1.0);
}

TEST(Tape, BackwardVisitsEachNodeOnce) {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
    Var y = ops::add(x, x);      // x reached twice through one node
    Var z = ops::scale(y, 3.0);
    Var s = ops::sum(z);
    tape.backward(s);
    EXPECT_EQ(tape.last_backward_visits(), 4u);
    EXPECT_EQ(tape.grad(x)[0], 6.0);
}

TEST(Tape, DeterministicBitIdenticalResults) {
    Rng r1(5), r2(5);
    const Tensor a = random_tensor(r1, {4, 6}), b = random_tensor(r2, {4, 6});
    Tape t1, t2;
    Var y1 = ops::relu(ops::affine(t1.constant(a), t1.constant(random_tensor(r1, {6, 3})), t1.constant(Tensor({3}))));
    Var y2 = ops::relu(ops::affine(t2.constant(b), t2.constant(random_tensor(r2, {6, 3})), t2.constant(Tensor({3}))));
    EXPECT_EQ(y1.value(), y2.value());
}

} // namespace
} // namespace vlrep
