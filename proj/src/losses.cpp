/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/losses.hpp"

#include "vlrep/error.hpp"

#include <string>

namespace vlrep {
namespace {

Var reduce_over_clips(Var per_clip, std::size_t clips, Reduce reduce) {
    Var s = ops::sum(per_clip);
    return reduce == Reduce::mean ? ops::scale(s, 1.0 / static_cast<double>(clips)) : s;
}

void require_rows(Var embeddings, const BatchLayout& layout) {
    if (embeddings.value().rank() != 2 || embeddings.shape()[0] != layout.clips * kRolesPerClip)
        throw DimensionError("expected (" + std::to_string(layout.clips * kRolesPerClip) + ", E) embeddings, got " +
                             shape_str(embeddings.shape()));
}

} // namespace

void LossConfig::validate() const {
    for (double l : {lambda1, lambda2, lambda3, lambda4})
        if (!(l >= 0.0)) throw ArgumentError("loss weights must be nonnegative");
    if (n_cross_negatives < 1) throw ArgumentError("n_cross_negatives must be >= 1");
}

void BatchLayout::validate() const {
    if (clips < 2) throw BatchCompositionError("a batch needs at least 2 clips for cross-video negatives");
    if (cross_negatives.size() != clips) throw BatchCompositionError("one cross-negative list per clip is required");
    for (std::size_t b = 0; b < clips; ++b) {
        if (cross_negatives[b].empty()) throw BatchCompositionError("clip without cross-video negatives");
        for (auto c : cross_negatives[b])
            if (c == b || c >= clips) throw BatchCompositionError("cross negative must be another clip of the batch");
    }
}

Var time_contrastive_loss(Var embeddings, const BatchLayout& layout, Reduce reduce) {
    layout.validate();
    require_rows(embeddings, layout);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::vector<ops::ContrastiveGroup> groups;
    for (std::size_t b = 0; b < layout.clips; ++b) {
        const auto anchor = BatchLayout::row(b, Role::i);
        ops::ContrastiveGroup g;
        g.positive = static_cast<std::uint32_t>(pairs.size());
        pairs.emplace_back(anchor, BatchLayout::row(b, Role::j));
        g.negatives.push_back(static_cast<std::uint32_t>(pairs.size()));
        pairs.emplace_back(anchor, BatchLayout::row(b, Role::k));
        for (auto c : layout.cross_negatives[b]) {
            g.negatives.push_back(static_cast<std::uint32_t>(pairs.size()));
            pairs.emplace_back(anchor, BatchLayout::row(c, Role::i));
        }
        groups.push_back(std::move(g));
    }
    Var scores = ops::pair_neg_l2(embeddings, pairs);
    return reduce_over_clips(ops::grouped_contrastive_nll(scores, groups), layout.clips, reduce);
}

Var video_language_loss(ParamBinding& bind, const AlignmentHeadConfig& head, Var embeddings, Var language,
                        const BatchLayout& layout, Reduce reduce) {
    layout.validate();
    require_rows(embeddings, layout);
    if (language.value().rank() != 2 || language.shape()[0] != layout.clips)
        throw DimensionError("expected one language row per clip, got " + shape_str(language.shape()));

    struct PairSpec {
        Role positive;
        Role within_negative;
    };
    constexpr PairSpec kPairs[] = {{Role::final, Role::initial}, {Role::j, Role::i}, {Role::k, Role::j}};

    std::vector<std::uint32_t> first, second, lang;
    std::vector<ops::ContrastiveGroup> groups;
    auto add_row = [&](std::uint32_t a, std::uint32_t b, std::uint32_t l) {
        first.push_back(a);
        second.push_back(b);
        lang.push_back(l);
        return static_cast<std::uint32_t>(first.size() - 1);
    };
    for (std::size_t b = 0; b < layout.clips; ++b) {
        const auto lb = static_cast<std::uint32_t>(b);
        for (const auto& p : kPairs) {
            ops::ContrastiveGroup g;
            g.positive = add_row(BatchLayout::row(b, Role::initial), BatchLayout::row(b, p.positive), lb);
            g.negatives.push_back(
                add_row(BatchLayout::row(b, Role::initial), BatchLayout::row(b, p.within_negative), lb));
            for (auto c : layout.cross_negatives[b])
                g.negatives.push_back(add_row(BatchLayout::row(c, Role::initial), BatchLayout::row(c, p.positive), lb));
            groups.push_back(std::move(g));
        }
    }
    const std::pair<Var, std::vector<std::uint32_t>> parts[] = {
        {embeddings, first}, {embeddings, second}, {language, lang}};
    Var rows = ops::gather_concat(parts);
    Var scores = alignment_scores(bind, head, rows);
    return reduce_over_clips(ops::grouped_contrastive_nll(scores, groups), layout.clips, reduce);
}

Penalties sparsity_penalty(Var embeddings, const BatchLayout& layout, const LossConfig& config) {
    if (embeddings.value().rank() != 2 || embeddings.shape()[0] == 0)
        throw DimensionError("sparsity_penalty needs a nonempty (N, E) batch");
    Var rows = embeddings;
    if (!config.penalize_all_frames) {
        require_rows(embeddings, layout);
        std::vector<std::uint32_t> idx;
        for (std::size_t b = 0; b < layout.clips; ++b) idx.push_back(BatchLayout::row(b, Role::i));
        const std::pair<Var, std::vector<std::uint32_t>> parts[] = {{embeddings, idx}};
        rows = ops::gather_concat(parts);
    }
    const std::size_t n = rows.shape()[0];
    const double k = config.reduce == Reduce::mean ? 1.0 / static_cast<double>(n) : 1.0;
    Var l1 = ops::scale(ops::sum(ops::row_norms(rows, ops::NormKind::l1)), k);
    Var l2 = ops::scale(
        ops::sum(ops::row_norms(rows, config.l2_squared ? ops::NormKind::l2_squared : ops::NormKind::l2)), k);
    return {l1, l2};
}

LossBreakdown LossTerms::values() const {
    return {tcn.value()[0], language.value()[0], l1.value()[0], l2.value()[0], total.value()[0]};
}

LossTerms combine_losses(ParamBinding& bind, const ModelConfig& model, Var embeddings, Var language,
                         const BatchLayout& layout, const LossConfig& config) {
    config.validate();
    Tape& tape = bind.tape();
    LossTerms t;
    t.tcn = time_contrastive_loss(embeddings, layout, config.reduce);
    if (config.lambda2 != 0.0)
        t.language = video_language_loss(bind, model.head, embeddings, language, layout, config.reduce);
    else
        t.language = tape.constant(Tensor::scalar(0.0));
    const Penalties p = sparsity_penalty(embeddings, layout, config);
    t.l1 = p.l1;
    t.l2 = p.l2;
    const Var terms[] = {t.tcn, t.language, t.l1, t.l2};
    const double weights[] = {config.lambda1, config.lambda2, config.lambda3, config.lambda4};
    t.total = ops::weighted_sum(terms, weights);
    return t;
}

LossTerms total_loss(ParamBinding& bind, const ModelConfig& model, Var images,
                     std::span<const std::vector<std::uint32_t>> annotations, const BatchLayout& layout,
                     const LossConfig& config, ops::BatchNormMode mode) {
    layout.validate();
    if (annotations.size() != layout.clips) throw BatchCompositionError("one annotation per clip is required");
    Var z = encode_images(bind, model.encoder, images, mode);
    Var lang = config.lambda2 != 0.0 ? encode_sentences(bind, model.sentence, annotations)
                                     : bind.tape().constant(Tensor({layout.clips, model.sentence.language_dim}));
    return combine_losses(bind, model, z, lang, layout, config);
}

} // namespace vlrep
