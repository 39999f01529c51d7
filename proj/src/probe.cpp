/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/probe.hpp"

#include "vlrep/error.hpp"
#include "vlrep/numerics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace vlrep {
namespace {

std::string sentence_key(const std::vector<std::string>& tokens) {
    std::string k;
    for (const auto& t : tokens) k += t + " ";
    return k;
}

// Scores rows laid out as [z0, zt, l] without recording gradients.
std::vector<double> score_rows(ParamSet& params, const ModelConfig& model, const Tensor& rows) {
    Tape tape;
    ParamBinding bind(tape, params);
    const Tensor out = alignment_scores(bind, model.head, tape.constant(rows)).value();
    return {out.values().begin(), out.values().end()};
}

void put_row(Tensor& rows, std::size_t r, std::span<const double> a, std::span<const double> b,
             std::span<const double> c) {
    double* dst = rows.data() + r * rows.shape()[1];
    dst = std::copy(a.begin(), a.end(), dst);
    dst = std::copy(b.begin(), b.end(), dst);
    std::copy(c.begin(), c.end(), dst);
}

std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j);
        for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

std::vector<Tensor> embed_clips(ParamSet& params, const EncoderConfig& config, const ClipDataset& clips) {
    const std::size_t s = config.input_size;
    std::vector<Tensor> out;
    out.reserve(clips.size());
    for (const auto& clip : clips.clips) {
        const std::size_t t = clip.length();
        Tensor images({t, s, s, 3});
        const CropRect crop = CropRect::full(clips.render_size, s);
        for (std::size_t f = 0; f < t; ++f) crop_into(clip.frames[f], crop, images.data() + f * s * s * 3);
        out.push_back(encode_batch(params, config, images));
    }
    return out;
}

double temporal_ordering_accuracy(std::span<const Tensor> clip_embeddings, std::size_t n_triplets, Rng& rng) {
    if (clip_embeddings.empty() || n_triplets == 0) throw ProbeError("temporal ordering needs clips and triplets");
    std::size_t correct = 0;
    for (std::size_t n = 0; n < n_triplets; ++n) {
        const auto& z = clip_embeddings[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(clip_embeddings.size()) - 1))];
        const std::size_t t = z.shape()[0];
        if (t < 3) throw ProbeError("clip too short for triplets");
        auto idx = sample_without_replacement(rng, 0, static_cast<std::int64_t>(t) - 1, 3);
        std::sort(idx.begin(), idx.end());
        const auto zi = z.row(static_cast<std::size_t>(idx[0]));
        const double near = neg_l2_sim(zi, z.row(static_cast<std::size_t>(idx[1])));
        const double far = neg_l2_sim(zi, z.row(static_cast<std::size_t>(idx[2])));
        if (near > far) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n_triplets);
}

double language_retrieval_accuracy(ParamSet& params, const ModelConfig& model, const ClipDataset& clips,
                                   std::span<const Tensor> clip_embeddings, std::size_t distractors, Rng& rng) {
    if (clip_embeddings.size() != clips.size()) throw ProbeError("one embedding tensor per clip is required");
    if (distractors == 0) throw ProbeError("at least one distractor is required");
    std::vector<std::vector<std::string>> sentences;
    std::set<std::string> seen;
    for (const auto& c : clips.clips)
        if (seen.insert(sentence_key(c.annotation)).second) sentences.push_back(c.annotation);
    if (sentences.size() < 2) throw ProbeError("retrieval needs at least 2 distinct annotations");

    std::vector<Tensor> lang;
    for (const auto& s : sentences) lang.push_back(encode_sentence(params, model.sentence, s));
    const std::size_t e = model.encoder.embedding_dim, l = model.sentence.language_dim;

    std::size_t correct = 0;
    for (std::size_t c = 0; c < clips.size(); ++c) {
        const auto key = sentence_key(clips.clips[c].annotation);
        std::vector<std::size_t> others;
        std::size_t truth = 0;
        for (std::size_t s = 0; s < sentences.size(); ++s) {
            if (sentence_key(sentences[s]) == key) truth = s;
            else others.push_back(s);
        }
        const std::size_t m = std::min(distractors, others.size());
        const auto pick = sample_without_replacement(rng, 0, static_cast<std::int64_t>(others.size()) - 1, m);
        const auto& z = clip_embeddings[c];
        const auto z0 = z.row(0), zg = z.row(z.shape()[0] - 1);
        Tensor rows({m + 1, 2 * e + l});
        put_row(rows, 0, z0, zg, lang[truth].values());
        for (std::size_t d = 0; d < m; ++d)
            put_row(rows, d + 1, z0, zg, lang[others[static_cast<std::size_t>(pick[d])]].values());
        const auto scores = score_rows(params, model, rows);
        if (std::all_of(scores.begin() + 1, scores.end(), [&](double s) { return scores[0] > s; })) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(clips.size());
}

std::vector<double> score_over_time(ParamSet& params, const ModelConfig& model, const Tensor& clip_embedding,
                                    std::span<const std::string> annotation) {
    const Tensor lang = encode_sentence(params, model.sentence, annotation);
    const std::size_t t = clip_embedding.shape()[0];
    const std::size_t e = model.encoder.embedding_dim, l = model.sentence.language_dim;
    if (clip_embedding.shape()[1] != e) throw DimensionError("clip embedding width differs from the model");
    Tensor rows({t, 2 * e + l});
    for (std::size_t f = 0; f < t; ++f) put_row(rows, f, clip_embedding.row(0), clip_embedding.row(f), lang.values());
    return score_rows(params, model, rows);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("spearman: lengths differ");
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    const auto rx = ranks(x), ry = ranks(y);
    const double mean = 0.5 * static_cast<double>(n - 1);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

SparsityStats sparsity_stats(std::span<const Tensor> embeddings) {
    SparsityStats s;
    std::size_t coords = 0, near_zero = 0, nonzero_frames = 0;
    double abs_total = 0.0, pr_total = 0.0;
    for (const auto& z : embeddings) {
        if (z.rank() != 2) throw DimensionError("sparsity_stats expects (frames, E) tensors");
        const std::size_t e = z.shape()[1];
        for (std::size_t f = 0; f < z.shape()[0]; ++f) {
            double a = 0.0, q = 0.0;
            for (double v : z.row(f)) {
                a += std::fabs(v);
                q += v * v;
                if (std::fabs(v) < 1e-3) ++near_zero;
            }
            coords += e;
            abs_total += a;
            ++s.frames;
            if (q > 0.0) {
                pr_total += a * a / (static_cast<double>(e) * q);
                ++nonzero_frames;
            }
        }
    }
    if (s.frames == 0) throw ProbeError("sparsity_stats needs at least one frame");
    s.mean_abs = abs_total / static_cast<double>(coords);
    s.near_zero_fraction = static_cast<double>(near_zero) / static_cast<double>(coords);
    s.participation_ratio = nonzero_frames ? pr_total / static_cast<double>(nonzero_frames) : 0.0;
    return s;
}

ProbeReport run_probes(ParamSet& params, const ModelConfig& model, const ClipDataset& heldout,
                       const ProbeConfig& config) {
    const std::uint64_t before = params.hash();
    const auto emb = embed_clips(params, model.encoder, heldout);
    ProbeReport r;
    r.n_clips = heldout.size();
    r.n_triplets = config.n_triplets;
    r.distractors = config.distractors;
    Rng order_rng(mix_seed(config.seed, 1));
    r.temporal_ordering_accuracy = temporal_ordering_accuracy(emb, config.n_triplets, order_rng);
    Rng retrieval_rng(mix_seed(config.seed, 2));
    r.language_retrieval_accuracy =
        language_retrieval_accuracy(params, model, heldout, emb, config.distractors, retrieval_rng);
    double rho = 0.0;
    for (std::size_t c = 0; c < heldout.size(); ++c) {
        auto curve = score_over_time(params, model, emb[c], heldout.clips[c].annotation);
        std::vector<double> t(curve.size());
        std::iota(t.begin(), t.end(), 0.0);
        rho += spearman(t, curve);
        if (r.score_curves.size() < config.curves_kept) r.score_curves.push_back(std::move(curve));
    }
    r.mean_spearman = rho / static_cast<double>(heldout.size());
    r.sparsity = sparsity_stats(emb);
    if (params.hash() != before) throw ProbeError("probe modified the parameters");
    return r;
}

std::string ProbeReport::to_json() const {
    nlohmann::json j;
    j["temporal_ordering_accuracy"] = temporal_ordering_accuracy;
    j["language_retrieval_accuracy"] = language_retrieval_accuracy;
    j["n_triplets"] = n_triplets;
    j["n_clips"] = n_clips;
    j["distractors"] = distractors;
    j["mean_spearman"] = mean_spearman;
    j["score_curves"] = score_curves;
    j["sparsity"] = {{"mean_abs", sparsity.mean_abs},
                     {"near_zero_fraction", sparsity.near_zero_fraction},
                     {"participation_ratio", sparsity.participation_ratio},
                     {"frames", sparsity.frames}};
    return j.dump(2);
}

} // namespace vlrep
