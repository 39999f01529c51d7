/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/encoder.hpp"

#include "vlrep/error.hpp"
#include "vlrep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vlrep {
namespace {

std::string stage(std::size_t i) { return std::string(kEncoderPrefix) + "conv" + std::to_string(i); }
std::string norm_name(std::size_t i) { return std::string(kEncoderPrefix) + "bn" + std::to_string(i); }
std::string head_layer(std::size_t i) { return std::string(kHeadPrefix) + "fc" + std::to_string(i); }

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = normal(rng, 0.0, stddev);
    return t;
}

} // namespace

void EncoderConfig::validate() const {
    if (embedding_dim < 1) throw ArgumentError("embedding_dim must be >= 1");
    if (channel_widths.empty()) throw ArgumentError("encoder needs at least one conv stage");
    for (auto w : channel_widths)
        if (w == 0) throw ArgumentError("conv stage width must be positive");
    if (input_size == 0) throw ArgumentError("input_size must be positive");
    std::size_t s = input_size;
    for (std::size_t i = 0; i < channel_widths.size(); ++i) {
        if (s % 2 != 0) throw ArgumentError("input_size must be divisible by 2^stages");
        s /= 2;
    }
    if (s < 1) throw ArgumentError("final spatial size must be >= 1");
    if (pool_grid == 0 || s % pool_grid != 0) throw ArgumentError("pool_grid must divide the final spatial size");
}

std::size_t EncoderConfig::final_spatial() const { return input_size >> channel_widths.size(); }

std::size_t EncoderConfig::pooled_features() const { return pool_grid * pool_grid * channel_widths.back(); }

void SentenceEncoderConfig::validate() const {
    if (vocabulary.empty()) throw ArgumentError("vocabulary must be nonempty");
    std::set<std::string> seen(vocabulary.begin(), vocabulary.end());
    if (seen.size() != vocabulary.size()) throw ArgumentError("vocabulary tokens must be unique");
    if (language_dim < 1) throw ArgumentError("language_dim must be >= 1");
}

std::vector<std::uint32_t> SentenceEncoderConfig::token_ids(std::span<const std::string> tokens) const {
    if (tokens.empty()) throw ArgumentError("annotation has no tokens");
    std::vector<std::uint32_t> ids;
    for (const auto& t : tokens) {
        auto it = std::find(vocabulary.begin(), vocabulary.end(), t);
        if (it == vocabulary.end()) throw VocabularyError("unknown token '" + t + "'");
        ids.push_back(static_cast<std::uint32_t>(it - vocabulary.begin()));
    }
    return ids;
}

void ModelConfig::validate() const {
    encoder.validate();
    sentence.validate();
    for (auto w : head.hidden_widths)
        if (w == 0) throw ArgumentError("head hidden widths must be positive");
}

void ModelConfig::write(KvConfig& kv) const {
    kv.set("encoder.input_size", static_cast<std::int64_t>(encoder.input_size));
    kv.set("encoder.channel_widths", encoder.channel_widths);
    kv.set("encoder.embedding_dim", static_cast<std::int64_t>(encoder.embedding_dim));
    kv.set("encoder.normalization", std::string(encoder.normalization == Normalization::batchnorm ? "batchnorm" : "none"));
    kv.set("encoder.pool_grid", static_cast<std::int64_t>(encoder.pool_grid));
    kv.set("sentence.vocabulary", sentence.vocabulary);
    kv.set("sentence.language_dim", static_cast<std::int64_t>(sentence.language_dim));
    kv.set("head.hidden_widths", head.hidden_widths);
}

ModelConfig ModelConfig::read(const KvConfig& kv) {
    ModelConfig c;
    c.encoder.input_size = static_cast<std::size_t>(kv.get_int("encoder.input_size", 64));
    c.encoder.channel_widths = kv.get_sizes("encoder.channel_widths", c.encoder.channel_widths);
    c.encoder.embedding_dim = static_cast<std::size_t>(kv.get_int("encoder.embedding_dim", 64));
    const auto norm = kv.get_string("encoder.normalization", "none");
    if (norm == "batchnorm") c.encoder.normalization = Normalization::batchnorm;
    else if (norm == "none") c.encoder.normalization = Normalization::none;
    else throw ConfigError("unknown encoder.normalization '" + norm + "'");
    c.encoder.pool_grid = static_cast<std::size_t>(kv.get_int("encoder.pool_grid", 2));
    c.sentence.vocabulary = kv.get_strings("sentence.vocabulary", {});
    c.sentence.language_dim = static_cast<std::size_t>(kv.get_int("sentence.language_dim", 32));
    c.head.hidden_widths = kv.get_sizes("head.hidden_widths", c.head.hidden_widths);
    return c;
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed, InitOptions options) {
    config.validate();
    Rng rng(mix_seed(seed, 0x5eed));
    ParamSet ps;
    const auto& enc = config.encoder;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < enc.channel_widths.size(); ++i) {
        const std::size_t cout = enc.channel_widths[i];
        const std::size_t fan_in = 9 * cin;
        ps.add(stage(i) + "/w", gaussian(rng, {fan_in, cout}, std::sqrt(2.0 / static_cast<double>(fan_in))));
        ps.add(stage(i) + "/b", Tensor({cout}));
        if (enc.normalization == Normalization::batchnorm) {
            ps.add(norm_name(i) + "/gamma", Tensor({cout}, 1.0));
            ps.add(norm_name(i) + "/beta", Tensor({cout}));
            ps.add(norm_name(i) + "/running_mean", Tensor({cout}), false);
            ps.add(norm_name(i) + "/running_var", Tensor({cout}, 1.0), false);
        }
        cin = cout;
    }
    const std::size_t feat = enc.pooled_features();
    ps.add(std::string(kEncoderPrefix) + "proj/w",
           gaussian(rng, {feat, enc.embedding_dim}, std::sqrt(1.0 / static_cast<double>(feat))));
    ps.add(std::string(kEncoderPrefix) + "proj/b", Tensor({enc.embedding_dim}));

    ps.add(std::string(kSentencePrefix) + "table",
           gaussian(rng, {config.sentence.vocabulary.size(), config.sentence.language_dim}, 1.0));

    std::size_t in = AlignmentHeadConfig::input_dim(enc.embedding_dim, config.sentence.language_dim);
    const auto& hidden = config.head.hidden_widths;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        ps.add(head_layer(i) + "/w", gaussian(rng, {in, hidden[i]}, std::sqrt(2.0 / static_cast<double>(in))));
        ps.add(head_layer(i) + "/b", Tensor({hidden[i]}));
        in = hidden[i];
    }
    const std::size_t last = hidden.size();
    if (options.zero_final_head)
        ps.add(head_layer(last) + "/w", Tensor({in, 1}));
    else
        ps.add(head_layer(last) + "/w", gaussian(rng, {in, 1}, std::sqrt(1.0 / static_cast<double>(in))));
    ps.add(head_layer(last) + "/b", Tensor({1}));
    return ps;
}

Var encode_images(ParamBinding& bind, const EncoderConfig& config, Var images, ops::BatchNormMode mode) {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != config.input_size || s[2] != config.input_size || s[3] != 3)
        throw DimensionError("encoder expects (N," + std::to_string(config.input_size) + "," +
                             std::to_string(config.input_size) + ",3) images, got " + shape_str(s));
    const std::size_t n = s[0];
    Tape& tape = bind.tape();
    // Centre pixel values around zero.
    Var x = ops::add(images, tape.constant(Tensor(s, -0.5)));
    for (std::size_t i = 0; i < config.channel_widths.size(); ++i) {
        x = ops::conv2d(x, bind(stage(i) + "/w"), bind(stage(i) + "/b"), 3, 2, 1);
        if (config.normalization == Normalization::batchnorm) {
            ops::BatchNormState st;
            if (mode == ops::BatchNormMode::inference || !bind.frozen()) {
                st.running_mean = &bind.params().at(norm_name(i) + "/running_mean");
                st.running_var = &bind.params().at(norm_name(i) + "/running_var");
            }
            x = ops::batch_norm(x, bind(norm_name(i) + "/gamma"), bind(norm_name(i) + "/beta"), mode, st);
        }
        x = ops::relu(x);
    }
    x = ops::avg_pool_grid(x, config.pool_grid);
    x = ops::reshape(x, {n, config.pooled_features()});
    return ops::affine(x, bind(std::string(kEncoderPrefix) + "proj/w"), bind(std::string(kEncoderPrefix) + "proj/b"));
}

Tensor encode_batch(ParamSet& params, const EncoderConfig& config, const Tensor& images, std::size_t chunk) {
    if (images.rank() != 4) throw DimensionError("encode_batch expects (N,S,S,3), got " + shape_str(images.shape()));
    const std::size_t n = images.shape()[0];
    const std::size_t per = n == 0 ? 0 : images.size() / n;
    Tensor out({n, config.embedding_dim});
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t cnt = std::min(chunk, n - start);
        Shape cs = images.shape();
        cs[0] = cnt;
        Tensor part(cs, std::vector<double>(images.data() + start * per, images.data() + (start + cnt) * per));
        Tape tape;
        ParamBinding bind(tape, params);
        Var z = encode_images(bind, config, tape.constant(std::move(part)), ops::BatchNormMode::inference);
        std::copy(z.value().data(), z.value().data() + z.value().size(), out.data() + start * config.embedding_dim);
    }
    return out;
}

Tensor encode_image(ParamSet& params, const EncoderConfig& config, const Tensor& image) {
    if (image.shape() != Shape{config.input_size, config.input_size, 3})
        throw DimensionError("encode_image expects (" + std::to_string(config.input_size) + "," +
                             std::to_string(config.input_size) + ",3), got " + shape_str(image.shape()));
    for (double v : image.values())
        if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("image values must lie in [0, 1]");
    Tensor batch = image.reshaped({1, config.input_size, config.input_size, 3});
    Tensor z = encode_batch(params, config, batch);
    return z.reshaped({config.embedding_dim});
}

Var encode_sentences(ParamBinding& bind, const SentenceEncoderConfig& config,
                     std::span<const std::vector<std::uint32_t>> tokens) {
    (void)config;
    return ops::embed_mean(bind(std::string(kSentencePrefix) + "table"), tokens);
}

Tensor encode_sentence(ParamSet& params, const SentenceEncoderConfig& config, std::span<const std::string> tokens) {
    const std::vector<std::vector<std::uint32_t>> ids{config.token_ids(tokens)};
    Tape tape;
    ParamBinding bind(tape, params);
    Var l = encode_sentences(bind, config, ids);
    return l.value().reshaped({config.language_dim});
}

Var alignment_scores(ParamBinding& bind, const AlignmentHeadConfig& config, Var rows) {
    if (rows.value().rank() != 2) throw DimensionError("alignment head expects (M, 2E+L) rows");
    const std::size_t m = rows.shape()[0];
    Var x = rows;
    for (std::size_t i = 0; i < config.hidden_widths.size(); ++i)
        x = ops::relu(ops::affine(x, bind(head_layer(i) + "/w"), bind(head_layer(i) + "/b")));
    const std::size_t last = config.hidden_widths.size();
    x = ops::affine(x, bind(head_layer(last) + "/w"), bind(head_layer(last) + "/b"));
    return ops::reshape(x, {m});
}

double alignment_score(ParamSet& params, const ModelConfig& config, std::span<const double> z0,
                       std::span<const double> zt, std::span<const double> lang) {
    const std::size_t e = config.encoder.embedding_dim, l = config.sentence.language_dim;
    if (z0.size() != e || zt.size() != e || lang.size() != l)
        throw DimensionError("alignment_score expects embeddings of size " + std::to_string(e) + " and language of size " +
                             std::to_string(l));
    Tensor row({1, 2 * e + l});
    std::copy(z0.begin(), z0.end(), row.data());
    std::copy(zt.begin(), zt.end(), row.data() + e);
    std::copy(lang.begin(), lang.end(), row.data() + 2 * e);
    Tape tape;
    ParamBinding bind(tape, params);
    if (params.at(head_layer(config.head.hidden_widths.size()) + "/w").shape()[0] !=
        (config.head.hidden_widths.empty() ? 2 * e + l : config.head.hidden_widths.back()))
        throw DimensionError("head parameters do not match the model config");
    return alignment_scores(bind, config.head, tape.constant(std::move(row))).value()[0];
}

} // namespace vlrep
