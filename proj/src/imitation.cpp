/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/imitation.hpp"

#include "vlrep/data.hpp"
#include "vlrep/error.hpp"
#include "vlrep/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace vlrep {
namespace {

using json = nlohmann::json;

std::string layer_name(std::size_t i) { return std::string(kPolicyPrefix) + "fc" + std::to_string(i); }

const std::vector<std::string> kFrozenEncoder{kEncoderPrefix, kSentencePrefix, kHeadPrefix};
const std::vector<std::string> kFrozenLanguage{kSentencePrefix, kHeadPrefix};

// Keeps only the image encoder entries of a pretraining checkpoint.
ParamSet encoder_only(const ParamSet& params) {
    ParamSet out;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params.name(i).starts_with(kEncoderPrefix)) out.add(params.name(i), params.tensor(i), params.trainable(i));
    return out;
}

void merge_into(ParamSet& dst, const ParamSet& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.add(src.name(i), src.tensor(i), src.trainable(i));
}

ParamSet subset(const ParamSet& params, std::string_view prefix) {
    ParamSet out;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params.name(i).starts_with(prefix)) out.add(params.name(i), params.tensor(i), params.trainable(i));
    return out;
}

struct DemoTable {
    std::size_t rows = 0;
    std::vector<const Image*> images;
    Tensor proprio;
    Tensor actions;
};

DemoTable flatten(const std::vector<Demonstration>& demos) {
    DemoTable t;
    for (const auto& d : demos) t.rows += d.length();
    t.proprio = Tensor({t.rows, kProprioDim});
    t.actions = Tensor({t.rows, kActionDim});
    std::size_t r = 0;
    for (const auto& d : demos)
        for (std::size_t s = 0; s < d.length(); ++s, ++r) {
            t.images.push_back(&d.observations[s].image);
            std::copy(d.observations[s].proprio.begin(), d.observations[s].proprio.end(), t.proprio.row(r).begin());
            std::copy(d.actions[s].values.begin(), d.actions[s].values.end(), t.actions.row(r).begin());
        }
    return t;
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
    const std::size_t w = src.row_size();
    Shape shape = src.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.row(rows[i]).begin(), w, out.row(i).begin());
    return out;
}

Tensor stack_images(const DemoTable& table, std::span<const std::size_t> rows, std::size_t size) {
    Tensor out({rows.size(), size, size, 3});
    const std::size_t per = size * size * 3;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor img = observation_tensor(*table.images[rows[i]], size);
        std::copy_n(img.data(), per, out.data() + i * per);
    }
    return out;
}

Tensor embed_all(ParamSet& encoder, const EncoderConfig& config, const DemoTable& table) {
    Tensor z({table.rows, config.embedding_dim});
    constexpr std::size_t chunk = 64;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < table.rows; start += chunk) {
        rows.clear();
        for (std::size_t r = start; r < std::min(table.rows, start + chunk); ++r) rows.push_back(r);
        const Tensor e = encode_batch(encoder, config, stack_images(table, rows, config.input_size));
        std::copy(e.values().begin(), e.values().end(), z.data() + start * config.embedding_dim);
    }
    return z;
}

double dataset_loss(ParamSet& model, const PolicyConfig& policy, const Tensor& z, const DemoTable& table) {
    Tape tape;
    ParamBinding bind(tape, model);
    return bc_loss(bind, policy, tape.constant(z), table.proprio, table.actions, ops::BatchNormMode::inference)
        .value()
        .item();
}

std::vector<std::size_t> eval_points(const BCConfig& c) {
    if (c.steps == 0) return {0};
    std::vector<std::size_t> pts;
    for (std::size_t s = c.eval_every; s <= c.steps; s += c.eval_every) pts.push_back(s);
    return pts;
}

std::string encoder_mode_name(EncoderMode m) { return m == EncoderMode::frozen ? "frozen" : "finetune"; }

void write_atomic(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << text;
        if (!f) throw Error(ErrorClass::data, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorClass::data, "cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

void PolicyConfig::validate() const {
    if (action_dim == 0) throw ArgumentError("policy action_dim must be positive");
    for (auto w : hidden_widths)
        if (w == 0) throw ArgumentError("policy hidden widths must be positive");
}

ParamSet init_policy(const PolicyConfig& config, std::size_t embedding_dim, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 0x9011c7));
    const std::size_t in = embedding_dim + kProprioDim;
    ParamSet ps;
    const std::string bn = std::string(kPolicyPrefix) + "input_norm";
    ps.add(bn + "/gamma", Tensor({in}, 1.0));
    ps.add(bn + "/beta", Tensor({in}));
    ps.add(bn + "/running_mean", Tensor({in}), false);
    ps.add(bn + "/running_var", Tensor({in}, 1.0), false);
    std::size_t fan_in = in;
    const std::size_t n = config.hidden_widths.size();
    for (std::size_t i = 0; i <= n; ++i) {
        const std::size_t out = i < n ? config.hidden_widths[i] : config.action_dim;
        const double sd = std::sqrt((i < n ? 2.0 : 1.0) / static_cast<double>(fan_in));
        Tensor w({fan_in, out});
        for (auto& v : w.values()) v = normal(rng, 0.0, sd);
        ps.add(layer_name(i) + "/w", std::move(w));
        ps.add(layer_name(i) + "/b", Tensor({out}));
        fan_in = out;
    }
    return ps;
}

Var policy_forward(ParamBinding& bind, const PolicyConfig& config, Var inputs, ops::BatchNormMode mode) {
    const std::string bn = std::string(kPolicyPrefix) + "input_norm";
    const Tensor& gamma = bind.params().at(bn + "/gamma");
    if (inputs.shape().size() != 2 || inputs.shape()[1] != gamma.size())
        throw DimensionError("policy input must be (N, " + std::to_string(gamma.size()) + ")");
    ops::BatchNormState st;
    st.running_mean = &bind.params().at(bn + "/running_mean");
    st.running_var = &bind.params().at(bn + "/running_var");
    Var x = ops::batch_norm(inputs, bind(bn + "/gamma"), bind(bn + "/beta"), mode, st);
    const std::size_t n = config.hidden_widths.size();
    for (std::size_t i = 0; i <= n; ++i) {
        x = ops::affine(x, bind(layer_name(i) + "/w"), bind(layer_name(i) + "/b"));
        if (i < n) x = ops::relu(x);
    }
    return x;
}

Var bc_loss(ParamBinding& bind, const PolicyConfig& config, Var embeddings, const Tensor& proprio,
            const Tensor& actions, ops::BatchNormMode mode) {
    const Shape& zs = embeddings.shape();
    if (zs.size() != 2 || proprio.rank() != 2 || actions.rank() != 2 || proprio.dim(0) != zs[0] ||
        actions.dim(0) != zs[0] || proprio.dim(1) != kProprioDim || actions.dim(1) != config.action_dim)
        throw DimensionError("bc_loss: embeddings, proprio and actions must share the row count");
    Tape& tape = bind.tape();
    const Var p = tape.constant(proprio);
    std::vector<std::uint32_t> identity(zs[0]);
    for (std::uint32_t r = 0; r < zs[0]; ++r) identity[r] = r;
    const std::vector<std::pair<Var, std::vector<std::uint32_t>>> parts{{embeddings, identity}, {p, identity}};
    const Var inputs = ops::gather_concat(parts);
    return ops::mse_rows(policy_forward(bind, config, inputs, mode), actions);
}

void BCConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("bc learning_rate must be >= 0");
    if (batch_size < 1) throw ArgumentError("bc batch_size must be >= 1");
    if (steps > 0 && (eval_every == 0 || steps % eval_every != 0))
        throw ArgumentError("bc eval_every must divide steps");
    if (eval_episodes < 1) throw ArgumentError("bc eval_episodes must be >= 1");
    if (seeds < 1) throw ArgumentError("bc seeds must be >= 1");
    policy.validate();
}

void BCConfig::write(KvConfig& kv) const {
    kv.set("bc.learning_rate", learning_rate);
    kv.set("bc.batch_size", static_cast<std::int64_t>(batch_size));
    kv.set("bc.steps", static_cast<std::int64_t>(steps));
    kv.set("bc.eval_every", static_cast<std::int64_t>(eval_every));
    kv.set("bc.eval_episodes", static_cast<std::int64_t>(eval_episodes));
    kv.set("bc.seeds", static_cast<std::int64_t>(seeds));
    kv.set("bc.eval_seed", static_cast<std::int64_t>(eval_seed));
    kv.set("bc.hidden_widths", policy.hidden_widths);
}

BCConfig BCConfig::read(const KvConfig& kv) {
    BCConfig c;
    auto count = [&](const char* key, std::size_t fallback) {
        const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
        return static_cast<std::size_t>(v);
    };
    c.learning_rate = kv.get_double("bc.learning_rate", c.learning_rate);
    c.batch_size = count("bc.batch_size", c.batch_size);
    c.steps = count("bc.steps", c.steps);
    c.eval_every = count("bc.eval_every", c.eval_every);
    c.eval_episodes = count("bc.eval_episodes", c.eval_episodes);
    c.seeds = count("bc.seeds", c.seeds);
    c.eval_seed = count("bc.eval_seed", 0);
    c.policy.hidden_widths = kv.get_sizes("bc.hidden_widths", c.policy.hidden_widths);
    c.validate();
    return c;
}

Tensor observation_tensor(const Image& image, std::size_t input_size) {
    if (image.height == input_size && image.width == input_size) return image.to_tensor();
    if (image.height != image.width) throw DimensionError("observation images must be square");
    Tensor out({input_size, input_size, 3});
    crop_into(image, CropRect::full(image.height, input_size), out.data());
    return out;
}

double evaluate_controller(Env& env, std::span<const std::uint64_t> episode_seeds, const Controller& controller) {
    if (episode_seeds.empty()) throw ArgumentError("evaluation needs at least one episode seed");
    std::size_t ok = 0;
    for (auto seed : episode_seeds) {
        Observation obs = env.reset(seed);
        while (!env.done()) obs = env.step(controller(env, obs)).observation;
        ok += env.success();
    }
    return static_cast<double>(ok) / static_cast<double>(episode_seeds.size());
}

Controller make_policy_controller(ParamSet& policy, const PolicyConfig& policy_config, ParamSet& encoder,
                                  const EncoderConfig& encoder_config) {
    return [&policy, &policy_config, &encoder, &encoder_config](const Env&, const Observation& obs) {
        const Tensor z = encode_image(encoder, encoder_config, observation_tensor(obs.image, encoder_config.input_size));
        Tensor in({1, z.size() + kProprioDim});
        std::copy(z.values().begin(), z.values().end(), in.data());
        std::copy(obs.proprio.begin(), obs.proprio.end(), in.data() + z.size());
        Tape tape;
        ParamBinding bind(tape, policy);
        const Tensor out = policy_forward(bind, policy_config, tape.constant(std::move(in)), ops::BatchNormMode::inference).value();
        Action a;
        for (std::size_t k = 0; k < kActionDim; ++k) a.values[k] = out[k];
        return a;
    };
}

Controller make_expert_controller() {
    return [](const Env& env, const Observation&) { return scripted_expert(env.state(), env.config().task); };
}

double evaluate_policy(ParamSet& policy, const PolicyConfig& policy_config, ParamSet& encoder,
                       const EncoderConfig& encoder_config, const EnvConfig& env_config,
                       std::span<const std::uint64_t> episode_seeds) {
    Env env(env_config);
    return evaluate_controller(env, episode_seeds, make_policy_controller(policy, policy_config, encoder, encoder_config));
}

BCResult bc_train(const ParamSet& encoder, const EncoderConfig& encoder_config, const std::vector<Demonstration>& demos,
                  const EnvConfig& env, const BCConfig& config, EncoderMode mode, std::uint64_t seed) {
    config.validate();
    encoder_config.validate();
    if (demos.empty()) throw ArgumentError("bc_train needs at least one demonstration");
    for (const auto& d : demos)
        if (d.task != env.task) throw ArgumentError("demonstration task differs from the evaluation task");

    const bool frozen = mode == EncoderMode::frozen;
    ParamSet model = encoder_only(encoder);
    const std::uint64_t encoder_hash = model.hash();
    merge_into(model, init_policy(config.policy, encoder_config.embedding_dim, seed));

    const DemoTable table = flatten(demos);
    if (table.rows == 0) throw ArgumentError("demonstrations contain no steps");
    auto all_embeddings = [&] { return embed_all(model, encoder_config, table); };
    Tensor z_cache = all_embeddings();

    BCResult result;
    result.initial_loss = dataset_loss(model, config.policy, z_cache, table);

    const auto eval_seeds = evaluation_seeds(config.eval_episodes, config.eval_seed);
    const std::vector<std::string>& frozen_prefixes = frozen ? kFrozenEncoder : kFrozenLanguage;
    AdamState adam = AdamState::init(model);
    std::size_t next_eval = 0;
    const auto points = eval_points(config);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::vector<std::size_t> rows(config.batch_size);

    auto evaluate_now = [&](std::size_t step) {
        ParamSet enc = subset(model, kEncoderPrefix);
        ParamSet pol = subset(model, kPolicyPrefix);
        CurvePoint cp;
        cp.step = step;
        cp.success = evaluate_policy(pol, config.policy, enc, encoder_config, env, eval_seeds);
        cp.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : result.initial_loss;
        result.curve.push_back(cp);
        loss_sum = 0.0;
        loss_count = 0;
    };

    if (config.steps == 0) evaluate_now(0);
    for (std::size_t step = 1; step <= config.steps; ++step) {
        Rng rng(mix_seed(seed, step));
        for (auto& r : rows) r = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(table.rows) - 1));
        ParamSet grads = model.zeros_like();
        Tape tape;
        ParamBinding bind(tape, model, &grads);
        for (const auto& p : frozen_prefixes) bind.freeze_prefix(p);
        Var z = frozen ? tape.constant(gather_rows(z_cache, rows))
                       : encode_images(bind, encoder_config, tape.constant(stack_images(table, rows, encoder_config.input_size)),
                                       ops::BatchNormMode::train);
        const Var loss = bc_loss(bind, config.policy, z, gather_rows(table.proprio, rows), gather_rows(table.actions, rows));
        const double value = loss.value().item();
        if (!std::isfinite(value) || value > 1e6) {
            std::ostringstream msg;
            msg << "behavior cloning loss " << value << " (task " << to_string(env.task) << ", view " << env.view
                << ", seed " << seed << ", rows";
            for (auto r : rows) msg << ' ' << r;
            msg << ")";
            throw TrainingError(static_cast<std::int64_t>(step), msg.str());
        }
        tape.backward(loss);
        adam_step(model, grads, adam, config.learning_rate, frozen_prefixes);
        loss_sum += value;
        ++loss_count;
        if (next_eval < points.size() && step == points[next_eval]) {
            evaluate_now(step);
            ++next_eval;
        }
    }

    if (frozen) {
        if (subset(model, kEncoderPrefix).hash() != encoder_hash)
            throw TrainingError(static_cast<std::int64_t>(config.steps), "frozen encoder parameters changed");
    } else {
        z_cache = all_embeddings();
    }
    result.final_loss = dataset_loss(model, config.policy, z_cache, table);
    result.best_success = 0.0;
    for (const auto& c : result.curve) result.best_success = std::max(result.best_success, c.success);
    result.policy = subset(model, kPolicyPrefix);
    result.encoder = subset(model, kEncoderPrefix);
    return result;
}

std::string CellKey::file_stem() const {
    std::string task_name(to_string(task));
    return encoder + "__" + task_name + "__" + view + "__n" + std::to_string(demos) + "__s" + std::to_string(seed);
}

Aggregate aggregate(std::vector<double> values) {
    Aggregate a;
    a.n = values.size();
    if (values.empty()) return a;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    if (a.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stderr_ = std::sqrt(ss / static_cast<double>(a.n - 1)) / std::sqrt(static_cast<double>(a.n));
    }
    return a;
}

namespace {

std::string marginal_label(const CellRecord& c, Marginal by) {
    switch (by) {
    case Marginal::task: return std::string(to_string(c.key.task));
    case Marginal::view: return c.key.view;
    case Marginal::size: return std::to_string(c.key.demos);
    }
    return "";
}

std::string marginal_name(Marginal by) {
    switch (by) {
    case Marginal::task: return "task";
    case Marginal::view: return "view";
    case Marginal::size: return "demos";
    }
    return "";
}

json aggregate_json(const Aggregate& a) { return json{{"mean", a.mean}, {"stderr", a.stderr_}, {"n", a.n}}; }

json table_json(const std::map<std::string, std::map<std::string, Aggregate>>& t) {
    json out = json::object();
    for (const auto& [enc, cols] : t)
        for (const auto& [col, a] : cols) out[enc][col] = aggregate_json(a);
    return out;
}

} // namespace

std::map<std::string, std::map<std::string, Aggregate>> EvalReport::marginal(Marginal by) const {
    std::map<std::string, std::map<std::string, std::vector<double>>> groups;
    for (const auto& c : cells) {
        groups[c.key.encoder][marginal_label(c, by)].push_back(c.best_success);
        groups[c.key.encoder]["all"].push_back(c.best_success);
    }
    std::map<std::string, std::map<std::string, Aggregate>> out;
    for (auto& [enc, cols] : groups)
        for (auto& [col, vals] : cols) out[enc][col] = aggregate(std::move(vals));
    return out;
}

std::map<std::string, std::map<std::string, Aggregate>> EvalReport::table() const { return marginal(Marginal::task); }

void EvalReport::write_cells_csv(const std::filesystem::path& path) const {
    std::vector<const CellRecord*> sorted;
    for (const auto& c : cells) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key < b->key; });
    std::ostringstream out;
    out << "encoder,task,view,demos,seed,best_success,final_success,initial_loss,final_loss,seconds\n";
    for (const auto* c : sorted)
        out << c->key.encoder << ',' << to_string(c->key.task) << ',' << c->key.view << ',' << c->key.demos << ','
            << c->key.seed << ',' << format_double(c->best_success) << ','
            << format_double(c->curve.empty() ? 0.0 : c->curve.back().success) << ',' << format_double(c->initial_loss)
            << ',' << format_double(c->final_loss) << ',' << format_double(c->seconds) << '\n';
    write_atomic(path, out.str());
}

void EvalReport::write_table_csv(const std::filesystem::path& path, Marginal by) const {
    std::ostringstream out;
    out << "encoder," << marginal_name(by) << ",mean,stderr,n\n";
    for (const auto& [enc, cols] : marginal(by))
        for (const auto& [col, a] : cols)
            out << enc << ',' << col << ',' << format_double(a.mean) << ',' << format_double(a.stderr_) << ',' << a.n
                << '\n';
    write_atomic(path, out.str());
}

std::string EvalReport::to_json() const {
    json j;
    j["metric"] = "best_success";
    j["cells"] = cells.size();
    j["table"] = table_json(table());
    j["by_view"] = table_json(marginal(Marginal::view));
    j["by_demos"] = table_json(marginal(Marginal::size));
    return j.dump(2);
}

std::string cell_to_json(const CellRecord& cell, const KvConfig& config) {
    json j;
    j["encoder"] = cell.key.encoder;
    j["task"] = std::string(to_string(cell.key.task));
    j["view"] = cell.key.view;
    j["demos"] = cell.key.demos;
    j["seed"] = cell.key.seed;
    j["best_success"] = cell.best_success;
    j["initial_loss"] = cell.initial_loss;
    j["final_loss"] = cell.final_loss;
    j["seconds"] = cell.seconds;
    json curve = json::array();
    for (const auto& p : cell.curve) curve.push_back({{"step", p.step}, {"success", p.success}, {"train_loss", p.train_loss}});
    j["curve"] = curve;
    j["config"] = config.entries();
    return j.dump(2);
}

CellRecord cell_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        CellRecord c;
        c.key.encoder = j.at("encoder").get<std::string>();
        c.key.task = parse_task(j.at("task").get<std::string>());
        c.key.view = j.at("view").get<std::string>();
        c.key.demos = j.at("demos").get<std::size_t>();
        c.key.seed = j.at("seed").get<std::size_t>();
        c.best_success = j.at("best_success").get<double>();
        c.initial_loss = j.at("initial_loss").get<double>();
        c.final_loss = j.at("final_loss").get<double>();
        c.seconds = j.at("seconds").get<double>();
        for (const auto& p : j.at("curve"))
            c.curve.push_back({p.at("step").get<std::size_t>(), p.at("success").get<double>(),
                               p.at("train_loss").get<double>()});
        return c;
    } catch (const json::exception& e) {
        throw FormatError(0, std::string("cell file: ") + e.what());
    }
}

std::vector<CellKey> sweep_cells(const SweepConfig& config) {
    std::vector<CellKey> keys;
    for (const auto& e : config.encoders)
        for (auto t : config.tasks)
            for (const auto& v : config.views)
                for (auto n : config.demo_sizes)
                    for (std::size_t s = 0; s < config.bc.seeds; ++s) keys.push_back({e.name, t, v, n, s});
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::filesystem::path demo_dir(const std::filesystem::path& root, Task task, const std::string& view) {
    return root / std::string(to_string(task)) / view;
}

void collect_demo_sets(const std::filesystem::path& root, std::span<const Task> tasks,
                       std::span<const std::string> views, std::span<const std::size_t> sizes,
                       std::size_t render_size, std::uint64_t seed) {
    if (tasks.empty() || views.empty() || sizes.empty()) throw ArgumentError("collect-demos needs tasks, views and sizes");
    const std::size_t n = *std::max_element(sizes.begin(), sizes.end());
    KvConfig manifest;
    manifest.set("format", std::string("vlrep-demo-manifest"));
    manifest.set("version", static_cast<std::int64_t>(kDemoFormatVersion));
    manifest.set("seed", static_cast<std::int64_t>(seed));
    manifest.set("render_size", static_cast<std::int64_t>(render_size));
    manifest.set("sizes", std::vector<std::size_t>(sizes.begin(), sizes.end()));
    std::vector<std::string> task_names;
    for (auto t : tasks) {
        task_names.emplace_back(to_string(t));
        for (const auto& v : views) {
            EnvConfig ec;
            ec.task = t;
            ec.view = v;
            ec.render_size = render_size;
            // Same episode seeds for every view, so views show the same episodes.
            save_demos(collect_demos(ec, n, mix_seed(seed, static_cast<std::uint64_t>(t))), render_size,
                       demo_dir(root, t, v));
        }
    }
    manifest.set("tasks", task_names);
    manifest.set("views", std::vector<std::string>(views.begin(), views.end()));
    manifest.save(root / "manifest.kv");
}

namespace {

struct LoadedEncoder {
    ParamSet params;
    EncoderConfig config;
    EncoderMode mode = EncoderMode::frozen;
    std::uint64_t hash = 0;
};

LoadedEncoder load_encoder(const EncoderSpec& spec) {
    LoadedEncoder e;
    e.mode = spec.mode;
    if (spec.checkpoint.empty()) {
        e.config = spec.model.encoder;
        e.params = encoder_only(init_params(spec.model, spec.init_seed));
    } else {
        if (!std::filesystem::exists(spec.checkpoint))
            throw ConfigError("encoder '" + spec.name + "': checkpoint " + spec.checkpoint.string() + " does not exist");
        Checkpoint ck = load_checkpoint(spec.checkpoint);
        e.config = ck.pretrain_config().model.encoder;
        e.params = encoder_only(ck.params);
    }
    e.hash = e.params.hash();
    return e;
}

void check_demos(const SweepConfig& config) {
    const std::size_t need = config.demo_sizes.empty() ? 0 : *std::max_element(config.demo_sizes.begin(), config.demo_sizes.end());
    for (auto t : config.tasks)
        for (const auto& v : config.views) {
            const auto dir = demo_dir(config.demo_root, t, v);
            if (!std::filesystem::exists(dir / "demos.kv"))
                throw ConfigError("missing demonstrations for task " + std::string(to_string(t)) + ", view " + v +
                                  " (expected " + (dir / "demos.kv").string() + ")");
            const KvConfig idx = KvConfig::load(dir / "demos.kv");
            const auto count = static_cast<std::size_t>(idx.get_int("count", 0));
            if (count < need)
                throw ConfigError("demonstration set " + dir.string() + " holds " + std::to_string(count) + " demos, " +
                                  std::to_string(need) + " needed");
            if (idx.get_string("task", "") != to_string(t) || idx.get_string("view", "") != v)
                throw ConfigError("demonstration set " + dir.string() + " does not match its task/view");
        }
}

KvConfig cell_fingerprint(const SweepConfig& config, const CellKey& key, const LoadedEncoder& enc) {
    KvConfig kv;
    config.bc.write(kv);
    kv.erase("bc.seeds");
    kv.set("cell.encoder", key.encoder);
    kv.set("cell.encoder_mode", encoder_mode_name(enc.mode));
    kv.set("cell.encoder_hash", std::to_string(enc.hash));
    kv.set("cell.task", std::string(to_string(key.task)));
    kv.set("cell.view", key.view);
    kv.set("cell.demos", static_cast<std::int64_t>(key.demos));
    kv.set("cell.seed", static_cast<std::int64_t>(key.seed));
    return kv;
}

bool cell_is_current(const std::filesystem::path& path, const KvConfig& fingerprint) {
    if (!std::filesystem::exists(path)) return false;
    json j;
    try {
        j = json::parse(read_file(path));
        cell_from_json(j.dump());
    } catch (const std::exception&) {
        return false; // unreadable cell: recompute
    }
    const auto stored = j.value("config", json::object());
    if (stored != json(fingerprint.entries()))
        throw ConfigError("cell " + path.filename().string() +
                          " was produced with a different configuration; use a fresh output directory or --force");
    return true;
}

std::uint64_t cell_seed(const CellKey& key) {
    // Independent of the encoder, so encoders are compared on identical policy
    // initialisations and batch orders.
    const std::string tag = std::string(to_string(key.task)) + "/" + key.view + "/" + std::to_string(key.demos);
    return mix_seed(fnv1a(tag.data(), tag.size()), key.seed);
}

} // namespace

EvalReport run_sweep(const SweepConfig& config) {
    config.bc.validate();
    if (config.encoders.empty()) throw ConfigError("sweep needs at least one encoder");
    if (config.tasks.empty() || config.views.empty() || config.demo_sizes.empty())
        throw ConfigError("sweep needs tasks, views and demo sizes");
    std::set<std::string> names;
    for (const auto& e : config.encoders) {
        if (e.name.empty() || e.name.find_first_of("/\\ \t") != std::string::npos || e.name.find("__") != std::string::npos)
            throw ConfigError("encoder name '" + e.name + "' must be nonempty without slashes, spaces or '__'");
        if (!names.insert(e.name).second) throw ConfigError("duplicate encoder name '" + e.name + "'");
    }
    for (const auto& v : config.views) view_by_name(v);
    check_demos(config);

    std::map<std::string, LoadedEncoder> encoders;
    for (const auto& e : config.encoders) encoders.emplace(e.name, load_encoder(e));

    const auto cells_dir = config.out_dir / "cells";
    std::filesystem::create_directories(cells_dir);
    const auto keys = sweep_cells(config);
    std::vector<std::pair<CellKey, KvConfig>> pending;
    for (const auto& k : keys) {
        KvConfig fp = cell_fingerprint(config, k, encoders.at(k.encoder));
        if (!cell_is_current(cells_dir / (k.file_stem() + ".json"), fp)) pending.emplace_back(k, std::move(fp));
    }
    if (config.order_seed != 0) {
        Rng rng(config.order_seed);
        std::shuffle(pending.begin(), pending.end(), rng);
    }

    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            {
                std::lock_guard lock(err_mu);
                if (first_error) return;
            }
            try {
                const auto& [key, fp] = pending[i];
                const LoadedEncoder& enc = encoders.at(key.encoder);
                const auto t0 = std::chrono::steady_clock::now();
                const auto demos = load_demos(demo_dir(config.demo_root, key.task, key.view), key.demos);
                EnvConfig ec;
                ec.task = key.task;
                ec.view = key.view;
                ec.render_size = demos.front().observations.front().image.height;
                const BCResult r = bc_train(enc.params, enc.config, demos, ec, config.bc, enc.mode, cell_seed(key));
                CellRecord rec{key, r.best_success, r.curve, r.initial_loss, r.final_loss,
                               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
                write_atomic(cells_dir / (key.file_stem() + ".json"), cell_to_json(rec, fp));
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, pending.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    for (const auto& [name, enc] : encoders)
        if (enc.params.hash() != enc.hash) throw TrainingError(0, "encoder '" + name + "' changed during the sweep");

    EvalReport report;
    for (const auto& k : keys) report.cells.push_back(cell_from_json(read_file(cells_dir / (k.file_stem() + ".json"))));
    report.write_cells_csv(config.out_dir / "cells.csv");
    report.write_table_csv(config.out_dir / "table.csv", Marginal::task);
    report.write_table_csv(config.out_dir / "table_by_view.csv", Marginal::view);
    report.write_table_csv(config.out_dir / "table_by_demos.csv", Marginal::size);
    write_atomic(config.out_dir / "report.json", report.to_json());
    return report;
}

EvalReport load_report(const std::filesystem::path& out_dir) {
    const auto cells_dir = out_dir / "cells";
    if (!std::filesystem::is_directory(cells_dir)) throw ConfigError("no cell results under " + cells_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cells_dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    EvalReport report;
    for (const auto& f : files) report.cells.push_back(cell_from_json(read_file(f)));
    if (report.cells.empty()) throw ConfigError("no cell results under " + cells_dir.string());
    return report;
}

} // namespace vlrep
