/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

// vlrep: generate data, pretrain encoders, collect demonstrations, run the
// behavior-cloning sweep, probe checkpoints and print reports.

#include "vlrep/data.hpp"
#include "vlrep/error.hpp"
#include "vlrep/imitation.hpp"
#include "vlrep/kernels.hpp"
#include "vlrep/kvconfig.hpp"
#include "vlrep/pretrain.hpp"
#include "vlrep/probe.hpp"
#include "vlrep/version.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vlrep;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

/// Layered settings: built-in defaults, then --config file, then --set, then flags.
struct Settings {
    std::string config_file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "key = value file applied over the defaults");
        app->add_option("--set", sets, "key=value override (repeatable)");
    }

    /// A flag that writes `key` in the resolved config.
    void option(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        app->add_option_function<std::string>(flag, [this, key](const std::string& v) { flags[key] = v; }, help);
    }

    KvConfig resolve(KvConfig base) const {
        if (!config_file.empty()) {
            if (!fs::exists(config_file)) throw ConfigError("config file " + config_file + " does not exist");
            base.merge(KvConfig::load(config_file));
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
            base.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        for (const auto& [k, v] : flags) base.set(k, v);
        return base;
    }
};

std::string version_text() {
    return std::string("vlrep ") + kArtifactVersion + " (checkpoint format " + std::to_string(kCheckpointVersion) +
           ", dataset format " + std::to_string(kDatasetFormatVersion) + ", demo format " +
           std::to_string(kDemoFormatVersion) + ", kernels " + std::string(kernels::isa_name(kernels::active().isa)) + ")";
}

void stamp(KvConfig& kv) { kv.set("artifact.version", std::string(kArtifactVersion)); }

bool nonempty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

/// Refuses to write into a populated directory unless forced, in which case it is cleared.
void prepare_output(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (nonempty_dir(dir)) {
        if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

std::vector<std::string> csv_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& part : split(s, ',')) {
        const auto t = trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::vector<Task> parse_tasks(const std::vector<std::string>& names) {
    std::vector<Task> tasks;
    for (const auto& n : names) tasks.push_back(parse_task(n));
    if (tasks.empty()) throw ConfigError("no tasks given");
    return tasks;
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << text;
        if (!f) throw Error(ErrorClass::data, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint require_checkpoint(const fs::path& path) {
    if (path.empty()) throw ConfigError("no checkpoint given");
    if (!fs::is_regular_file(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
    return load_checkpoint(path);
}

ClipDataset heldout_set(const KvConfig& kv, const std::string& data_dir, std::size_t clips) {
    if (!data_dir.empty()) {
        if (!fs::exists(fs::path(data_dir) / "index.kv")) throw ConfigError("no dataset at " + data_dir);
        return load_dataset(data_dir);
    }
    DatasetConfig dc = DatasetConfig::read(kv);
    dc.split = Split::heldout;
    dc.n_clips = clips;
    return generate_synthetic_dataset(dc);
}

// ---- gen-data

struct GenData {
    Settings settings;
    std::string out;
    bool force = false;

    void attach(CLI::App* app) {
        settings.attach(app);
        app->add_option("--out", out, "dataset directory")->required();
        settings.option(app, "--clips", "data.n_clips", "number of clips");
        settings.option(app, "--frames", "data.frames", "frames per clip");
        settings.option(app, "--size", "data.render_size", "frame side length in pixels");
        settings.option(app, "--seed", "data.seed", "generator seed");
        settings.option(app, "--split", "data.split", "train or heldout");
        settings.option(app, "--jitter", "data.photometric_jitter", "per-frame photometric jitter strength");
        app->add_flag("--force", force, "overwrite a non-empty output directory");
    }

    int run() {
        KvConfig defaults;
        DatasetConfig{}.write(defaults);
        const DatasetConfig config = DatasetConfig::read(settings.resolve(defaults));
        prepare_output(out, force);
        save_dataset(generate_synthetic_dataset(config), out);
        KvConfig resolved;
        config.write(resolved);
        stamp(resolved);
        resolved.save(fs::path(out) / "run.kv");
        std::cout << "wrote " << config.n_clips << " clips to " << out << "\n";
        return 0;
    }
};

// ---- pretrain

struct Pretrain {
    Settings settings;
    std::string out, data;
    bool resume = false, force = false, quiet = false;
    std::size_t heldout_clips = 50;

    void attach(CLI::App* app) {
        settings.attach(app);
        app->add_option("--out", out, "run directory")->required();
        app->add_option("--data", data, "training dataset directory (default: generate from data.* settings)");
        settings.option(app, "--steps", "pretrain.steps", "optimizer steps");
        settings.option(app, "--lr", "pretrain.learning_rate", "Adam learning rate");
        settings.option(app, "--batch", "pretrain.batch_size", "clips per batch");
        settings.option(app, "--seed", "pretrain.seed", "initialisation and sampling seed");
        settings.option(app, "--variant", "pretrain.variant", "full, no_aug, no_l1 or no_lang");
        settings.option(app, "--eval-every", "pretrain.eval_every", "heldout probe period in steps (0 = off)");
        settings.option(app, "--checkpoint-every", "pretrain.checkpoint_every", "periodic checkpoint period");
        settings.option(app, "--l1", "loss.lambda3", "weight of the L1 penalty");
        settings.option(app, "--strict", "pretrain.strict_deterministic", "true: no batch prefetch thread");
        app->add_option("--heldout-clips", heldout_clips, "heldout clips for periodic probes");
        app->add_flag("--resume", resume, "continue from the run's last checkpoint");
        app->add_flag("--force", force, "overwrite a non-empty run directory");
        app->add_flag("--quiet", quiet, "no progress lines");
    }

    int run() {
        if (resume && force) throw ConfigError("--resume and --force are mutually exclusive");
        KvConfig defaults;
        PretrainConfig{}.write(defaults);
        DatasetConfig{}.write(defaults);
        const KvConfig kv = settings.resolve(defaults);
        PretrainConfig config = PretrainConfig::read(kv);
        config = make_ablation(config, parse_variant(config.variant));
        config.validate();
        DatasetConfig dc = DatasetConfig::read(kv);

        if (resume) {
            if (!fs::exists(fs::path(out) / "checkpoint.bin"))
                throw ConfigError("nothing to resume in " + out + " (no checkpoint.bin)");
        } else {
            prepare_output(out, force);
        }
        ClipDataset train;
        if (!data.empty()) {
            if (!fs::exists(fs::path(data) / "index.kv")) throw ConfigError("no dataset at " + data);
            train = load_dataset(data);
        } else {
            dc.split = Split::train;
            train = generate_synthetic_dataset(dc);
        }

        PretrainOptions options;
        options.out_dir = out;
        options.resume = resume;
        ClipDataset heldout;
        if (config.eval_every > 0) {
            heldout = heldout_set(kv, "", heldout_clips);
            options.evaluator = [&](ParamSet& params, std::int64_t) {
                const ProbeReport r = run_probes(params, config.model, heldout, ProbeConfig{});
                return std::map<std::string, double>{{"temporal_ordering", r.temporal_ordering_accuracy},
                                                     {"retrieval", r.language_retrieval_accuracy},
                                                     {"mean_abs_z", r.sparsity.mean_abs}};
            };
        }
        const std::int64_t every = std::max<std::int64_t>(1, config.steps / 20);
        if (!quiet)
            options.on_step = [&](const StepRecord& r) {
                if (r.step % every == 0 || r.step == config.steps)
                    std::fprintf(stderr, "step %lld/%lld  loss %.4f  (%.1f ms/step)\n", static_cast<long long>(r.step),
                                 static_cast<long long>(config.steps), r.loss.total, r.ms);
            };
        const PretrainResult result = pretrain(train, config, options);

        KvConfig resolved;
        config.write(resolved);
        if (data.empty()) dc.write(resolved);
        else resolved.set("data.dir", data);
        stamp(resolved);
        resolved.save(fs::path(out) / "run.kv");
        std::cout << "finished " << config.steps << " steps (" << config.variant << "), checkpoint "
                  << (fs::path(out) / "checkpoint.bin").string() << "\n";
        for (const auto& e : result.evals) {
            std::cout << "  step " << e.step;
            for (const auto& [k, v] : e.metrics) std::cout << "  " << k << " " << format_double(v);
            std::cout << "\n";
        }
        return 0;
    }
};

// ---- collect-demos

struct CollectDemos {
    std::string out, tasks = "reach,push,pick-place-2d", views = "front,zoom", sizes = "10,25";
    std::size_t render_size = 64;
    std::uint64_t seed = 1;
    bool force = false;

    void attach(CLI::App* app) {
        app->add_option("--out", out, "demonstration root")->required();
        app->add_option("--tasks", tasks, "comma-separated tasks")->capture_default_str();
        app->add_option("--views", views, "comma-separated camera views")->capture_default_str();
        app->add_option("--sizes", sizes, "comma-separated demo counts")->capture_default_str();
        app->add_option("--size", render_size, "render size in pixels")->capture_default_str();
        app->add_option("--seed", seed, "episode seed base")->capture_default_str();
        app->add_flag("--force", force, "overwrite a non-empty output directory");
    }

    int run() {
        const auto task_list = parse_tasks(csv_list(tasks));
        const auto view_list = csv_list(views);
        for (const auto& v : view_list) view_by_name(v);
        std::vector<std::size_t> size_list;
        for (const auto& s : csv_list(sizes)) {
            KvConfig tmp;
            tmp.set("n", s);
            const auto n = tmp.get_int("n", 0);
            if (n < 1) throw ConfigError("demo sizes must be positive");
            size_list.push_back(static_cast<std::size_t>(n));
        }
        if (view_list.empty() || size_list.empty()) throw ConfigError("need at least one view and one size");
        prepare_output(out, force);
        collect_demo_sets(out, task_list, view_list, size_list, render_size, seed);
        std::cout << "collected demonstrations for " << task_list.size() << " task(s) x " << view_list.size()
                  << " view(s) in " << out << "\n";
        return 0;
    }
};

// ---- bc-sweep

void print_table(const EvalReport& report, Marginal by, std::ostream& os) {
    os << "encoder";
    std::vector<std::string> cols;
    const auto t = report.marginal(by);
    for (const auto& [enc, row] : t)
        for (const auto& [col, a] : row)
            if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    for (const auto& c : cols) os << "\t" << c;
    os << "\n";
    for (const auto& [enc, row] : t) {
        os << enc;
        for (const auto& c : cols) {
            const auto it = row.find(c);
            if (it == row.end()) {
                os << "\t-";
                continue;
            }
            char buf[64];
            std::snprintf(buf, sizeof(buf), "\t%.1f +- %.1f", 100.0 * it->second.mean, 100.0 * it->second.stderr_);
            os << buf;
        }
        os << "\n";
    }
}

struct BcSweep {
    Settings settings;
    std::string demos, out;
    std::vector<std::string> encoders;
    bool random_frozen = false, scratch = false, force = false;
    std::uint64_t init_seed = 0;

    void attach(CLI::App* app) {
        settings.attach(app);
        app->add_option("--demos", demos, "demonstration root from collect-demos")->required();
        app->add_option("--out", out, "sweep directory (resumed if it exists)")->required();
        app->add_option("--encoder", encoders, "name=checkpoint (repeatable)");
        app->add_flag("--random-frozen", random_frozen, "add an untrained frozen encoder named 'random'");
        app->add_flag("--scratch", scratch, "add an encoder trained through the cloning loss named 'scratch'");
        app->add_option("--init-seed", init_seed, "initialisation seed of the random and scratch encoders");
        settings.option(app, "--tasks", "sweep.tasks", "comma-separated tasks");
        settings.option(app, "--views", "sweep.views", "comma-separated views");
        settings.option(app, "--sizes", "sweep.sizes", "comma-separated demo counts");
        settings.option(app, "--workers", "sweep.workers", "parallel cells");
        settings.option(app, "--order-seed", "sweep.order_seed", "shuffle cell execution order (0 = sorted)");
        settings.option(app, "--steps", "bc.steps", "cloning steps per cell");
        settings.option(app, "--eval-every", "bc.eval_every", "online evaluation period");
        settings.option(app, "--episodes", "bc.eval_episodes", "episodes per evaluation");
        settings.option(app, "--seeds", "bc.seeds", "seeds per cell");
        settings.option(app, "--lr", "bc.learning_rate", "policy learning rate");
        settings.option(app, "--batch", "bc.batch_size", "policy batch size");
        app->add_flag("--force", force, "discard existing cell results");
    }

    int run() {
        KvConfig defaults;
        BCConfig{}.write(defaults);
        defaults.set("sweep.tasks", std::string("push"));
        defaults.set("sweep.views", std::string("front"));
        defaults.set("sweep.sizes", std::string("25"));
        defaults.set("sweep.workers", std::int64_t{1});
        defaults.set("sweep.order_seed", std::int64_t{0});
        const KvConfig kv = settings.resolve(defaults);

        SweepConfig sc;
        sc.bc = BCConfig::read(kv);
        sc.tasks = parse_tasks(csv_list(kv.get_string("sweep.tasks", "")));
        sc.views = csv_list(kv.get_string("sweep.views", ""));
        sc.demo_sizes = kv.get_sizes("sweep.sizes", {});
        const auto workers = kv.get_int("sweep.workers", 1);
        if (workers < 1) throw ConfigError("sweep.workers must be >= 1");
        sc.workers = static_cast<std::size_t>(workers);
        sc.order_seed = static_cast<std::uint64_t>(kv.get_int("sweep.order_seed", 0));
        sc.demo_root = demos;
        sc.out_dir = out;

        std::optional<ModelConfig> model;
        for (const auto& e : encoders) {
            const auto eq = e.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == e.size())
                throw ConfigError("--encoder expects name=checkpoint, got '" + e + "'");
            EncoderSpec spec;
            spec.name = e.substr(0, eq);
            spec.checkpoint = e.substr(eq + 1);
            const Checkpoint ck = require_checkpoint(spec.checkpoint);
            spec.model = ck.pretrain_config().model;
            if (!model) model = spec.model;
            sc.encoders.push_back(spec);
        }
        for (const auto& [enabled, name, mode] :
             {std::tuple{random_frozen, "random", EncoderMode::frozen}, std::tuple{scratch, "scratch", EncoderMode::finetune}}) {
            if (!enabled) continue;
            EncoderSpec spec;
            spec.name = name;
            spec.mode = mode;
            spec.model = model ? *model : desk_model();
            spec.init_seed = init_seed;
            sc.encoders.push_back(spec);
        }
        if (sc.encoders.empty()) throw ConfigError("no encoders: pass --encoder, --random-frozen or --scratch");
        if (!fs::exists(fs::path(demos) / "manifest.kv")) throw ConfigError("no demonstration manifest under " + demos);
        if (force && fs::exists(out)) fs::remove_all(out);
        fs::create_directories(out);

        KvConfig resolved;
        sc.bc.write(resolved);
        for (const auto& k : {"sweep.tasks", "sweep.views", "sweep.sizes", "sweep.workers", "sweep.order_seed"})
            resolved.set(k, kv.get_string(k, ""));
        std::vector<std::string> enc_desc;
        for (const auto& e : sc.encoders)
            enc_desc.push_back(e.name + ":" + (e.checkpoint.empty() ? (e.mode == EncoderMode::frozen ? "random" : "scratch")
                                                                    : e.checkpoint.string()));
        resolved.set("sweep.encoders", enc_desc);
        resolved.set("sweep.demos", demos);
        resolved.set("sweep.init_seed", static_cast<std::int64_t>(init_seed));
        stamp(resolved);
        resolved.save(fs::path(out) / "run.kv");

        const EvalReport report = run_sweep(sc);
        std::cout << "best success (%) over " << report.cells.size() << " cells, mean +- standard error\n";
        print_table(report, Marginal::task, std::cout);
        return 0;
    }
};

// ---- probe

struct Probe {
    Settings settings;
    std::string checkpoint, data, out;
    std::size_t clips = 50;

    void attach(CLI::App* app) {
        settings.attach(app);
        app->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
        app->add_option("--data", data, "heldout dataset directory (default: generate from data.* settings)");
        app->add_option("--out", out, "report JSON file (default: stdout)");
        app->add_option("--clips", clips, "generated heldout clips")->capture_default_str();
        settings.option(app, "--triplets", "probe.triplets", "temporal ordering triplets");
        settings.option(app, "--distractors", "probe.distractors", "retrieval distractor sentences");
        settings.option(app, "--seed", "probe.seed", "probe sampling seed");
    }

    int run() {
        ProbeConfig pc;
        KvConfig defaults;
        DatasetConfig{}.write(defaults);
        defaults.set("probe.triplets", static_cast<std::int64_t>(pc.n_triplets));
        defaults.set("probe.distractors", static_cast<std::int64_t>(pc.distractors));
        defaults.set("probe.seed", static_cast<std::int64_t>(pc.seed));
        const KvConfig kv = settings.resolve(defaults);
        const auto count = [&](const char* key) {
            const auto v = kv.get_int(key, 0);
            if (v < 0) throw ConfigError(std::string(key) + " must be >= 0");
            return static_cast<std::size_t>(v);
        };
        pc.n_triplets = count("probe.triplets");
        pc.distractors = count("probe.distractors");
        pc.seed = count("probe.seed");

        Checkpoint ck = require_checkpoint(checkpoint);
        const ModelConfig model = ck.pretrain_config().model;
        const ClipDataset heldout = heldout_set(kv, data, clips);
        const ProbeReport report = run_probes(ck.params, model, heldout, pc);
        const std::string json = report.to_json();
        if (out.empty()) {
            std::cout << json << "\n";
        } else {
            if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
            write_text(out, json + "\n");
            std::cout << "temporal ordering " << format_double(report.temporal_ordering_accuracy) << ", retrieval "
                      << format_double(report.language_retrieval_accuracy) << " -> " << out << "\n";
        }
        return 0;
    }
};

// ---- report

struct Report {
    std::string sweep, by = "task", out;

    void attach(CLI::App* app) {
        app->add_option("--sweep", sweep, "sweep directory")->required();
        app->add_option("--by", by, "task, view or size")->check(CLI::IsMember({"task", "view", "size"}))->capture_default_str();
        app->add_option("--out", out, "CSV file (default: table on stdout)");
    }

    int run() {
        const EvalReport report = load_report(sweep);
        const Marginal m = by == "view" ? Marginal::view : by == "size" ? Marginal::size : Marginal::task;
        if (out.empty()) {
            print_table(report, m, std::cout);
        } else {
            report.write_table_csv(out, m);
            std::cout << "wrote " << out << "\n";
        }
        return 0;
    }
};

int exit_code(const Error& e) {
    switch (e.error_class()) {
    case ErrorClass::config: return kExitConfig;
    case ErrorClass::data: return kExitData;
    case ErrorClass::numerical: return kExitNumerical;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale lab for time-contrastive and video-language representation pretraining"};
    app.set_version_flag("--version", version_text());
    app.require_subcommand(1);

    GenData gen_data;
    Pretrain pretrain_cmd;
    CollectDemos collect;
    BcSweep sweep;
    Probe probe;
    Report report;
    std::function<int()> action;
    auto bind = [&](auto& cmd, const char* name, const char* help) {
        CLI::App* sub = app.add_subcommand(name, help);
        cmd.attach(sub);
        sub->callback([&cmd, &action] { action = [&cmd] { return cmd.run(); }; });
    };
    bind(gen_data, "gen-data", "generate a synthetic clip dataset");
    bind(pretrain_cmd, "pretrain", "pretrain an encoder (optionally an ablation variant)");
    bind(collect, "collect-demos", "collect scripted demonstrations per task and view");
    bind(sweep, "bc-sweep", "behavior cloning sweep over encoders, tasks, views, sizes and seeds");
    bind(probe, "probe", "heldout temporal-ordering, retrieval and sparsity probes");
    bind(report, "report", "aggregate sweep cell files into a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
