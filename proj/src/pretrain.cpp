/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/pretrain.hpp"

#include "vlrep/error.hpp"
#include "vlrep/kernels.hpp"

#include "json.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <sstream>

namespace vlrep {
namespace {

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

// Little-endian byte writer / bounds-checked reader.
class Writer {
  public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

  private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
    std::uint64_t u64() { return get(8, "u64"); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8, "i64")); }
    double f64() { return std::bit_cast<double>(get(8, "f64")); }
    std::string str(std::size_t limit) {
        const std::uint64_t at = pos_;
        const std::uint64_t n = u64();
        if (n > limit || n > size_ - pos_) throw FormatError(at, "string length " + std::to_string(n) + " out of range");
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

  private:
    std::uint64_t get(int n, const char* what) {
        if (size_ - pos_ < static_cast<std::size_t>(n))
            throw FormatError(pos_, std::string("unexpected end of data reading ") + what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'V', 'L', 'R', 'E', 'P', 'C', 'K', 'P'};

void write_table(Writer& w, const ParamSet& ps) {
    w.u32(static_cast<std::uint32_t>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& name = ps.name(i);
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u8(ps.trainable(i) ? 1 : 0);
        const auto& t = ps.tensor(i);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) w.u64(d);
        for (double v : t.values()) w.f64(v);
    }
}

ParamSet read_table(Reader& r) {
    ParamSet ps;
    const std::size_t at = r.pos();
    const std::uint32_t n = r.u32();
    if (n > r.remaining()) throw FormatError(at, "tensor count " + std::to_string(n) + " exceeds file size");
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t name_at = r.pos();
        const std::uint32_t len = r.u32();
        if (len > 4096 || len > r.remaining()) throw FormatError(name_at, "tensor name length out of range");
        std::string name;
        for (std::uint32_t c = 0; c < len; ++c) name.push_back(static_cast<char>(r.u8()));
        const std::uint8_t flag = r.u8();
        if (flag > 1) throw FormatError(r.pos() - 1, "bad trainable flag");
        const std::size_t rank_at = r.pos();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw FormatError(rank_at, "tensor rank " + std::to_string(rank) + " out of range");
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            if (dim != 0 && numel > r.remaining() / dim) throw FormatError(rank_at, "tensor '" + name + "' too large");
            numel *= dim;
            shape.push_back(dim);
        }
        if (numel * 8 > r.remaining()) throw FormatError(r.pos(), "tensor '" + name + "' data truncated");
        std::vector<double> values(numel);
        for (auto& v : values) v = r.f64();
        if (ps.contains(name)) throw FormatError(name_at, "duplicate tensor '" + name + "'");
        ps.add(name, Tensor(shape, std::move(values)), flag == 1);
    }
    return ps;
}

std::string stem_for_step(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%06lld.bin", static_cast<long long>(step));
    return buf;
}

void write_loss_config(KvConfig& kv, const LossConfig& l) {
    kv.set("loss.lambda1", l.lambda1);
    kv.set("loss.lambda2", l.lambda2);
    kv.set("loss.lambda3", l.lambda3);
    kv.set("loss.lambda4", l.lambda4);
    kv.set("loss.n_cross_negatives", static_cast<std::int64_t>(l.n_cross_negatives));
    kv.set("loss.reduce", std::string(l.reduce == Reduce::sum ? "sum" : "mean"));
    kv.set("loss.l2_squared", l.l2_squared);
    kv.set("loss.penalize_all_frames", l.penalize_all_frames);
}

LossConfig read_loss_config(const KvConfig& kv) {
    LossConfig l;
    l.lambda1 = kv.get_double("loss.lambda1", l.lambda1);
    l.lambda2 = kv.get_double("loss.lambda2", l.lambda2);
    l.lambda3 = kv.get_double("loss.lambda3", l.lambda3);
    l.lambda4 = kv.get_double("loss.lambda4", l.lambda4);
    const auto n = kv.get_int("loss.n_cross_negatives", static_cast<std::int64_t>(l.n_cross_negatives));
    if (n < 1) throw ConfigError("loss.n_cross_negatives must be >= 1");
    l.n_cross_negatives = static_cast<std::size_t>(n);
    const auto reduce = kv.get_string("loss.reduce", "sum");
    if (reduce == "sum") l.reduce = Reduce::sum;
    else if (reduce == "mean") l.reduce = Reduce::mean;
    else throw ConfigError("loss.reduce must be sum or mean, got '" + reduce + "'");
    l.l2_squared = kv.get_bool("loss.l2_squared", l.l2_squared);
    l.penalize_all_frames = kv.get_bool("loss.penalize_all_frames", l.penalize_all_frames);
    return l;
}

std::string csv_double(double v) { return format_double(v); }

} // namespace

AdamState AdamState::init(const ParamSet& params, AdamConfig hp) {
    return {params.zeros_like(), params.zeros_like(), 0, hp};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const std::vector<std::string>& frozen_prefixes) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw DimensionError("adam_step: parameter, gradient and moment sets differ in size");
    const std::int64_t t = state.t + 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads.name(i) != params.name(i)) throw DimensionError("adam_step: gradient order differs from parameters");
        const auto& shape = params.tensor(i).shape();
        if (grads.tensor(i).shape() != shape || state.m.tensor(i).shape() != shape || state.v.tensor(i).shape() != shape)
            throw DimensionError("adam_step: shape mismatch for " + params.name(i));
        if (!grads.tensor(i).all_finite()) throw TrainingError(t, "non-finite gradient in " + params.name(i));
    }
    state.t = t;
    const double bias1 = 1.0 - std::pow(state.hp.beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(state.hp.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.trainable(i) || has_prefix(params.name(i), frozen_prefixes)) continue;
        auto& theta = params.tensor(i);
        kernels::adam_update(theta.data(), grads.tensor(i).data(), state.m.tensor(i).data(), state.v.tensor(i).data(),
                             theta.size(), state.hp.beta1, state.hp.beta2, state.hp.eps, lr, bias1, bias2);
    }
}

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::full: return "full";
    case Variant::no_aug: return "no_aug";
    case Variant::no_l1: return "no_l1";
    case Variant::no_lang: return "no_lang";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    for (auto v : kVariants)
        if (to_string(v) == s) return v;
    throw ArgumentError("unknown variant '" + std::string(s) + "' (expected full, no_aug, no_l1 or no_lang)");
}

ModelConfig desk_model() {
    ModelConfig m;
    m.sentence.vocabulary = task_vocabulary();
    return m;
}

void PretrainConfig::validate() const {
    if (steps < 1) throw ArgumentError("steps must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be >= 0");
    if (batch_size < 2) throw ArgumentError("batch_size must be >= 2");
    if (eval_every < 0 || checkpoint_every < 0) throw ArgumentError("eval_every and checkpoint_every must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0))
        throw ArgumentError("adam betas must lie in [0, 1) and eps must be positive");
    parse_variant(variant);
    loss.validate();
    model.validate();
}

void PretrainConfig::write(KvConfig& kv) const {
    kv.set("pretrain.steps", steps);
    kv.set("pretrain.learning_rate", learning_rate);
    kv.set("pretrain.batch_size", static_cast<std::int64_t>(batch_size));
    kv.set("pretrain.augment", augment);
    kv.set("pretrain.seed", static_cast<std::int64_t>(seed));
    kv.set("pretrain.eval_every", eval_every);
    kv.set("pretrain.checkpoint_every", checkpoint_every);
    kv.set("pretrain.adam_beta1", adam.beta1);
    kv.set("pretrain.adam_beta2", adam.beta2);
    kv.set("pretrain.adam_eps", adam.eps);
    kv.set("pretrain.variant", variant);
    kv.set("pretrain.strict_deterministic", strict_deterministic);
    write_loss_config(kv, loss);
    model.write(kv);
}

PretrainConfig PretrainConfig::read(const KvConfig& kv) {
    PretrainConfig c;
    c.steps = kv.get_int("pretrain.steps", c.steps);
    c.learning_rate = kv.get_double("pretrain.learning_rate", c.learning_rate);
    const auto bsz = kv.get_int("pretrain.batch_size", static_cast<std::int64_t>(c.batch_size));
    if (bsz < 0) throw ConfigError("pretrain.batch_size must be positive");
    c.batch_size = static_cast<std::size_t>(bsz);
    c.augment = kv.get_bool("pretrain.augment", c.augment);
    c.seed = static_cast<std::uint64_t>(kv.get_int("pretrain.seed", static_cast<std::int64_t>(c.seed)));
    c.eval_every = kv.get_int("pretrain.eval_every", c.eval_every);
    c.checkpoint_every = kv.get_int("pretrain.checkpoint_every", c.checkpoint_every);
    c.adam.beta1 = kv.get_double("pretrain.adam_beta1", c.adam.beta1);
    c.adam.beta2 = kv.get_double("pretrain.adam_beta2", c.adam.beta2);
    c.adam.eps = kv.get_double("pretrain.adam_eps", c.adam.eps);
    c.variant = kv.get_string("pretrain.variant", c.variant);
    c.strict_deterministic = kv.get_bool("pretrain.strict_deterministic", c.strict_deterministic);
    c.loss = read_loss_config(kv);
    const ModelConfig defaults = c.model;
    c.model = ModelConfig::read(kv);
    if (!kv.has("sentence.vocabulary")) c.model.sentence.vocabulary = defaults.sentence.vocabulary;
    return c;
}

std::vector<std::string> PretrainConfig::frozen_prefixes() const {
    if (loss.lambda2 == 0.0) return {kHeadPrefix, kSentencePrefix};
    return {};
}

PretrainConfig make_ablation(const PretrainConfig& base, Variant variant) {
    PretrainConfig c = base;
    c.variant = std::string(to_string(variant));
    switch (variant) {
    case Variant::full: break;
    case Variant::no_aug: c.augment = false; break;
    case Variant::no_l1: c.loss.lambda3 = 0.0; break;
    case Variant::no_lang: c.loss.lambda2 = 0.0; break;
    }
    return c;
}

void RunningStats::update(double total) {
    ++count;
    mean_total += (total - mean_total) / static_cast<double>(count);
    ema_total = count == 1 ? total : 0.99 * ema_total + 0.01 * total;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt, std::uint32_t version) {
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(version);
    w.str(ckpt.config.serialize());
    w.i64(ckpt.step);
    w.u64(ckpt.stats.count);
    w.f64(ckpt.stats.mean_total);
    w.f64(ckpt.stats.ema_total);
    write_table(w, ckpt.params);
    w.u8(ckpt.adam ? 1 : 0);
    if (ckpt.adam) {
        w.i64(ckpt.adam->t);
        w.f64(ckpt.adam->hp.beta1);
        w.f64(ckpt.adam->hp.beta2);
        w.f64(ckpt.adam->hp.eps);
        write_table(w, ckpt.adam->m);
        write_table(w, ckpt.adam->v);
    }
    const std::uint64_t sum = fnv1a(w.bytes().data(), w.bytes().size());
    w.u64(sum);
    return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError(0, "missing checkpoint magic bytes");
    Reader head(bytes.data() + sizeof(kMagic), bytes.size() - sizeof(kMagic));
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion) throw VersionError(version, kCheckpointVersion);
    if (bytes.size() < sizeof(kMagic) + 4 + 8) throw FormatError(bytes.size(), "checkpoint truncated");
    const std::size_t body = bytes.size() - 8;
    Reader tail(bytes.data() + body, 8);
    if (tail.u64() != fnv1a(bytes.data(), body)) throw FormatError(body, "checksum mismatch (corrupt or truncated)");

    Reader r(bytes.data(), body);
    for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.u8();
    r.u32();
    Checkpoint c;
    const std::size_t config_at = r.pos();
    try {
        c.config = KvConfig::parse(r.str(1u << 24));
    } catch (const ConfigError& e) {
        throw FormatError(config_at, std::string("bad config record: ") + e.what());
    }
    c.step = r.i64();
    c.stats.count = r.u64();
    c.stats.mean_total = r.f64();
    c.stats.ema_total = r.f64();
    c.params = read_table(r);
    const std::uint8_t has_adam = r.u8();
    if (has_adam > 1) throw FormatError(r.pos() - 1, "bad optimizer flag");
    if (has_adam) {
        AdamState s;
        s.t = r.i64();
        s.hp.beta1 = r.f64();
        s.hp.beta2 = r.f64();
        s.hp.eps = r.f64();
        s.m = read_table(r);
        s.v = read_table(r);
        c.adam = std::move(s);
    }
    if (r.remaining() != 0) throw FormatError(r.pos(), "trailing bytes after checkpoint body");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorClass::data, "cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorClass::data, "cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

ParamSet initial_params(const PretrainConfig& config) { return init_params(config.model, config.seed); }

namespace {

struct PreparedBatch {
    BatchSample sample;
    Tensor images;
    std::vector<std::vector<std::uint32_t>> annotations;
};

PreparedBatch prepare(const ClipDataset& data, const PretrainConfig& cfg, std::int64_t step) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const BatchOptions opt{cfg.batch_size, cfg.loss.n_cross_negatives, cfg.augment, cfg.model.encoder.input_size};
    PreparedBatch b;
    b.sample = sample_batch(data, opt, rng);
    b.images = assemble_images(data, b.sample);
    b.annotations = assemble_annotations(data, b.sample);
    return b;
}

std::string describe_batch(const BatchSample& b) {
    std::ostringstream os;
    for (std::size_t i = 0; i < b.entries.size(); ++i) {
        const auto& e = b.entries[i];
        const auto r = e.frames.roles();
        os << (i ? "; " : "") << "clip " << e.clip << " frames " << r[0] << "," << r[1] << "," << r[2] << "," << r[3]
           << "," << r[4];
    }
    return os.str();
}

const char* kCsvHeader = "step,tcn,language,l1,l2,l1_weighted,l2_weighted,total,ms";

std::string csv_row(const StepRecord& s) {
    return std::to_string(s.step) + "," + csv_double(s.loss.tcn) + "," + csv_double(s.loss.language) + "," +
           csv_double(s.loss.l1) + "," + csv_double(s.loss.l2) + "," + csv_double(s.l1_weighted) + "," +
           csv_double(s.l2_weighted) + "," + csv_double(s.loss.total) + "," + csv_double(s.ms);
}

// Keeps the header and rows with step <= `last`, so a resumed run appends cleanly.
void truncate_csv(const std::filesystem::path& path, std::int64_t last) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (keep.empty()) {
            keep.push_back(line);
            continue;
        }
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) <= last) keep.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

} // namespace

PretrainResult pretrain(const ClipDataset& train, const PretrainConfig& config, const PretrainOptions& options) {
    config.validate();
    if (train.size() < 2) throw BatchCompositionError("pretraining needs at least 2 clips");
    if (train.vocabulary != config.model.sentence.vocabulary)
        throw VocabularyError("dataset vocabulary differs from the model's sentence vocabulary");
    namespace fs = std::filesystem;
    const bool to_disk = !options.out_dir.empty();

    KvConfig resolved;
    config.write(resolved);

    PretrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.config = resolved;
    std::int64_t start = 0;
    const fs::path latest = to_disk ? options.out_dir / "checkpoint.bin" : fs::path();
    if (options.resume && to_disk && fs::exists(latest)) {
        ck = load_checkpoint(latest);
        if (ck.config.serialize() != resolved.serialize()) {
            // Only the step budget may change between a run and its continuation.
            KvConfig a = ck.config, b = resolved;
            a.set("pretrain.steps", std::int64_t{0});
            b.set("pretrain.steps", std::int64_t{0});
            if (a.serialize() != b.serialize()) throw ConfigError("resume: configuration differs from the checkpoint");
            ck.config = resolved;
        }
        if (!ck.adam) throw FormatError(0, "resume: checkpoint has no optimizer state");
        start = ck.step;
    } else {
        ck.params = initial_params(config);
        ck.adam = AdamState::init(ck.params, config.adam);
    }
    AdamState& adam = *ck.adam;
    const auto frozen = config.frozen_prefixes();

    std::ofstream csv, evals_csv;
    if (to_disk) {
        fs::create_directories(options.out_dir / "checkpoints");
        resolved.save(options.out_dir / "config.kv");
        const auto metrics_path = options.out_dir / "metrics.csv";
        if (start > 0) truncate_csv(metrics_path, start);
        else fs::remove(metrics_path);
        const bool fresh = !fs::exists(metrics_path);
        csv.open(metrics_path, std::ios::app);
        if (fresh) csv << kCsvHeader << "\n";
        const auto evals_path = options.out_dir / "evals.csv";
        if (start > 0) truncate_csv(evals_path, start);
        else fs::remove(evals_path);
        evals_csv.open(evals_path, std::ios::app);
    }
    bool evals_header = to_disk && fs::file_size(options.out_dir / "evals.csv") > 0;

    auto run_eval = [&](std::int64_t step) {
        if (!options.evaluator) return;
        EvalRecord rec{step, options.evaluator(ck.params, step)};
        if (to_disk) {
            if (!evals_header) {
                evals_csv << "step";
                for (const auto& [k, v] : rec.metrics) evals_csv << "," << k;
                evals_csv << "\n";
                evals_header = true;
            }
            evals_csv << step;
            for (const auto& [k, v] : rec.metrics) evals_csv << "," << csv_double(v);
            evals_csv << "\n" << std::flush;
        }
        result.evals.push_back(std::move(rec));
    };
    auto write_checkpoint = [&](const fs::path& path) {
        save_checkpoint(path, ck);
    };

    std::future<PreparedBatch> next;
    auto fetch = [&](std::int64_t step) {
        if (config.strict_deterministic) return prepare(train, config, step);
        PreparedBatch b = next.valid() ? next.get() : prepare(train, config, step);
        if (step < config.steps) next = std::async(std::launch::async, prepare, std::cref(train), std::cref(config), step + 1);
        return b;
    };

    for (std::int64_t step = start + 1; step <= config.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const PreparedBatch batch = fetch(step);

        ParamSet grads = ck.params.zeros_like();
        Tape tape;
        ParamBinding bind(tape, ck.params, &grads);
        for (const auto& p : frozen) bind.freeze_prefix(p);
        const LossTerms terms = total_loss(bind, config.model, tape.constant(batch.images), batch.annotations,
                                           batch.sample.layout(), config.loss, ops::BatchNormMode::train);
        const LossBreakdown lb = terms.values();
        if (!std::isfinite(lb.total) || std::fabs(lb.total) > 1e6) {
            const std::string where = describe_batch(batch.sample);
            if (to_disk) {
                std::ofstream dump(options.out_dir / "divergence.txt", std::ios::trunc);
                dump << "step " << step << " total " << lb.total << "\n" << where << "\n";
            }
            throw TrainingError(step, "loss diverged (total " + csv_double(lb.total) + ") on batch [" + where + "]");
        }
        tape.backward(terms.total);
        adam_step(ck.params, grads, adam, config.learning_rate, frozen);
        ck.step = step;
        ck.stats.update(lb.total);

        StepRecord rec;
        rec.step = step;
        rec.loss = lb;
        rec.l1_weighted = config.loss.lambda3 * lb.l1;
        rec.l2_weighted = config.loss.lambda4 * lb.l2;
        rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (to_disk) csv << csv_row(rec) << "\n";
        if (options.on_step) options.on_step(rec);
        result.metrics.push_back(rec);

        if (config.eval_every > 0 && step % config.eval_every == 0) run_eval(step);
        if (to_disk && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
            csv.flush();
            write_checkpoint(options.out_dir / "checkpoints" / stem_for_step(step));
            write_checkpoint(latest);
        }
    }
    if (next.valid()) next.wait();

    if (to_disk) {
        csv.flush();
        write_checkpoint(latest);
        nlohmann::json summary;
        summary["variant"] = config.variant;
        summary["steps"] = ck.step;
        summary["seed"] = config.seed;
        summary["resumed_from"] = start;
        summary["mean_total"] = ck.stats.mean_total;
        summary["ema_total"] = ck.stats.ema_total;
        summary["param_hash"] = ck.params.hash();
        if (!result.metrics.empty()) {
            const auto& last = result.metrics.back();
            summary["final"] = {{"tcn", last.loss.tcn},     {"language", last.loss.language}, {"l1", last.loss.l1},
                                {"l2", last.loss.l2},       {"total", last.loss.total}};
            double ms = 0.0;
            for (const auto& m : result.metrics) ms += m.ms;
            summary["mean_step_ms"] = ms / static_cast<double>(result.metrics.size());
        }
        if (!result.evals.empty()) summary["last_eval"] = result.evals.back().metrics;
        std::ofstream(options.out_dir / "summary.json", std::ios::trunc) << summary.dump(2) << "\n";
    }
    return result;
}

} // namespace vlrep
