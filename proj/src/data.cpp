/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/data.hpp"

#include "vlrep/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vlrep {
namespace {

constexpr double kApproachEnd = 0.30;
constexpr double kPushEnd = 0.75;
constexpr double kRetreat = 0.15;

double smoothstep(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * (3.0 - 2.0 * s);
}

Vec2 lerp(Vec2 a, Vec2 b, double s) { return a + s * (b - a); }

Vec2 unit(Vec2 v) {
    const double n = v.norm();
    return n > 0.0 ? (1.0 / n) * v : Vec2{1.0, 0.0};
}

std::string clip_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05zu", index);
    return buf;
}

void set_vec(KvConfig& kv, const std::string& key, Vec2 v) {
    kv.set(key, format_double(v.x) + "," + format_double(v.y));
}

Vec2 get_vec(const KvConfig& kv, const std::string& key) {
    const auto parts = split(kv.get_string(key, ""), ',');
    if (parts.size() != 2) throw ConfigError("'" + key + "' must hold two comma-separated numbers");
    try {
        return {std::stod(parts[0]), std::stod(parts[1])};
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' is not numeric");
    }
}

} // namespace

void apply_photometric_jitter(Image& frame, double strength, std::uint64_t seed) {
    Rng rng(seed);
    const double gain = uniform(rng, 1.0 - strength, 1.0 + strength);
    double offset[3];
    for (auto& o : offset) o = uniform(rng, -0.5 * strength, 0.5 * strength) * 255.0;
    for (std::size_t i = 0; i < frame.rgb.size(); ++i) {
        const double v = gain * frame.rgb[i] + offset[i % 3];
        frame.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
}

std::string_view to_string(Split s) { return s == Split::train ? "train" : "heldout"; }

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "heldout") return Split::heldout;
    throw ArgumentError("unknown split '" + std::string(s) + "'");
}

const std::vector<std::string>& task_vocabulary() {
    static const std::vector<std::string> vocab = [] {
        std::vector<std::string> v{"move", "the", "to"};
        for (auto c : kColors) v.emplace_back(to_string(c));
        for (auto s : kShapes) v.emplace_back(to_string(s));
        for (auto r : kRegions) v.emplace_back(to_string(r));
        return v;
    }();
    return vocab;
}

std::vector<std::string> describe(ColorName color, ShapeKind shape, Region region) {
    return {"move", "the", std::string(to_string(color)), std::string(to_string(shape)), "to", "the",
            std::string(to_string(region))};
}

std::vector<std::uint32_t> ClipDataset::token_ids(std::size_t c) const {
    std::vector<std::uint32_t> ids;
    for (const auto& tok : clips.at(c).annotation) {
        const auto it = std::find(vocabulary.begin(), vocabulary.end(), tok);
        if (it == vocabulary.end()) throw VocabularyError("token '" + tok + "' not in dataset vocabulary");
        ids.push_back(static_cast<std::uint32_t>(it - vocabulary.begin()));
    }
    return ids;
}

void ClipDataset::validate() const {
    if (clips.size() < 2) throw BatchCompositionError("a dataset needs at least 2 clips");
    for (std::size_t c = 0; c < clips.size(); ++c) {
        const auto& clip = clips[c];
        if (clip.length() < 5) throw DegenerateClipError("clip " + std::to_string(c) + " has fewer than 5 frames");
        for (const auto& f : clip.frames)
            if (f.height != render_size || f.width != render_size)
                throw DimensionError("clip " + std::to_string(c) + " frame size differs from the dataset");
        token_ids(c);
    }
}

void DatasetConfig::validate() const {
    if (n_clips < 2) throw ArgumentError("n_clips must be at least 2");
    if (frames < 5) throw ArgumentError("frames per clip must be at least 5");
    if (render_size < 8) throw ArgumentError("render_size must be at least 8");
    if (!(photometric_jitter >= 0.0 && photometric_jitter < 1.0)) throw ArgumentError("photometric_jitter must lie in [0, 1)");
    if (task_family != "push2d") throw ArgumentError("unknown task_family '" + task_family + "'");
}

void DatasetConfig::write(KvConfig& kv) const {
    kv.set("data.n_clips", static_cast<std::int64_t>(n_clips));
    kv.set("data.frames", static_cast<std::int64_t>(frames));
    kv.set("data.render_size", static_cast<std::int64_t>(render_size));
    kv.set("data.seed", static_cast<std::int64_t>(seed));
    kv.set("data.task_family", task_family);
    kv.set("data.split", std::string(to_string(split)));
    kv.set("data.photometric_jitter", photometric_jitter);
}

DatasetConfig DatasetConfig::read(const KvConfig& kv) {
    DatasetConfig c;
    auto nonneg = [&](const char* key, std::size_t fallback) {
        const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
        if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
        return static_cast<std::size_t>(v);
    };
    c.n_clips = nonneg("data.n_clips", c.n_clips);
    c.frames = nonneg("data.frames", c.frames);
    c.render_size = nonneg("data.render_size", c.render_size);
    c.seed = static_cast<std::uint64_t>(kv.get_int("data.seed", static_cast<std::int64_t>(c.seed)));
    c.task_family = kv.get_string("data.task_family", c.task_family);
    c.split = parse_split(kv.get_string("data.split", std::string(to_string(c.split))));
    c.photometric_jitter = kv.get_double("data.photometric_jitter", c.photometric_jitter);
    return c;
}

std::uint64_t clip_seed(std::uint64_t dataset_seed, Split split, std::size_t index) {
    return mix_seed(mix_seed(dataset_seed, split == Split::train ? 0x7261696eULL : 0x68656c64ULL), index);
}

VideoClip generate_clip(std::uint64_t seed, std::size_t frames, std::size_t render_size, double jitter) {
    if (frames < 5) throw ArgumentError("a clip needs at least 5 frames");
    Rng rng(seed);
    VideoClip clip;
    ClipMeta& m = clip.meta;
    m.seed = seed;
    m.color = kColors[static_cast<std::size_t>(uniform_int(rng, 0, kColors.size() - 1))];
    m.shape = kShapes[static_cast<std::size_t>(uniform_int(rng, 0, kShapes.size() - 1))];
    m.region = kRegions[static_cast<std::size_t>(uniform_int(rng, 0, kRegions.size() - 1))];
    const RegionBox box = region_box(m.region);
    const double slack = box.half_size - 0.06;
    m.object_goal = {box.center.x + uniform(rng, -slack, slack), box.center.y + uniform(rng, -slack, slack)};
    do {
        m.object_start = {uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85)};
    } while (box.contains(m.object_start) || (m.object_start - m.object_goal).norm() < 0.3);
    do {
        m.agent_start = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)};
    } while ((m.agent_start - m.object_start).norm() < 0.15);
    clip.annotation = describe(m.color, m.shape, m.region);

    const Vec2 dir = unit(m.object_goal - m.object_start);
    const double gap = kObjectRadius + kAgentRadius;
    const Vec2 contact = m.object_start - gap * dir;
    SceneState scene{m.agent_start, false, m.object_start, m.shape, m.color, std::nullopt};
    const View& view = standard_views()[0];
    for (std::size_t t = 0; t < frames; ++t) {
        const double s = static_cast<double>(t) / static_cast<double>(frames - 1);
        if (s <= kApproachEnd) {
            scene.object = m.object_start;
            scene.agent = lerp(m.agent_start, contact, smoothstep(s / kApproachEnd));
        } else if (s <= kPushEnd) {
            const double p = smoothstep((s - kApproachEnd) / (kPushEnd - kApproachEnd));
            scene.object = lerp(m.object_start, m.object_goal, p);
            scene.agent = scene.object - gap * dir;
        } else {
            scene.object = m.object_goal;
            const double back = kRetreat * smoothstep((s - kPushEnd) / (1.0 - kPushEnd));
            scene.agent = m.object_goal - (gap + back) * dir;
        }
        Image frame = render_scene(scene, view, render_size);
        if (jitter > 0.0) apply_photometric_jitter(frame, jitter, mix_seed(seed, 0x1000 + t));
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

ClipDataset generate_synthetic_dataset(const DatasetConfig& config) {
    config.validate();
    ClipDataset ds;
    ds.vocabulary = task_vocabulary();
    ds.split = config.split;
    ds.seed = config.seed;
    ds.render_size = config.render_size;
    ds.clips.reserve(config.n_clips);
    for (std::size_t c = 0; c < config.n_clips; ++c)
        ds.clips.push_back(generate_clip(clip_seed(config.seed, config.split, c), config.frames, config.render_size,
                                      config.photometric_jitter));
    return ds;
}

bool FrameSample::valid(std::size_t length) const {
    const std::size_t edge = length / 5;
    return i0 < i && i < j && j < k && k <= g && g < length && i0 < edge && g >= length - edge;
}

FrameSample sample_frames(std::size_t length, Rng& rng) {
    const std::size_t edge = length / 5;
    if (length < 5 || edge == 0)
        throw DegenerateClipError("clip of " + std::to_string(length) + " frames cannot hold 5 ordered samples");
    FrameSample s;
    s.i0 = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(edge) - 1));
    s.g = static_cast<std::size_t>(
        uniform_int(rng, static_cast<std::int64_t>(length - edge), static_cast<std::int64_t>(length) - 1));
    auto mid = sample_without_replacement(rng, static_cast<std::int64_t>(s.i0) + 1, static_cast<std::int64_t>(s.g) - 1, 3);
    if (mid.size() < 3) throw DegenerateClipError("too few frames between the sampled endpoints");
    std::sort(mid.begin(), mid.end());
    s.i = static_cast<std::size_t>(mid[0]);
    s.j = static_cast<std::size_t>(mid[1]);
    s.k = static_cast<std::size_t>(mid[2]);
    return s;
}

CropRect CropRect::full(std::size_t source, std::size_t out_size) {
    const auto s = static_cast<double>(source);
    return {0.0, 0.0, s, s, out_size};
}

void CropRect::check(std::size_t src_h, std::size_t src_w) const {
    if (out_size == 0) throw ArgumentError("crop output size must be positive");
    if (!(w > 0.0) || !(h > 0.0)) throw ArgumentError("crop must have positive extent");
    if (x < 0.0 || y < 0.0 || x + w > static_cast<double>(src_w) || y + h > static_cast<double>(src_h))
        throw ArgumentError("crop rectangle extends outside the source frame");
}

CropRect sample_crop(std::size_t source, std::size_t out_size, Rng& rng) {
    const double s = static_cast<double>(source);
    const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
    double fw, fh;
    do {
        fw = uniform(rng, 0.5, 1.0);
        fh = fw / std::exp(uniform(rng, log_lo, log_hi));
    } while (fh < 0.5 || fh > 1.0);
    CropRect c;
    c.w = fw * s;
    c.h = fh * s;
    c.x = uniform(rng, 0.0, s - c.w);
    c.y = uniform(rng, 0.0, s - c.h);
    c.out_size = out_size;
    return c;
}

namespace {

// Pixel-centre aligned bilinear sampling with edge clamping. `at(y, x, ch)`
// reads a source value.
template <typename At>
void resample(std::size_t src_h, std::size_t src_w, const CropRect& crop, At at, double* out) {
    const std::size_t n = crop.out_size;
    const double sx = crop.w / static_cast<double>(n), sy = crop.h / static_cast<double>(n);
    std::vector<std::size_t> x0(n), x1(n);
    std::vector<double> fx(n);
    for (std::size_t u = 0; u < n; ++u) {
        const double src = std::clamp(crop.x + (static_cast<double>(u) + 0.5) * sx - 0.5, 0.0,
                                      static_cast<double>(src_w - 1));
        x0[u] = static_cast<std::size_t>(src);
        x1[u] = std::min(x0[u] + 1, src_w - 1);
        fx[u] = src - static_cast<double>(x0[u]);
    }
    for (std::size_t v = 0; v < n; ++v) {
        const double src = std::clamp(crop.y + (static_cast<double>(v) + 0.5) * sy - 0.5, 0.0,
                                      static_cast<double>(src_h - 1));
        const auto y0 = static_cast<std::size_t>(src);
        const std::size_t y1 = std::min(y0 + 1, src_h - 1);
        const double fy = src - static_cast<double>(y0);
        for (std::size_t u = 0; u < n; ++u) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double top = at(y0, x0[u], ch) * (1.0 - fx[u]) + at(y0, x1[u], ch) * fx[u];
                const double bot = at(y1, x0[u], ch) * (1.0 - fx[u]) + at(y1, x1[u], ch) * fx[u];
                out[(v * n + u) * 3 + ch] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
}

} // namespace

std::vector<Tensor> apply_video_crop(std::span<const Tensor> frames, const CropRect& crop) {
    std::vector<Tensor> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        if (f.rank() != 3 || f.shape()[2] != 3) throw DimensionError("frames must be (H, W, 3), got " + shape_str(f.shape()));
        const std::size_t h = f.shape()[0], w = f.shape()[1];
        crop.check(h, w);
        Tensor t({crop.out_size, crop.out_size, 3});
        const double* src = f.data();
        resample(h, w, crop, [&](std::size_t y, std::size_t x, std::size_t ch) { return src[(y * w + x) * 3 + ch]; },
                 t.data());
        out.push_back(std::move(t));
    }
    return out;
}

void crop_into(const Image& frame, const CropRect& crop, double* out) {
    crop.check(frame.height, frame.width);
    const std::uint8_t* src = frame.rgb.data();
    const std::size_t w = frame.width;
    resample(frame.height, w, crop,
             [&](std::size_t y, std::size_t x, std::size_t ch) { return src[(y * w + x) * 3 + ch] / 255.0; }, out);
}

std::vector<std::vector<std::size_t>> BatchSample::negative_clips() const {
    std::vector<std::vector<std::size_t>> out(negatives.size());
    for (std::size_t b = 0; b < negatives.size(); ++b)
        for (auto p : negatives[b]) out[b].push_back(entries.at(p).clip);
    return out;
}

BatchSample sample_batch(const ClipDataset& dataset, const BatchOptions& options, Rng& rng) {
    const std::size_t n = dataset.size();
    const std::size_t bsz = options.batch_size;
    if (n < 2) throw BatchCompositionError("cross-clip negatives need at least 2 clips, dataset has " + std::to_string(n));
    if (bsz < 2) throw BatchCompositionError("batch_size must be at least 2");

    std::vector<std::size_t> ids(bsz);
    if (n >= bsz) {
        const auto draw = sample_without_replacement(rng, 0, static_cast<std::int64_t>(n) - 1, bsz);
        for (std::size_t b = 0; b < bsz; ++b) ids[b] = static_cast<std::size_t>(draw[b]);
    } else {
        do {
            for (auto& id : ids) id = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
        } while (std::all_of(ids.begin(), ids.end(), [&](std::size_t v) { return v == ids[0]; }));
    }

    BatchSample batch;
    batch.entries.resize(bsz);
    batch.negatives.resize(bsz);
    for (std::size_t b = 0; b < bsz; ++b) {
        auto& e = batch.entries[b];
        e.clip = ids[b];
        e.frames = sample_frames(dataset.clips[ids[b]].length(), rng);
        e.crop = options.augment ? sample_crop(dataset.render_size, options.input_size, rng)
                                 : CropRect::full(dataset.render_size, options.input_size);
    }
    for (std::size_t b = 0; b < bsz; ++b) {
        std::vector<std::uint32_t> pool;
        for (std::size_t p = 0; p < bsz; ++p)
            if (ids[p] != ids[b]) pool.push_back(static_cast<std::uint32_t>(p));
        auto& neg = batch.negatives[b];
        if (pool.size() >= options.n_cross) {
            for (auto d : sample_without_replacement(rng, 0, static_cast<std::int64_t>(pool.size()) - 1, options.n_cross))
                neg.push_back(pool[static_cast<std::size_t>(d)]);
        } else {
            for (std::size_t c = 0; c < options.n_cross; ++c)
                neg.push_back(pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1))]);
        }
    }
    return batch;
}

Tensor assemble_images(const ClipDataset& dataset, const BatchSample& batch) {
    const std::size_t bsz = batch.entries.size();
    if (bsz == 0) throw BatchCompositionError("empty batch");
    const std::size_t s = batch.entries[0].crop.out_size;
    Tensor images({bsz * kRolesPerClip, s, s, 3});
    const std::size_t per = s * s * 3;
    for (std::size_t b = 0; b < bsz; ++b) {
        const auto& e = batch.entries[b];
        if (e.crop.out_size != s) throw DimensionError("crop output sizes differ within a batch");
        const auto roles = e.frames.roles();
        for (std::uint32_t r = 0; r < kRolesPerClip; ++r)
            crop_into(dataset.clips.at(e.clip).frames.at(roles[r]), e.crop,
                      images.data() + BatchLayout::row(b, static_cast<Role>(r)) * per);
    }
    return images;
}

std::vector<std::vector<std::uint32_t>> assemble_annotations(const ClipDataset& dataset, const BatchSample& batch) {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& e : batch.entries) out.push_back(dataset.token_ids(e.clip));
    return out;
}

void save_dataset(const ClipDataset& dataset, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    KvConfig index;
    index.set("format", std::string("vlrep-dataset"));
    index.set("version", static_cast<std::int64_t>(kDatasetFormatVersion));
    index.set("split", std::string(to_string(dataset.split)));
    index.set("seed", static_cast<std::int64_t>(dataset.seed));
    index.set("render_size", static_cast<std::int64_t>(dataset.render_size));
    index.set("vocabulary", dataset.vocabulary);
    index.set("clips", static_cast<std::int64_t>(dataset.size()));
    for (std::size_t c = 0; c < dataset.size(); ++c) {
        const auto& clip = dataset.clips[c];
        const std::string stem = clip_stem(c);
        std::ofstream blob(dir / (stem + ".frames"), std::ios::binary | std::ios::trunc);
        for (const auto& f : clip.frames)
            blob.write(reinterpret_cast<const char*>(f.rgb.data()), static_cast<std::streamsize>(f.rgb.size()));
        if (!blob) throw Error(ErrorClass::data, "cannot write " + (dir / (stem + ".frames")).string());
        KvConfig meta;
        meta.set("annotation", clip.annotation);
        meta.set("seed", std::to_string(clip.meta.seed));
        meta.set("frames", static_cast<std::int64_t>(clip.length()));
        meta.set("size", static_cast<std::int64_t>(dataset.render_size));
        meta.set("shape", std::string(to_string(clip.meta.shape)));
        meta.set("color", std::string(to_string(clip.meta.color)));
        meta.set("region", std::string(to_string(clip.meta.region)));
        set_vec(meta, "object_start", clip.meta.object_start);
        set_vec(meta, "object_goal", clip.meta.object_goal);
        set_vec(meta, "agent_start", clip.meta.agent_start);
        meta.save(dir / (stem + ".meta"));
    }
    index.save(dir / "index.kv");
}

ClipDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "index.kv")) throw Error(ErrorClass::data, "no dataset index at " + (dir / "index.kv").string());
    const KvConfig index = KvConfig::load(dir / "index.kv");
    if (index.get_string("format", "") != "vlrep-dataset") throw FormatError(0, "not a dataset index");
    const auto version = static_cast<std::uint32_t>(index.get_int("version", 0));
    if (version != kDatasetFormatVersion) throw VersionError(version, kDatasetFormatVersion);
    ClipDataset ds;
    ds.split = parse_split(index.get_string("split", "train"));
    ds.seed = static_cast<std::uint64_t>(index.get_int("seed", 0));
    ds.render_size = static_cast<std::size_t>(index.get_int("render_size", 0));
    ds.vocabulary = index.get_strings("vocabulary", {});
    const auto n = index.get_int("clips", -1);
    if (n < 0 || ds.render_size == 0) throw FormatError(0, "dataset index is missing clip count or size");
    const std::size_t frame_bytes = ds.render_size * ds.render_size * 3;
    for (std::size_t c = 0; c < static_cast<std::size_t>(n); ++c) {
        const std::string stem = clip_stem(c);
        const KvConfig meta = KvConfig::load(dir / (stem + ".meta"));
        VideoClip clip;
        clip.annotation = meta.get_strings("annotation", {});
        try {
            clip.meta.seed = std::stoull(meta.get_string("seed", "0"));
        } catch (const std::exception&) {
            throw ConfigError(stem + ".meta: bad seed");
        }
        clip.meta.shape = parse_shape(meta.get_string("shape", ""));
        clip.meta.color = parse_color(meta.get_string("color", ""));
        clip.meta.region = parse_region(meta.get_string("region", ""));
        clip.meta.object_start = get_vec(meta, "object_start");
        clip.meta.object_goal = get_vec(meta, "object_goal");
        clip.meta.agent_start = get_vec(meta, "agent_start");
        const auto t = static_cast<std::size_t>(meta.get_int("frames", 0));
        if (static_cast<std::size_t>(meta.get_int("size", 0)) != ds.render_size)
            throw FormatError(0, stem + ": frame size disagrees with the index");
        std::ifstream blob(dir / (stem + ".frames"), std::ios::binary);
        if (!blob) throw Error(ErrorClass::data, "cannot open " + (dir / (stem + ".frames")).string());
        for (std::size_t f = 0; f < t; ++f) {
            Image img(ds.render_size, ds.render_size);
            blob.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(frame_bytes));
            if (static_cast<std::size_t>(blob.gcount()) != frame_bytes)
                throw FormatError(f * frame_bytes + static_cast<std::uint64_t>(blob.gcount()), stem + ".frames is truncated");
            clip.frames.push_back(std::move(img));
        }
        if (blob.peek() != std::char_traits<char>::eof()) throw FormatError(t * frame_bytes, stem + ".frames has trailing bytes");
        ds.clips.push_back(std::move(clip));
    }
    ds.validate();
    return ds;
}

} // namespace vlrep
