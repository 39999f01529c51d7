/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/envs.hpp"

#include "vlrep/error.hpp"
#include "vlrep/kvconfig.hpp"
#include "vlrep/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vlrep {
namespace {

constexpr double kContactGap = kObjectRadius + kAgentRadius;
constexpr double kGraspRadius = 0.03;

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

Vec2 unit_or(Vec2 v, Vec2 fallback) {
    const double n = v.norm();
    return n > 1e-12 ? (1.0 / n) * v : fallback;
}

Vec2 clamp_box(Vec2 p, double lo, double hi) { return {std::clamp(p.x, lo, hi), std::clamp(p.y, lo, hi)}; }

Action toward(Vec2 from, Vec2 to, double grip, double speed = kMaxSpeed) {
    const Vec2 d = to - from;
    const double n = d.norm();
    const double s = n > speed ? speed / n : 1.0;
    return Action{{s * d.x / kMaxSpeed, s * d.y / kMaxSpeed, grip}};
}

Action push_expert(const EnvState& s) {
    const Vec2 d = unit_or(s.goal - s.object, {1.0, 0.0});
    const Vec2 rel = s.agent - s.object;
    const double along = dot(rel, d);
    const Vec2 lat_vec = rel - along * d;
    const double lat = lat_vec.norm();
    const Vec2 n = unit_or(lat_vec, {-d.y, d.x});

    // Behind the shape and lined up with the goal direction: push.
    if (along < 0.0 && lat < 0.03 && along > -(kContactGap + 0.05)) {
        const double remaining = (s.goal - s.object).norm();
        const Vec2 v = std::min(0.75 * kMaxSpeed, remaining + 0.01) * d - 0.5 * lat_vec;
        return toward(s.agent, s.agent + v, 0.0);
    }
    constexpr double side = kContactGap + 0.06;
    if (along > -(kContactGap + 0.01)) {
        // Not yet behind: step sideways first, then back, never crossing the shape.
        if (lat < side - 0.02) return toward(s.agent, s.object + along * d + side * n, 0.0);
        return toward(s.agent, s.object - (kContactGap + 0.02) * d + side * n, 0.0);
    }
    return toward(s.agent, s.object - (kContactGap + 0.02) * d, 0.0);
}

Action pick_expert(const EnvState& s, double epsilon) {
    if (!s.grasped) {
        if ((s.agent - s.object).norm() < 0.5 * kGraspRadius) return Action{{0.0, 0.0, 1.0}};
        return toward(s.agent, s.object, -1.0);
    }
    if ((s.goal - s.object).norm() < 0.4 * epsilon) return Action{{0.0, 0.0, -1.0}};
    return toward(s.agent, s.goal, 1.0);
}

std::string demo_stem(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "demo_%04zu", i);
    return buf;
}

} // namespace

std::string_view to_string(Task t) {
    switch (t) {
    case Task::reach: return "reach";
    case Task::push: return "push";
    case Task::pick_place: return "pick-place-2d";
    }
    return "?";
}

Task parse_task(std::string_view s) {
    for (auto t : kTasks)
        if (to_string(t) == s) return t;
    if (s == "pick_place" || s == "pick-place") return Task::pick_place;
    throw ArgumentError("unknown task '" + std::string(s) + "' (expected reach, push or pick-place-2d)");
}

std::size_t default_horizon(Task t) {
    switch (t) {
    case Task::reach: return 50;
    case Task::push: return 75;
    case Task::pick_place: return 100;
    }
    return 50;
}

ShapeKind task_shape(Task t) {
    switch (t) {
    case Task::reach: return ShapeKind::circle;
    case Task::push: return ShapeKind::square;
    case Task::pick_place: return ShapeKind::triangle;
    }
    return ShapeKind::square;
}

ColorName task_color(Task t) {
    switch (t) {
    case Task::reach: return ColorName::red;
    case Task::push: return ColorName::blue;
    case Task::pick_place: return ColorName::green;
    }
    return ColorName::red;
}

SpawnLayout nominal_layout(Task t) {
    switch (t) {
    case Task::reach: return {{0.5, 0.8}, {0.5, 0.4}, {0.5, 0.4}};
    case Task::push: return {{0.5, 0.85}, {0.5, 0.55}, {0.5, 0.2}};
    case Task::pick_place: return {{0.5, 0.8}, {0.3, 0.45}, {0.7, 0.3}};
    }
    return {};
}

void EnvConfig::validate() const {
    view_by_name(view);
    if (!(spawn_spread >= 0.0 && spawn_spread <= 0.3)) throw ArgumentError("spawn_spread must lie in [0, 0.3]");
    if (render_size < 8) throw ArgumentError("render_size must be at least 8");
    if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be positive");
}

Action Action::clipped() const {
    Action a = *this;
    for (auto& v : a.values) v = std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;
    return a;
}

Env::Env(EnvConfig config) : config_(std::move(config)) {
    config_.validate();
    view_ = &view_by_name(config_.view);
}

bool Env::is_success(const EnvState& s) const {
    switch (config_.task) {
    case Task::reach: return (s.agent - s.object).norm() < config_.epsilon;
    case Task::push: return (s.object - s.goal).norm() < config_.epsilon;
    case Task::pick_place: return !s.grasped && (s.object - s.goal).norm() < config_.epsilon;
    }
    return false;
}

Observation Env::reset(std::uint64_t episode_seed) {
    Rng rng(mix_seed(episode_seed, 0xe5));
    EnvState s;
    s.shape = task_shape(config_.task);
    s.color = task_color(config_.task);
    const SpawnLayout nominal = nominal_layout(config_.task);
    const double r = config_.spawn_spread;
    auto draw = [&](Vec2 c) {
        return clamp_box(Vec2{uniform(rng, c.x - r, c.x + r), uniform(rng, c.y - r, c.y + r)}, 0.08, 0.92);
    };
    for (;;) {
        s.agent = draw(nominal.agent);
        s.object = draw(nominal.object);
        s.goal = config_.task == Task::reach ? s.object : nominal.goal;
        const bool apart = (s.agent - s.object).norm() > 0.15;
        const bool far_goal = config_.task == Task::reach || (s.object - s.goal).norm() > 0.2;
        if (apart && far_goal && !is_success(s)) break;
    }
    state_ = s;
    steps_ = 0;
    active_ = true;
    done_ = false;
    success_ = false;
    return observe();
}

StepResult Env::step(const Action& action) {
    if (!active_) throw ProtocolError("step called before reset");
    if (done_) throw ProtocolError("step called after the episode ended");
    const Action a = action.clipped();
    EnvState& s = state_;
    if (a.values[2] > 0.5) s.gripper_closed = true;
    else if (a.values[2] < -0.5) s.gripper_closed = false;
    if (config_.task == Task::pick_place) {
        if (!s.gripper_closed) s.grasped = false;
        else if (!s.grasped && (s.agent - s.object).norm() < kGraspRadius) s.grasped = true;
    }
    const Vec2 move{kMaxSpeed * a.values[0], kMaxSpeed * a.values[1]};
    const Vec2 before = s.agent;
    s.agent = clamp_box(s.agent + move, 0.0, 1.0);
    if (s.grasped) s.object = s.agent;
    if (config_.task == Task::push) {
        // In contact the shape is carried along with the agent's displacement,
        // then separated to the contact distance.
        if ((s.object - s.agent).norm() < kContactGap - 1e-9) {
            s.object = s.object + (s.agent - before);
            const Vec2 rel = s.object - s.agent;
            if (rel.norm() < kContactGap - 1e-9) s.object = s.agent + kContactGap * unit_or(rel, unit_or(move, {1.0, 0.0}));
            s.object = clamp_box(s.object, kObjectRadius, 1.0 - kObjectRadius);
        }
    }
    if (config_.task == Task::reach) s.goal = s.object;
    ++steps_;
    success_ = is_success(s);
    done_ = success_ || steps_ >= config_.effective_horizon();
    return {observe(), done_, success_};
}

Observation Env::observe() const {
    SceneState scene{state_.agent, state_.gripper_closed, state_.object, state_.shape, state_.color, std::nullopt};
    if (config_.task != Task::reach) scene.goal_marker = state_.goal;
    Observation o;
    o.image = render_scene(scene, *view_, config_.render_size);
    o.proprio = {state_.agent.x, state_.agent.y, state_.gripper_closed ? 1.0 : 0.0};
    return o;
}

Action scripted_expert(const EnvState& state, Task task) {
    switch (task) {
    case Task::reach: return toward(state.agent, state.object, 0.0);
    case Task::push: return push_expert(state);
    case Task::pick_place: return pick_expert(state, 0.05);
    }
    return {};
}

Demonstration rollout_expert(Env& env, std::uint64_t episode_seed) {
    Demonstration d;
    d.task = env.config().task;
    d.view = env.config().view;
    d.episode_seed = episode_seed;
    Observation obs = env.reset(episode_seed);
    while (!env.done()) {
        const Action a = scripted_expert(env.state(), d.task);
        d.observations.push_back(std::move(obs));
        d.actions.push_back(a);
        obs = env.step(a).observation;
    }
    d.success = env.success();
    return d;
}

std::vector<Demonstration> collect_demos(const EnvConfig& config, std::size_t n, std::uint64_t seed,
                                         std::size_t attempt_budget) {
    if (n == 0) throw ArgumentError("collect_demos needs n >= 1");
    const std::size_t budget = attempt_budget ? attempt_budget : 10 * n;
    Env env(config);
    std::vector<Demonstration> demos;
    for (std::size_t k = 0; k < budget && demos.size() < n; ++k) {
        auto d = rollout_expert(env, mix_seed(seed, 0xde0000 + k));
        if (d.success) demos.push_back(std::move(d));
    }
    if (demos.size() < n)
        throw CollectionError("only " + std::to_string(demos.size()) + " of " + std::to_string(n) +
                              " expert episodes succeeded within " + std::to_string(budget) + " attempts");
    return demos;
}

std::vector<std::uint64_t> evaluation_seeds(std::size_t n, std::uint64_t base) {
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t i = 0; i < n; ++i) seeds[i] = mix_seed(base ^ 0xe7a1ULL, 0xe70000 + i);
    return seeds;
}

void save_demos(const std::vector<Demonstration>& demos, std::size_t render_size, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    KvConfig index;
    index.set("format", std::string("vlrep-demos"));
    index.set("version", static_cast<std::int64_t>(kDemoFormatVersion));
    index.set("count", static_cast<std::int64_t>(demos.size()));
    index.set("render_size", static_cast<std::int64_t>(render_size));
    if (!demos.empty()) {
        index.set("task", std::string(to_string(demos[0].task)));
        index.set("view", demos[0].view);
    }
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& d = demos[i];
        const std::string stem = demo_stem(i);
        std::ofstream blob(dir / (stem + ".frames"), std::ios::binary | std::ios::trunc);
        std::vector<double> proprio, actions;
        for (const auto& o : d.observations) {
            if (o.image.height != render_size || o.image.width != render_size)
                throw DimensionError("demo frame size differs from render_size");
            blob.write(reinterpret_cast<const char*>(o.image.rgb.data()), static_cast<std::streamsize>(o.image.rgb.size()));
            proprio.insert(proprio.end(), o.proprio.begin(), o.proprio.end());
        }
        if (!blob) throw Error(ErrorClass::data, "cannot write " + (dir / (stem + ".frames")).string());
        for (const auto& a : d.actions) actions.insert(actions.end(), a.values.begin(), a.values.end());
        KvConfig meta;
        meta.set("task", std::string(to_string(d.task)));
        meta.set("view", d.view);
        meta.set("episode_seed", std::to_string(d.episode_seed));
        meta.set("length", static_cast<std::int64_t>(d.length()));
        meta.set("success", d.success);
        meta.set_doubles("proprio", proprio);
        meta.set_doubles("actions", actions);
        meta.save(dir / (stem + ".meta"));
    }
    index.save(dir / "demos.kv");
}

std::vector<Demonstration> load_demos(const std::filesystem::path& dir, std::size_t limit) {
    if (!std::filesystem::exists(dir / "demos.kv"))
        throw ConfigError("no demonstration set at " + dir.string() + " (run collect-demos first)");
    const KvConfig index = KvConfig::load(dir / "demos.kv");
    if (index.get_string("format", "") != "vlrep-demos") throw FormatError(0, "not a demonstration index");
    const auto version = static_cast<std::uint32_t>(index.get_int("version", 0));
    if (version != kDemoFormatVersion) throw VersionError(version, kDemoFormatVersion);
    const auto count = static_cast<std::size_t>(index.get_int("count", 0));
    const auto size = static_cast<std::size_t>(index.get_int("render_size", 0));
    const std::size_t n = limit ? std::min(limit, count) : count;
    if (limit > count) throw ConfigError("demo set holds " + std::to_string(count) + " demos, " + std::to_string(limit) + " requested");
    std::vector<Demonstration> demos;
    const std::size_t frame_bytes = size * size * 3;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string stem = demo_stem(i);
        const KvConfig meta = KvConfig::load(dir / (stem + ".meta"));
        Demonstration d;
        d.task = parse_task(meta.get_string("task", ""));
        d.view = meta.get_string("view", "");
        try {
            d.episode_seed = std::stoull(meta.get_string("episode_seed", "0"));
        } catch (const std::exception&) {
            throw ConfigError(stem + ".meta: bad episode_seed");
        }
        d.success = meta.get_bool("success", false);
        const auto len = static_cast<std::size_t>(meta.get_int("length", 0));
        const auto proprio = meta.get_doubles("proprio");
        const auto actions = meta.get_doubles("actions");
        if (proprio.size() != len * kProprioDim || actions.size() != len * kActionDim)
            throw FormatError(0, stem + ".meta: array lengths disagree with length");
        std::ifstream blob(dir / (stem + ".frames"), std::ios::binary);
        for (std::size_t t = 0; t < len; ++t) {
            Observation o;
            o.image = Image(size, size);
            blob.read(reinterpret_cast<char*>(o.image.rgb.data()), static_cast<std::streamsize>(frame_bytes));
            if (static_cast<std::size_t>(blob.gcount()) != frame_bytes)
                throw FormatError(t * frame_bytes, stem + ".frames is truncated");
            std::copy_n(proprio.begin() + static_cast<std::ptrdiff_t>(t * kProprioDim), kProprioDim, o.proprio.begin());
            d.observations.push_back(std::move(o));
            Action a;
            std::copy_n(actions.begin() + static_cast<std::ptrdiff_t>(t * kActionDim), kActionDim, a.values.begin());
            d.actions.push_back(a);
        }
        demos.push_back(std::move(d));
    }
    return demos;
}

} // namespace vlrep
