/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Toy 2-D manipulation tasks rendered with the shared scene renderer, a
// state-based scripted expert and demonstration storage.

#include "vlrep/render.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vlrep {

enum class Task { reach, push, pick_place };
inline constexpr Task kTasks[] = {Task::reach, Task::push, Task::pick_place};
std::string_view to_string(Task t);
Task parse_task(std::string_view s);

/// Default horizon per task: reach 50, push 75, pick-place 100.
std::size_t default_horizon(Task t);

/// Largest per-step displacement of the agent (action component 1).
inline constexpr double kMaxSpeed = 0.04;

struct EnvConfig {
    Task task = Task::push;
    std::string view = "front";
    std::size_t render_size = 64;
    /// 0 selects default_horizon(task).
    std::size_t horizon = 0;
    double epsilon = 0.05;
    /// Half-width of the square spawn boxes around the nominal agent and object
    /// positions. Goals sit at the nominal position.
    double spawn_spread = 0.2;

    std::size_t effective_horizon() const { return horizon ? horizon : default_horizon(task); }
    void validate() const;
};

/// Nominal positions; reset draws agent and object uniformly within +-spawn_spread.
struct SpawnLayout {
    Vec2 agent, object, goal;
};
SpawnLayout nominal_layout(Task t);

/// Every task manipulates one fixed object.
ShapeKind task_shape(Task t);
ColorName task_color(Task t);

inline constexpr std::size_t kProprioDim = 3;
inline constexpr std::size_t kActionDim = 3;

struct Observation {
    Image image;
    /// Agent x, agent y, gripper (1 closed, 0 open).
    std::array<double, kProprioDim> proprio{};
};

/// Velocity command (vx, vy) and gripper command; components are clipped to [-1, 1].
/// The gripper closes above +0.5, opens below -0.5 and keeps its state otherwise.
struct Action {
    std::array<double, kActionDim> values{};

    Action clipped() const;
    friend bool operator==(const Action&, const Action&) = default;
};

struct EnvState {
    Vec2 agent;
    bool gripper_closed = false;
    bool grasped = false;
    Vec2 object;
    /// Target location; for reach the target is the object itself.
    Vec2 goal;
    ShapeKind shape = ShapeKind::square;
    ColorName color = ColorName::red;
};

struct StepResult {
    Observation observation;
    bool done = false;
    bool success = false;
};

class Env {
  public:
    explicit Env(EnvConfig config);

    /// Randomizes agent, object and goal from the seed, rejecting already
    /// successful starts.
    Observation reset(std::uint64_t episode_seed);
    /// Throws ProtocolError when called before reset or after the episode ended.
    StepResult step(const Action& action);

    Observation observe() const;
    const EnvState& state() const { return state_; }
    const EnvConfig& config() const { return config_; }
    std::size_t steps_taken() const { return steps_; }
    bool done() const { return done_; }
    bool success() const { return success_; }
    /// Task success test on a state.
    bool is_success(const EnvState& s) const;

  private:
    EnvConfig config_;
    const View* view_;
    EnvState state_;
    std::size_t steps_ = 0;
    bool active_ = false;
    bool done_ = false;
    bool success_ = false;
};

/// Proportional controller on the true state; deterministic.
Action scripted_expert(const EnvState& state, Task task);

struct Demonstration {
    Task task = Task::push;
    std::string view;
    std::uint64_t episode_seed = 0;
    /// observations[t] is seen before actions[t].
    std::vector<Observation> observations;
    std::vector<Action> actions;
    bool success = false;

    std::size_t length() const { return actions.size(); }
};

Demonstration rollout_expert(Env& env, std::uint64_t episode_seed);

/// Exactly n successful expert episodes with distinct seeds derived from
/// `seed`; failed episodes are retried with the next seed. Throws
/// CollectionError when the budget (default 10 n attempts) runs out.
std::vector<Demonstration> collect_demos(const EnvConfig& config, std::size_t n, std::uint64_t seed,
                                         std::size_t attempt_budget = 0);

/// Seeds for online evaluation; disjoint stream from demonstration seeds.
std::vector<std::uint64_t> evaluation_seeds(std::size_t n, std::uint64_t base = 0);

inline constexpr std::uint32_t kDemoFormatVersion = 1;

/// One directory per demo set: demos.kv index plus demo_NNNN.frames (raw
/// uint8) and demo_NNNN.meta (key = value with proprio and action arrays).
void save_demos(const std::vector<Demonstration>& demos, std::size_t render_size, const std::filesystem::path& dir);
std::vector<Demonstration> load_demos(const std::filesystem::path& dir, std::size_t limit = 0);

} // namespace vlrep
