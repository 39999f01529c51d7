/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/envs.hpp"
#include "vlrep/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace vlrep {
namespace {

EnvConfig small(Task task, std::string view = "front") {
    EnvConfig c;
    c.task = task;
    c.view = std::move(view);
    c.render_size = 16;
    return c;
}

TEST(Env, ResetIsDeterministicPerSeed) {
    Env a(small(Task::push)), b(small(Task::push));
    const auto oa = a.reset(11);
    const auto ob = b.reset(11);
    EXPECT_EQ(oa.image.rgb, ob.image.rgb);
    EXPECT_EQ(oa.proprio, ob.proprio);
    b.reset(12);
    EXPECT_FALSE(a.state().object == b.state().object);
}

TEST(Env, StartsAreNeverSuccessful) {
    for (auto task : kTasks) {
        Env env(small(task));
        for (std::uint64_t s = 0; s < 300; ++s) {
            env.reset(s);
            EXPECT_FALSE(env.is_success(env.state())) << to_string(task) << " seed " << s;
        }
    }
}

TEST(Env, SpawnsCoverTheConfiguredRegion) {
    for (auto task : kTasks) {
        const EnvConfig c = small(task);
        const Vec2 centre = nominal_layout(task).object;
        Env env(c);
        Vec2 lo{1.0, 1.0}, hi{0.0, 0.0};
        for (std::uint64_t s = 0; s < 400; ++s) {
            env.reset(s);
            const Vec2 o = env.state().object;
            ASSERT_LE(std::fabs(o.x - centre.x), c.spawn_spread + 1e-12);
            ASSERT_LE(std::fabs(o.y - centre.y), c.spawn_spread + 1e-12);
            lo = {std::min(lo.x, o.x), std::min(lo.y, o.y)};
            hi = {std::max(hi.x, o.x), std::max(hi.y, o.y)};
        }
        EXPECT_GT(hi.x - lo.x, 1.6 * c.spawn_spread) << to_string(task);
        EXPECT_GT(hi.y - lo.y, 1.2 * c.spawn_spread) << to_string(task);
    }
}

TEST(Env, ZeroSpreadStartsAtNominal) {
    EnvConfig c = small(Task::pick_place);
    c.spawn_spread = 0.0;
    Env env(c);
    env.reset(4);
    EXPECT_TRUE(env.state().object == nominal_layout(Task::pick_place).object);
    EXPECT_TRUE(env.state().goal == nominal_layout(Task::pick_place).goal);
    c.spawn_spread = 0.5;
    EXPECT_THROW(Env{c}, ArgumentError);
}

TEST(Env, PushCarriesTheObject) {
    Env env(small(Task::push));
    env.reset(0);
    EnvState s = env.state();
    const Vec2 start = s.object;
    // Drive straight at the object until contact, then keep going.
    for (int t = 0; t < 30 && !env.done(); ++t) {
        const Vec2 d = s.object - s.agent;
        env.step(Action{{d.x / d.norm(), d.y / d.norm(), 0.0}});
        s = env.state();
        EXPECT_GE((s.object - s.agent).norm(), kObjectRadius + kAgentRadius - 1e-9);
    }
    EXPECT_GT((s.object - start).norm(), 0.1);
}

TEST(Env, ZeroActionLeavesStateUnchanged) {
    for (auto task : kTasks) {
        Env env(small(task));
        env.reset(3);
        const EnvState before = env.state();
        env.step(Action{});
        EXPECT_TRUE(env.state().agent == before.agent);
        EXPECT_TRUE(env.state().object == before.object);
        EXPECT_EQ(env.state().gripper_closed, before.gripper_closed);
    }
}

TEST(Env, ActionsAreClipped) {
    Env a(small(Task::reach)), b(small(Task::reach));
    a.reset(5);
    b.reset(5);
    a.step(Action{{7.0, -3.0, 0.2}});
    b.step(Action{{1.0, -1.0, 0.2}});
    EXPECT_TRUE(a.state().agent == b.state().agent);
    const Action nan = Action{{std::nan(""), 0.5, 0.0}}.clipped();
    EXPECT_EQ(nan.values[0], 0.0);
}

TEST(Env, MovementIsBoundedBySpeed) {
    Env env(small(Task::reach));
    env.reset(9);
    const Vec2 p = env.state().agent;
    env.step(Action{{1.0, 1.0, 0.0}});
    EXPECT_LE((env.state().agent - p).norm(), kMaxSpeed * std::sqrt(2.0) + 1e-12);
}

TEST(Env, ProtocolErrors) {
    Env env(small(Task::reach));
    EXPECT_THROW(env.step(Action{}), ProtocolError);
    env.reset(0);
    while (!env.done()) env.step(scripted_expert(env.state(), Task::reach));
    EXPECT_THROW(env.step(Action{}), ProtocolError);
    env.reset(1);
    EXPECT_NO_THROW(env.step(Action{}));
}

TEST(Env, HorizonEndsEpisode) {
    EnvConfig c = small(Task::push);
    c.horizon = 4;
    Env env(c);
    env.reset(2);
    for (int i = 0; i < 4; ++i) env.step(Action{});
    EXPECT_TRUE(env.done());
    EXPECT_FALSE(env.success());
}

TEST(Env, InvalidConfig) {
    EnvConfig c = small(Task::push);
    c.view = "overhead";
    EXPECT_THROW(Env{c}, ArgumentError);
    EXPECT_THROW(parse_task("stack"), ArgumentError);
    EXPECT_EQ(parse_task("pick-place-2d"), Task::pick_place);
}

TEST(Env, ViewsShareTheUnderlyingState) {
    Env front(small(Task::push, "front")), zoom(small(Task::push, "zoom"));
    const auto a = front.reset(21);
    const auto b = zoom.reset(21);
    EXPECT_TRUE(front.state().object == zoom.state().object);
    EXPECT_EQ(a.proprio, b.proprio);
    EXPECT_NE(a.image.rgb, b.image.rgb);
}

class ExpertAudit : public ::testing::TestWithParam<Task> {};

TEST_P(ExpertAudit, SucceedsOnAtLeast95Percent) {
    Env env(small(GetParam()));
    int ok = 0;
    for (std::uint64_t s = 0; s < 200; ++s) ok += rollout_expert(env, s).success;
    EXPECT_GE(ok, 190);
}

INSTANTIATE_TEST_SUITE_P(Tasks, ExpertAudit, ::testing::ValuesIn(kTasks),
                         [](const auto& info) { return std::string(info.param == Task::pick_place ? "pick_place" : to_string(info.param)); });

TEST(Expert, ReachIsPerfect) {
    Env env(small(Task::reach));
    for (std::uint64_t s = 0; s < 100; ++s) EXPECT_TRUE(rollout_expert(env, 1000 + s).success);
}

TEST(Expert, IdleAtTarget) {
    EnvState s;
    s.agent = s.object = s.goal = {0.4, 0.6};
    const Action a = scripted_expert(s, Task::reach);
    EXPECT_NEAR(a.values[0], 0.0, 1e-12);
    EXPECT_NEAR(a.values[1], 0.0, 1e-12);
}

TEST(Expert, RolloutReplayMatches) {
    EnvConfig c = small(Task::pick_place);
    Env env(c);
    const auto demo = rollout_expert(env, 77);
    Env replay(c);
    auto obs = replay.reset(77);
    for (std::size_t t = 0; t < demo.length(); ++t) {
        EXPECT_EQ(obs.image.rgb, demo.observations[t].image.rgb);
        obs = replay.step(demo.actions[t]).observation;
    }
    EXPECT_TRUE(replay.success());
}

TEST(Demos, CollectAndRoundTrip) {
    const EnvConfig c = small(Task::push);
    const auto demos = collect_demos(c, 5, 4);
    ASSERT_EQ(demos.size(), 5u);
    for (const auto& d : demos) EXPECT_TRUE(d.success);
    const auto dir = std::filesystem::temp_directory_path() / "vlrep_envs_demos";
    std::filesystem::remove_all(dir);
    save_demos(demos, c.render_size, dir);
    const auto back = load_demos(dir);
    ASSERT_EQ(back.size(), demos.size());
    for (std::size_t i = 0; i < demos.size(); ++i) {
        EXPECT_EQ(back[i].episode_seed, demos[i].episode_seed);
        ASSERT_EQ(back[i].length(), demos[i].length());
        for (std::size_t t = 0; t < demos[i].length(); ++t) {
            EXPECT_EQ(back[i].actions[t].values, demos[i].actions[t].values);
            EXPECT_EQ(back[i].observations[t].proprio, demos[i].observations[t].proprio);
            EXPECT_EQ(back[i].observations[t].image.rgb, demos[i].observations[t].image.rgb);
        }
    }
    EXPECT_EQ(load_demos(dir, 2).size(), 2u);
    EXPECT_THROW(load_demos(dir, 9), ConfigError);
    std::filesystem::resize_file(dir / "demo_0001.frames", 10);
    EXPECT_THROW(load_demos(dir), FormatError);
    std::filesystem::remove_all(dir);
}

TEST(Demos, CollectionBudgetExhausted) {
    EnvConfig c = small(Task::push);
    c.horizon = 1;
    EXPECT_THROW(collect_demos(c, 2, 0, 5), CollectionError);
}

TEST(Demos, EvaluationSeedsDisjointFromDemoSeeds) {
    const auto eval = evaluation_seeds(50);
    const auto demos = collect_demos(small(Task::reach), 20, 0);
    for (const auto& d : demos)
        EXPECT_EQ(std::count(eval.begin(), eval.end(), d.episode_seed), 0);
    EXPECT_EQ(evaluation_seeds(50), eval);
}

} // namespace
} // namespace vlrep
