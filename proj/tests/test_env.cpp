// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "scalenav/env.hpp"
#include "scenes.hpp"

using namespace scalenav;
using namespace scalenav::env;
using dynamics::Action;
using dynamics::UavState;

namespace {

class Hover : public Policy {
 public:
  void begin_episode(std::uint64_t) override {}
  Action act(const UavState&, const Vec3&, const depthcam::DepthImage&) override { return {}; }
};

/// Accelerates toward the goal with seeded noise.
class Seeker : public Policy {
 public:
  void begin_episode(std::uint64_t seed) override { rng_.seed(seed); }
  Action act(const UavState& s, const Vec3& goal, const depthcam::DepthImage&) override {
    std::normal_distribution<double> n(0.0, 1.0);
    const Vec3 d = goal - s.position;
    const Vec3 a = d * (2.0 / std::max(d.norm(), 1e-9)) - s.velocity;
    return {a.x + n(rng_), a.y + n(rng_), a.z + 0.2 * n(rng_), 0.3 * n(rng_)};
  }

 private:
  std::mt19937_64 rng_;
};

std::shared_ptr<const worldgen::World> make_world(std::uint64_t seed) {
  worldgen::WorldConfig cfg;
  cfg.seed = seed;
  return std::make_shared<const worldgen::World>(worldgen::generate_world(cfg));
}

}  // namespace

TEST_CASE("observation arithmetic") {
  UavState s;
  s.position = {3.0, 4.0, 1.0};
  const Observation o = make_observation(s, {3.0, 4.0, 2.0});
  CHECK(o.log_d_hor == doctest::Approx(std::log(1e-3)));
  CHECK(o.log_d_hor == doctest::Approx(-6.9078).epsilon(1e-5));
  CHECK(o.d_z == 1.0);
  const Observation f = make_observation({}, {10.0, 0.0, 0.0});
  CHECK(f.log_d_hor == doctest::Approx(2.302585093));
  CHECK(f.d_norm == Vec3{1.0, 0.0, 0.0});
  CHECK(make_observation(s, s.position).d_norm == Vec3{1.0, 0.0, 0.0});
  std::vector<double> mem(64, 0.5);
  const auto flat = make_observation(s, {0, 0, 0}, mem).flatten();
  CHECK(flat.size() == static_cast<std::size_t>(kStateDim) + 64);
}

TEST_CASE("d_norm is unit length on random pairs") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 1000; ++i) {
    UavState s;
    s.position = {u(rng), u(rng), u(rng)};
    const Observation o = make_observation(s, {u(rng), u(rng), u(rng)});
    CHECK(std::abs(o.d_norm.norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("progress reward examples") {
  const RewardConfig cfg;
  UavState s;
  s.velocity = {1.0, 0.0, 0.0};
  // Goal 1 m ahead at the same height, flying straight at it.
  CHECK(progress_reward(s, {1.0, 0.0, 0.0}, cfg) == 0.0);

  RewardConfig no_speed = cfg;
  no_speed.lambda_v = 0.0;
  s.velocity = {2.5, 0.0, 0.0};
  CHECK(progress_reward(s, {5.0, 1.0, 0.0}, cfg) == progress_reward(s, {5.0, 1.0, 0.0}, no_speed));

  RewardConfig no_lat = cfg;
  no_lat.lambda_lat = 0.0;
  s.velocity = {0.0, 1.0, 0.0};
  const double diff = progress_reward(s, {5.0, 1.0, 0.0}, cfg) - progress_reward(s, {5.0, 1.0, 0.0}, no_lat);
  CHECK(diff == doctest::Approx(cfg.lambda_lat));

  // Hovering: the direction term takes its worst case.
  RewardConfig only_dir{};
  only_dir.lambda_d = only_dir.lambda_z = only_dir.lambda_v = only_dir.lambda_ang = only_dir.lambda_lat = 0.0;
  CHECK(progress_reward({}, {3.0, 4.0, 0.0}, only_dir) == doctest::Approx(only_dir.lambda_dir * (0.6 + 0.8)));
}

TEST_CASE("progress reward is non-positive beyond one metre") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10.0, 10.0), v(-4.0, 4.0);
  const RewardConfig cfg;
  int checked = 0;
  while (checked < 5000) {
    UavState s;
    s.position = {u(rng), u(rng), u(rng)};
    s.velocity = {v(rng), v(rng), v(rng)};
    s.yaw = u(rng) / 4;
    s.yaw_rate = v(rng) / 3;
    const Vec3 goal{u(rng), u(rng), u(rng)};
    if ((goal - s.position).norm_xy() < 1.0) continue;
    CHECK(progress_reward(s, goal, cfg) <= 0.0);
    ++checked;
  }
}

TEST_CASE("terminal cases and their rewards") {
  auto w = std::make_shared<worldgen::World>(
      scenes::arena(0, 0, 20, 20, 3, {{10.0, 10.0, 0.5, 3.0}}));
  w->start = {1.0, 10.0, 1.5};
  w->goal = {19.0, 10.0, 1.5};
  EnvConfig cfg;
  Environment env(w, cfg);

  UavState near_goal;
  near_goal.position = w->goal - Vec3{cfg.reward.d_min / 2, 0.0, 0.0};
  env.reset(near_goal);
  auto out = env.step({});
  CHECK(out.termination == Termination::Arrived);
  CHECK(out.reward == cfg.reward.r_arrive);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step({}), std::logic_error);

  UavState close;
  close.position = {10.0 - 0.51, 10.0, 1.5};
  env.reset(close);
  out = env.step({});
  CHECK(out.termination == Termination::Collision);
  CHECK(out.reward == cfg.reward.r_collision);

  UavState fly;
  fly.position = {3.0, 4.0, 1.5};
  fly.velocity = {1.0, 0.5, 0.0};
  env.reset(fly);
  const Action a{0.5, -0.2, 0.1, 0.3};
  out = env.step(a);
  CHECK(out.termination == Termination::Running);
  CHECK(out.reward == progress_reward(dynamics::step(fly, a, cfg.dynamics), w->goal, cfg.reward));

  UavState out_of_box;
  out_of_box.position = {3.0, 4.0, 1.5};
  out_of_box.velocity = {0.0, -3.0, 0.0};
  env.reset(out_of_box);
  Termination t = Termination::Running;
  while (t == Termination::Running) t = env.step({}).termination;
  CHECK(t == Termination::Collision);  // the wall is reached before leaving the box

  EnvConfig short_cfg = cfg;
  short_cfg.max_steps = 3;
  Environment env2(w, short_cfg);
  env2.step({});
  env2.step({});
  out = env2.step({});
  CHECK(out.termination == Termination::Timeout);
  CHECK(out.reward == cfg.reward.r_exceed);
}

TEST_CASE("termination priority: arrival beats collision beats bounds") {
  auto w = scenes::arena(0, 0, 4, 4, 3, {{2.0, 2.0, 0.2, 3.0}});
  w.goal = {2.0, 2.3, 1.0};
  const EnvConfig cfg;
  UavState s;
  s.position = {2.0, 2.25, 1.0};  // within d_min of goal and inside the collision band
  CHECK(classify(s, w, cfg, 0) == Termination::Arrived);
  w.goal = {0.5, 0.5, 1.0};
  CHECK(classify(s, w, cfg, 0) == Termination::Collision);
  s.position = {-0.5, 2.0, 1.0};
  // Walls are part of the signed distance, so leaving the box is caught as a collision.
  CHECK(classify(s, w, cfg, 0) == Termination::Collision);
  s.position = {2.0, 3.5, 1.0};
  CHECK(classify(s, w, cfg, 5) == Termination::Running);
  CHECK(classify(s, w, cfg, cfg.max_steps) == Termination::Timeout);
  for (auto t : {Termination::Running, Termination::Arrived, Termination::Collision,
                 Termination::OutOfBounds, Termination::Timeout})
    CHECK(parse_termination(to_string(t)) == t);
}

TEST_CASE("episodes end exactly once and replay bit-exactly") {
  const auto world = make_world(2);
  const EnvConfig cfg;
  Seeker p;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EpisodeRecord a = rollout_episode(p, world, cfg, seed);
    const EpisodeRecord b = rollout_episode(p, world, cfg, seed);
    REQUIRE(a.size() > 0);
    CHECK(a.states.size() == a.size());
    CHECK(a.actions.size() == a.size());
    CHECK(a.rewards.size() == a.size());
    for (std::size_t t = 0; t + 1 < a.size(); ++t) CHECK(a.terms[t] == Termination::Running);
    CHECK(a.terms.back() != Termination::Running);
    CHECK(a.rewards == b.rewards);
    CHECK(a.states == b.states);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a.frames[t].data == b.frames[t].data);
    for (std::size_t t = 1; t < a.size(); ++t)
      CHECK(a.states[t] == dynamics::step(a.states[t - 1], a.actions[t - 1], cfg.dynamics));
  }
}

TEST_CASE("collection caps") {
  std::vector<std::shared_ptr<const worldgen::World>> worlds{make_world(0), make_world(1)};
  Seeker p;
  CollectConfig cc;
  cc.cap_frames = 100;
  cc.episodes = 30;
  const auto eps = collect_dataset(p, worlds, {}, cc);
  std::size_t total = 0;
  for (const auto& e : eps) total += e.size();
  CHECK(total <= 100);

  Hover hover;
  const auto full = collect_dataset(hover, worlds, {}, CollectConfig{});
  total = 0;
  for (const auto& e : full) total += e.size();
  CHECK(full.size() == 200);
  CHECK(total == 10000);
  CHECK(full[1].world_index == 1);
}

TEST_CASE("render is independent of obstacle order") {
  auto w = *make_world(5);
  const depthcam::CameraPose pose{w.start, 0.2};
  const auto a = depthcam::render_depth(w, pose, {});
  std::mt19937_64 rng(1);
  std::shuffle(w.obstacles.begin(), w.obstacles.end(), rng);
  CHECK(depthcam::render_depth(w, pose, {}).data == a.data);
}

TEST_CASE("episode files round trip") {
  const auto world = make_world(3);
  Seeker p;
  EnvConfig cfg;
  cfg.max_steps = 12;
  const EpisodeRecord rec = rollout_episode(p, world, cfg, 7);
  const auto dir = std::filesystem::temp_directory_path() / "scalenav_test_env";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_episode(dir / "ep0.jsonl", rec, cfg.camera, "frames");
  const EpisodeRecord back = load_episode(dir / "ep0.jsonl");
  REQUIRE(back.size() == rec.size());
  CHECK(back.states == rec.states);
  CHECK(back.actions == rec.actions);
  CHECK(back.rewards == rec.rewards);
  CHECK(back.terms == rec.terms);
  CHECK(back.seed == 7);
  for (std::size_t t = 0; t < rec.size(); ++t)
    CHECK(back.frames[t].data == depthcam::quantize_mm(rec.frames[t]).data);
}
