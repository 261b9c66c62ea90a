// SPDX-License-Identifier: Apache-2.0

#include "scalenav/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace scalenav::env {

using dynamics::Action;
using dynamics::UavState;
using json = nlohmann::json;

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(kStateDim + memory.size());
  out.push_back(log_d_hor);
  out.push_back(d_z);
  for (const Vec3* v : {&d_norm, &v_world, &euler, &omega_body}) {
    out.push_back(v->x);
    out.push_back(v->y);
    out.push_back(v->z);
  }
  out.insert(out.end(), memory.begin(), memory.end());
  return out;
}

void RewardConfig::validate() const {
  if (!(r_arrive > 0.0 && r_collision < 0.0)) {
    throw InvalidArgument("reward constants need r_arrive > 0 > r_collision");
  }
  if (!(d_min > 0.0 && v_max > 0.0)) throw InvalidArgument("d_min and v_max must be positive");
}

void EnvConfig::validate() const {
  reward.validate();
  dynamics.validate();
  camera.validate();
  if (!(d_uav > 0.0)) throw InvalidArgument("d_uav must be positive");
  if (max_steps < 1) throw InvalidArgument("max_steps must be at least 1");
}

namespace {

constexpr std::array<std::string_view, 5> kTermNames = {"Running", "Arrived", "Collision",
                                                        "OutOfBounds", "Timeout"};

}  // namespace

std::string_view to_string(Termination t) { return kTermNames[static_cast<std::size_t>(t)]; }

std::optional<Termination> parse_termination(std::string_view text) {
  for (std::size_t i = 0; i < kTermNames.size(); ++i) {
    if (kTermNames[i] == text) return static_cast<Termination>(i);
  }
  return std::nullopt;
}

Observation make_observation(const UavState& state, const Vec3& goal,
                             std::span<const double> memory) {
  Observation o;
  const Vec3 d = goal - state.position;
  o.log_d_hor = std::log(std::max(d.norm_xy(), kMinHorizontalDistance));
  o.d_z = d.z;
  const double n = d.norm();
  o.d_norm = n > 0.0 ? d * (1.0 / n) : Vec3{1.0, 0.0, 0.0};
  o.v_world = state.velocity;
  o.euler = state.euler();
  o.omega_body = state.omega_body();
  o.memory.assign(memory.begin(), memory.end());
  return o;
}

double progress_reward(const UavState& state, const Vec3& goal, const RewardConfig& cfg) {
  const Observation o = make_observation(state, goal);
  const double z_term = cfg.signed_dz ? o.d_z : std::abs(o.d_z);
  const double v_hor = state.velocity.norm_xy();
  const double speed = state.velocity.norm();
  double dir = 0.0;
  if (speed < 1e-3) {
    dir = std::abs(o.d_norm.x) + std::abs(o.d_norm.y) + std::abs(o.d_norm.z);
  } else {
    const Vec3 diff = o.d_norm - state.velocity * (1.0 / speed);
    dir = std::abs(diff.x) + std::abs(diff.y) + std::abs(diff.z);
  }
  const Vec3 vb = state.body_velocity();
  return cfg.lambda_d * o.log_d_hor + cfg.lambda_z * z_term +
         cfg.lambda_v * std::max(0.0, v_hor - cfg.v_max) * v_hor + cfg.lambda_dir * dir +
         cfg.lambda_ang * o.omega_body.norm() +
         cfg.lambda_lat * (std::abs(vb.y) + std::max(0.0, -vb.x));
}

Termination classify(const UavState& state, const worldgen::World& world, const EnvConfig& cfg,
                     int steps_taken) {
  const Vec3 d = world.goal - state.position;
  if (std::hypot(d.norm_xy(), d.z) < cfg.reward.d_min) return Termination::Arrived;
  if (worldgen::signed_distance(world, state.position) < 0.5 * cfg.d_uav) {
    return Termination::Collision;
  }
  if (!worldgen::inside_bounds(world.config, state.position)) return Termination::OutOfBounds;
  if (steps_taken >= cfg.max_steps) return Termination::Timeout;
  return Termination::Running;
}

double terminal_reward(Termination t, const RewardConfig& cfg) {
  switch (t) {
    case Termination::Arrived: return cfg.r_arrive;
    case Termination::Collision: return cfg.r_collision;
    case Termination::OutOfBounds:
    case Termination::Timeout: return cfg.r_exceed;
    case Termination::Running: break;
  }
  throw std::logic_error("no terminal reward for a running episode");
}

Environment::Environment(std::shared_ptr<const worldgen::World> world, EnvConfig cfg)
    : world_(std::move(world)), cfg_(std::move(cfg)) {
  if (!world_) throw InvalidArgument("environment needs a world");
  cfg_.validate();
  reset();
}

void Environment::reset() {
  UavState s;
  s.position = world_->start;
  s.yaw = std::atan2(world_->goal.y - world_->start.y, world_->goal.x - world_->start.x);
  reset(s);
}

void Environment::reset(const UavState& state) {
  state_ = state;
  steps_ = 0;
  done_ = false;
}

StepOutcome Environment::step(const Action& action) {
  if (done_) throw std::logic_error("step called on a terminated episode");
  state_ = dynamics::step(state_, action, cfg_.dynamics);
  ++steps_;
  StepOutcome out;
  out.termination = classify(state_, *world_, cfg_, steps_);
  out.reward = out.termination == Termination::Running
                   ? progress_reward(state_, world_->goal, cfg_.reward)
                   : terminal_reward(out.termination, cfg_.reward);
  out.observation = make_observation(state_, world_->goal);
  done_ = out.termination != Termination::Running;
  return out;
}

depthcam::CameraPose Environment::camera_pose() const { return {state_.position, state_.yaw}; }

depthcam::DepthImage Environment::render() const {
  return depthcam::render_depth(*world_, camera_pose(), cfg_.camera);
}

Observation Environment::observe(std::span<const double> memory) const {
  return make_observation(state_, world_->goal, memory);
}

EpisodeRecord rollout_episode(Policy& policy, std::shared_ptr<const worldgen::World> world,
                              const EnvConfig& cfg, std::uint64_t seed) {
  Environment env(world, cfg);
  policy.begin_episode(seed);
  EpisodeRecord rec;
  rec.seed = seed;
  while (!env.done()) {
    auto frame = env.render();
    const UavState s = env.state();
    const Action a = policy.act(s, env.world().goal, frame);
    const StepOutcome out = env.step(a);
    rec.frames.push_back(std::move(frame));
    rec.states.push_back(s);
    rec.actions.push_back(a);
    rec.rewards.push_back(out.reward);
    rec.terms.push_back(out.termination);
  }
  return rec;
}

std::vector<EpisodeRecord> collect_dataset(
    Policy& policy, std::span<const std::shared_ptr<const worldgen::World>> worlds,
    const EnvConfig& cfg, const CollectConfig& collect) {
  if (worlds.empty()) throw InvalidArgument("collect_dataset needs at least one world");
  if (collect.episodes < 1 || collect.cap_frames < 1) {
    throw InvalidArgument("collect_dataset caps must be positive");
  }
  const int per_episode = (collect.cap_frames + collect.episodes - 1) / collect.episodes;
  std::vector<EpisodeRecord> out;
  int total = 0;
  for (int i = 0; i < collect.episodes && total < collect.cap_frames; ++i) {
    EnvConfig ecfg = cfg;
    ecfg.max_steps = std::min({cfg.max_steps, per_episode, collect.cap_frames - total});
    const std::size_t w = static_cast<std::size_t>(i) % worlds.size();
    auto rec = rollout_episode(policy, worlds[w], ecfg,
                               derive_seed(collect.seed, static_cast<std::uint64_t>(i)));
    rec.world_index = w;
    total += static_cast<int>(rec.size());
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void save_episode(const std::filesystem::path& jsonl, const EpisodeRecord& record,
                  const depthcam::CameraIntrinsics& intr, const std::string& frame_dir) {
  const auto base = jsonl.parent_path();
  std::filesystem::create_directories(base / frame_dir);
  std::ofstream os(jsonl);
  if (!os) throw std::runtime_error("cannot write " + jsonl.string());
  const std::string stem = jsonl.stem().string();
  for (std::size_t t = 0; t < record.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "_t%04zu.pgm", t);
    const std::string rel = frame_dir + "/" + stem + name;
    const auto& s = record.states[t];
    depthcam::save_depth(base / rel, record.frames[t], intr, {s.position, s.yaw});
    json line = {
        {"t", t},
        {"state",
         {{"position", vec_json(s.position)},
          {"velocity", vec_json(s.velocity)},
          {"yaw", s.yaw},
          {"yaw_rate", s.yaw_rate}}},
        {"action", record.actions[t].as_array()},
        {"reward", record.rewards[t]},
        {"term", to_string(record.terms[t])},
        {"depth", rel},
        {"world", record.world_index},
        {"seed", record.seed},
    };
    os << line.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + jsonl.string());
}

EpisodeRecord load_episode(const std::filesystem::path& jsonl) {
  std::ifstream is(jsonl);
  if (!is) throw InvalidArgument("cannot read " + jsonl.string());
  EpisodeRecord rec;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("t").get<std::size_t>() != rec.size()) {
      throw InvalidArgument("episode steps out of order in " + jsonl.string());
    }
    UavState s;
    s.position = json_vec(j.at("state").at("position"));
    s.velocity = json_vec(j.at("state").at("velocity"));
    s.yaw = j.at("state").at("yaw").get<double>();
    s.yaw_rate = j.at("state").at("yaw_rate").get<double>();
    rec.states.push_back(s);
    rec.actions.push_back(Action::from_array(j.at("action").get<std::array<double, 4>>()));
    rec.rewards.push_back(j.at("reward").get<double>());
    const auto term = parse_termination(j.at("term").get<std::string>());
    if (!term) throw InvalidArgument("unknown termination in " + jsonl.string());
    rec.terms.push_back(*term);
    rec.frames.push_back(
        depthcam::load_depth(jsonl.parent_path() / j.at("depth").get<std::string>()).image);
    rec.world_index = j.value("world", std::size_t{0});
    rec.seed = j.value("seed", std::uint64_t{0});
  }
  return rec;
}

}  // namespace scalenav::env
