// SPDX-License-Identifier: Apache-2.0
//
// Episodic navigation environment: observation layout, reward, termination
// and episode recording.

#ifndef SCALENAV_ENV_HPP_
#define SCALENAV_ENV_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "scalenav/depthcam.hpp"
#include "scalenav/dynamics.hpp"
#include "scalenav/worldgen.hpp"

namespace scalenav::env {

/// log d_hor, d_z, d_norm(3), v_world(3), euler(3), omega_body(3).
inline constexpr int kStateDim = 14;
inline constexpr double kMinHorizontalDistance = 1e-3;

struct Observation {
  double log_d_hor{0.0};
  double d_z{0.0};
  Vec3 d_norm{1.0, 0.0, 0.0};
  Vec3 v_world;
  Vec3 euler;
  Vec3 omega_body;
  std::vector<double> memory;

  /// State block followed by the memory slot.
  std::vector<double> flatten() const;
};

struct RewardConfig {
  double r_arrive{10.0};
  double r_collision{-10.0};
  double r_exceed{-5.0};
  double lambda_d{-0.05};
  double lambda_z{-0.02};
  double lambda_v{-0.01};
  double lambda_dir{-0.01};
  double lambda_ang{-0.005};
  double lambda_lat{-0.005};
  double d_min{0.5};
  double v_max{3.0};
  /// Literal lambda_z * d_z instead of lambda_z * |d_z|.
  bool signed_dz{false};

  void validate() const;
};

enum class Termination { Running, Arrived, Collision, OutOfBounds, Timeout };

std::string_view to_string(Termination t);
std::optional<Termination> parse_termination(std::string_view text);

struct EnvConfig {
  RewardConfig reward;
  dynamics::DynamicsConfig dynamics;
  depthcam::CameraIntrinsics camera;
  double d_uav{0.30};
  int max_steps{300};

  void validate() const;
};

struct StepOutcome {
  Observation observation;
  double reward{0.0};
  Termination termination{Termination::Running};
};

Observation make_observation(const dynamics::UavState& state, const Vec3& goal,
                             std::span<const double> memory = {});

/// Dense shaping term; every weight is expected to be non-positive.
double progress_reward(const dynamics::UavState& state, const Vec3& goal,
                       const RewardConfig& cfg);

/// Terminal checks in priority order Arrived > Collision > OutOfBounds > Timeout.
Termination classify(const dynamics::UavState& state, const worldgen::World& world,
                     const EnvConfig& cfg, int steps_taken);

double terminal_reward(Termination t, const RewardConfig& cfg);

class Environment {
 public:
  Environment(std::shared_ptr<const worldgen::World> world, EnvConfig cfg);

  /// Hover at the world start, facing the goal.
  void reset();
  void reset(const dynamics::UavState& state);

  /// Throws std::logic_error once the episode has terminated.
  StepOutcome step(const dynamics::Action& action);

  depthcam::DepthImage render() const;
  depthcam::CameraPose camera_pose() const;
  Observation observe(std::span<const double> memory = {}) const;

  const dynamics::UavState& state() const { return state_; }
  const worldgen::World& world() const { return *world_; }
  const EnvConfig& config() const { return cfg_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }

 private:
  std::shared_ptr<const worldgen::World> world_;
  EnvConfig cfg_;
  dynamics::UavState state_;
  int steps_{0};
  bool done_{false};
};

/// Behaviour driving an environment; owns its own memory state.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(std::uint64_t episode_seed) = 0;
  virtual dynamics::Action act(const dynamics::UavState& state, const Vec3& goal,
                               const depthcam::DepthImage& frame) = 0;
};

struct EpisodeRecord {
  std::vector<depthcam::DepthImage> frames;
  std::vector<dynamics::UavState> states;
  std::vector<dynamics::Action> actions;
  std::vector<double> rewards;
  std::vector<Termination> terms;
  std::size_t world_index{0};
  std::uint64_t seed{0};

  std::size_t size() const { return frames.size(); }
};

/// Runs one episode to termination, recording every step.
EpisodeRecord rollout_episode(Policy& policy, std::shared_ptr<const worldgen::World> world,
                              const EnvConfig& cfg, std::uint64_t seed);

struct CollectConfig {
  int episodes{200};
  int cap_frames{10000};
  std::uint64_t seed{0};
};

/// Episodes cycle through `worlds`; each episode is limited to
/// ceil(cap_frames / episodes) steps so both caps are met together.
std::vector<EpisodeRecord> collect_dataset(
    Policy& policy, std::span<const std::shared_ptr<const worldgen::World>> worlds,
    const EnvConfig& cfg, const CollectConfig& collect);

/// JSON lines, one step per line; frames written as PGM next to it under
/// `frame_dir` (relative to the JSONL file's directory).
void save_episode(const std::filesystem::path& jsonl, const EpisodeRecord& record,
                  const depthcam::CameraIntrinsics& intr, const std::string& frame_dir);
EpisodeRecord load_episode(const std::filesystem::path& jsonl);

}  // namespace scalenav::env

#endif  // SCALENAV_ENV_HPP_
