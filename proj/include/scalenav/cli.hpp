// SPDX-License-Identifier: Apache-2.0
//
// Run configuration (INI) and the pipeline subcommands behind the `scalenav` tool.

#ifndef SCALENAV_CLI_HPP_
#define SCALENAV_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "scalenav/capre.hpp"
#include "scalenav/env.hpp"
#include "scalenav/eval.hpp"
#include "scalenav/ppo.hpp"
#include "scalenav/repr.hpp"
#include "scalenav/worldgen.hpp"

namespace scalenav::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrerequisite = 3;
inline constexpr int kExitRuntime = 4;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingPrerequisite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed{0};
  std::filesystem::path out{"run"};
  int workers{1};

  // [world]
  worldgen::ScaleName scale{worldgen::ScaleName::Nominal};
  /// 0 selects the scale class default.
  double poisson_radius{0.0};
  double size_x{20.0};
  double size_y{20.0};
  double ceiling{3.0};
  double clearance{0.30};
  int world_count{8};

  depthcam::CameraIntrinsics camera;                            // [camera]
  capre::CollisionAwareConfig capre;                            // [capre]
  dynamics::DynamicsConfig dynamics;                            // [dynamics]
  env::RewardConfig reward;                                     // [reward]
  int max_steps{300};                                           // [reward]
  env::CollectConfig collect;                                   // [collect]
  repr::VaeArch vae_arch;                                       // [vae]
  repr::TrainConfig vae;                                        // [vae]
  repr::MemoryArch lstm_arch;                                   // [lstm]
  repr::LstmTrainConfig lstm;                                   // [lstm]
  ppo::PpoConfig ppo;                                           // [ppo]
  eval::EvalProtocol protocol;                                  // [eval]
  std::vector<int> sweep_intervals{eval::kSweepIntervals.begin(), eval::kSweepIntervals.end()};  // [eval]
  /// Eval world class; defaults to the training class.
  std::string eval_scale;                                       // [eval]

  /// Throws ConfigError on unknown sections/keys or malformed values.
  void load(std::istream& is);
  void load(const std::filesystem::path& ini);
  /// `section.key = value` lines in registry order; round-trips through load().
  std::string dump() const;
  /// Cross-field validation of every module config.
  void validate() const;

  worldgen::WorldConfig world_config(bool for_eval = false) const;
  env::EnvConfig env_config() const;
  eval::EvalProtocol eval_protocol() const;
};

struct ConfigKeyInfo {
  std::string section;  // empty for top-level keys
  std::string key;
  std::string value;    // current value as text
};

/// Every accepted key with its current value.
std::vector<ConfigKeyInfo> config_keys(const RunConfig& cfg);

/// Entry point of the `scalenav` executable; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// FNV-1a 64 over the raw bytes of a file.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace scalenav::cli

#endif  // SCALENAV_CLI_HPP_
