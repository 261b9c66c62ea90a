// SPDX-License-Identifier: Apache-2.0
//
// Multi-seed evaluation protocol, per-run records, reports and trajectory export.

#ifndef SCALENAV_EVAL_HPP_
#define SCALENAV_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scalenav/env.hpp"
#include "scalenav/ppo.hpp"
#include "scalenav/repr.hpp"

namespace scalenav::eval {

struct EvalProtocol {
  int seeds{4};
  int runs_per_seed{25};
  worldgen::WorldConfig world;
  /// Remove every obstacle after generation (empty-world sanity runs).
  bool empty_world{false};
  bool deterministic{true};
  /// Average speed over every run instead of successful runs only.
  bool speed_all_runs{false};
  std::uint64_t seed{0};

  void validate() const;
  int total_runs() const { return seeds * runs_per_seed; }
};

/// World seed of run `run` under evaluation seed `seed_index`.
std::uint64_t run_world_seed(const EvalProtocol& p, int seed_index, int run);

struct TrajectoryPoint {
  Vec3 position;
  Vec3 velocity;
  double yaw{0.0};
};

struct RunRecord {
  int seed_index{0};
  int run{0};
  std::uint64_t world_seed{0};
  env::Termination termination{env::Termination::Running};
  int steps{0};
  double path_length{0.0};
  double mean_horizontal_speed{0.0};
  Vec3 start;
  /// State after each step; trajectory.size() == steps.
  std::vector<TrajectoryPoint> trajectory;

  bool arrived() const { return termination == env::Termination::Arrived; }
};

/// Fills path_length and mean_horizontal_speed from start and trajectory.
void compute_metrics(RunRecord& r);

struct EvalReport {
  std::vector<RunRecord> runs;
  bool speed_all_runs{false};

  double success_rate() const;
  /// Mean of per-run mean horizontal speed; 0 when no run qualifies.
  double average_speed() const;
  int count(env::Termination t) const;
};

/// Builds a fresh policy instance (own memory state) for one worker.
using PolicyFactory = std::function<std::unique_ptr<env::Policy>()>;

/// Deterministic agents over a frozen representation and a trained policy.
PolicyFactory agent_factory(const ppo::Representation& rep, std::shared_ptr<const ppo::PolicyNet> net,
                            bool deterministic = true);

/// One rollout; an episode that starts inside the goal radius ends at step 0.
RunRecord run_episode(env::Policy& policy, std::shared_ptr<const worldgen::World> world,
                      const env::EnvConfig& cfg, std::uint64_t episode_seed);

/// seeds x runs rollouts in freshly generated worlds; record order is fixed
/// (seed-major) regardless of `workers`.
EvalReport run_eval(const PolicyFactory& make_policy, const EvalProtocol& protocol,
                    const env::EnvConfig& env_cfg, int workers = 1);

void write_report_csv(std::ostream& os, const EvalReport& report);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
void write_report_table(std::ostream& os, const EvalReport& report);

struct SummaryRow {
  std::string label;
  double success_rate{0.0};
  double average_speed{0.0};
  int runs{0};
};

SummaryRow summarize(std::string label, const EvalReport& report);
/// Aligned text table with header (label, success rate, average speed, runs).
void write_summary_table(std::ostream& os, std::span<const SummaryRow> rows,
                         const std::string& label_header);
void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows, const std::string& label_header);

/// `<stem>.jsonl` (one run header line, then one line per step) and
/// `<stem>.dat` (whitespace table, blank line between runs).
void export_trajectories(const std::filesystem::path& stem, const EvalReport& report);
/// Rebuilds the report from `<stem>.jsonl`, recomputing every metric from the rows.
EvalReport import_trajectories(const std::filesystem::path& jsonl);

inline constexpr std::array<int, 6> kSweepIntervals = {1, 5, 10, 15, 20, 30};

struct SweepConfig {
  std::vector<int> intervals{kSweepIntervals.begin(), kSweepIntervals.end()};
  repr::MemoryArch memory;
  repr::LstmTrainConfig lstm;
  ppo::PpoConfig ppo;
  EvalProtocol protocol;
};

struct SweepRow {
  int interval{0};
  EvalReport report;
};

/// For each T: trains an LSTM on `data` with the frozen `vae`, trains a final
/// CaMeRL policy on top and evaluates it.
std::vector<SweepRow> sweep_T(const SweepConfig& cfg, const repr::ImageDataset& data,
                              std::shared_ptr<const repr::Vae> vae, const env::EnvConfig& env_cfg,
                              const ppo::WorldSampler& train_worlds, int workers = 1,
                              const std::function<void(const SweepRow&)>& on_row = {});

}  // namespace scalenav::eval

#endif  // SCALENAV_EVAL_HPP_
