// SPDX-License-Identifier: Apache-2.0
//
// PPO over a tanh-squashed Gaussian MLP policy, rollout collection and the
// staged training driver for the four ablation modes.

#ifndef SCALENAV_PPO_HPP_
#define SCALENAV_PPO_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "scalenav/env.hpp"
#include "scalenav/repr.hpp"
#include "scalenav/tensor.hpp"

namespace scalenav::ppo {

using tensor::Tensor;

inline constexpr int kActionDim = 4;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

enum class AblationMode { VanillaRL, CaRL, MeRL, CaMeRL };

std::string_view to_string(AblationMode m);
std::optional<AblationMode> parse_mode(std::string_view text);
inline constexpr std::array<AblationMode, 4> kAllModes = {
    AblationMode::VanillaRL, AblationMode::CaRL, AblationMode::MeRL, AblationMode::CaMeRL};

/// CaRL and CaMeRL use the VAE supervised on collision-aware targets.
bool collision_aware(AblationMode m);
/// MeRL and CaMeRL feed the LSTM hidden state instead of z.
bool uses_memory(AblationMode m);

/// Per-component bounds of the squashed action: (a_max, a_max, a_max, yaw_rate_max).
std::array<double, kActionDim> action_scale(const dynamics::DynamicsConfig& cfg);

struct PolicyArch {
  int obs_dim{env::kStateDim + repr::kLatentDim};
  int hidden{256};
  std::array<double, kActionDim> scale{5.0, 5.0, 5.0, 1.5};
  double init_log_std{-0.5};

  void validate() const;
};

class PolicyNet {
 public:
  explicit PolicyNet(PolicyArch arch = {}, std::uint64_t seed = 0);

  struct Output {
    Tensor mean;     // [B, 4], pre-squash
    Tensor log_std;  // [4], clamped
    Tensor value;    // [B]
  };
  /// obs: [B, obs_dim].
  Output forward(const Tensor& obs) const;

  const PolicyArch& arch() const { return arch_; }
  tensor::ParamSet& params() { return params_; }
  const tensor::ParamSet& params() const { return params_; }

 private:
  PolicyArch arch_;
  tensor::ParamSet params_;
  Tensor w1_, b1_, w2_, b2_, wm_, bm_, wv_, bv_, log_std_;
};

/// Gaussian log-density of pre-squash u plus the tanh change of variables, per row.
/// mean, u: [B, 4]; log_std: [4] -> [B].
Tensor squashed_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& u,
                         const std::array<double, kActionDim>& scale);

struct ActResult {
  dynamics::Action action;
  std::array<double, kActionDim> u{};  // pre-squash sample
  double log_prob{0.0};
  double value{0.0};
};

/// Samples a = scale * tanh(u), u ~ N(mean, std). `rng == nullptr` returns the mean action.
ActResult act(const PolicyNet& net, std::span<const double> obs, std::mt19937_64* rng);

struct RolloutBuffer {
  int obs_dim{0};
  std::vector<double> obs;  // row-major [size, obs_dim]
  std::vector<std::array<double, kActionDim>> u;
  std::vector<double> log_prob;
  std::vector<double> value;
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  /// Value of the state after the last step; ignored when the last step is done.
  double bootstrap{0.0};
  std::vector<double> advantage;
  std::vector<double> ret;

  std::size_t size() const { return reward.size(); }
  void push(std::span<const double> o, const ActResult& a, double r, bool d);
  /// Appends another buffer whose advantages are already computed.
  void append(const RolloutBuffer& other);
  void check() const;
};

/// Recursive GAE; a done step cuts both the bootstrap and the recursion.
void gae(RolloutBuffer& buf, double gamma, double lambda);

struct PpoConfig {
  double gamma{0.99};
  double gae_lambda{0.95};
  double clip_ratio{0.2};
  double entropy_coef{0.003};
  double value_coef{0.5};
  int epochs{10};
  int minibatch{256};
  int rollout_length{2048};
  std::int64_t total_steps{200000};
  double learning_rate{3e-4};
  double max_grad_norm{0.5};
  /// Environment slots per rollout; fixes the result regardless of worker count.
  int num_envs{8};
  int hidden{256};
  double init_log_std{-0.5};
  std::uint64_t seed{0};

  void validate() const;
};

struct PpoLoss {
  Tensor total;
  Tensor policy;
  Tensor value;
  Tensor entropy;
  double clip_fraction{0.0};
  double approx_kl{0.0};
};

/// Clipped surrogate, value MSE and entropy bonus over the rows in `idx`.
/// `adv` are the (already normalized) advantages for the whole buffer.
PpoLoss ppo_loss(const PolicyNet& net, const RolloutBuffer& buf, std::span<const double> adv,
                 std::span<const std::size_t> idx, const PpoConfig& cfg);

struct UpdateMetrics {
  double policy_loss{0.0};
  double value_loss{0.0};
  double entropy{0.0};
  double approx_kl{0.0};
  double clip_fraction{0.0};
};

/// Normalizes advantages, then cfg.epochs passes of shuffled minibatch Adam steps.
UpdateMetrics ppo_update(const RolloutBuffer& buf, PolicyNet& net, tensor::AdamState& adam,
                         const PpoConfig& cfg, std::mt19937_64& rng);

/// Frozen perception stack shared read-only across rollout workers.
struct Representation {
  std::shared_ptr<const repr::Vae> vae;
  std::shared_ptr<const repr::Memory> memory;  // null for VanillaRL and CaRL

  int memory_dim() const;
  /// Combined checksum of every representation parameter.
  std::uint64_t checksum() const;
};

enum class Stage { Initial, Final };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view text);

struct RepresentationPaths {
  std::filesystem::path vae;     // checkpoint prefix
  std::filesystem::path memory;  // checkpoint prefix, memory modes only
};

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stage Initial: fresh random VAE and LSTM from `seed`. Stage Final: loaded
/// from `paths`. Both come back frozen.
Representation make_representation(Stage stage, AblationMode mode, const RepresentationPaths& paths,
                                   const repr::VaeArch& vae_arch, const repr::MemoryArch& mem_arch,
                                   std::uint64_t seed);

/// Per-episode perception state: encodes each frame and advances the LSTM.
class Agent : public env::Policy {
 public:
  Agent(Representation rep, std::shared_ptr<const PolicyNet> net, bool deterministic);

  void begin_episode(std::uint64_t episode_seed) override;
  dynamics::Action act(const dynamics::UavState& state, const Vec3& goal,
                       const depthcam::DepthImage& frame) override;

  /// Flattened observation for this frame; advances the memory state.
  std::vector<double> observe(const dynamics::UavState& state, const Vec3& goal,
                              const depthcam::DepthImage& frame);
  ActResult decide(std::span<const double> obs);

  const PolicyNet& net() const { return *net_; }

 private:
  Representation rep_;
  std::shared_ptr<const PolicyNet> net_;
  bool deterministic_;
  std::mt19937_64 rng_;
  repr::Memory::State state_;
};

/// Builds the world for one episode from its seed.
using WorldSampler = std::function<std::shared_ptr<const worldgen::World>(std::uint64_t)>;

/// Fresh world per seed from `base`; retries on placement failure.
WorldSampler world_sampler(const worldgen::WorldConfig& base, bool clear_obstacles = false);

struct UpdateLog {
  int update{0};
  std::int64_t steps{0};
  int episodes{0};
  double mean_return{0.0};
  double success_rate{0.0};
  UpdateMetrics metrics;
};

void write_update_log(const std::filesystem::path& csv, std::span<const UpdateLog> log);

struct PolicyTraining {
  std::shared_ptr<PolicyNet> net;
  std::vector<UpdateLog> log;
};

/// Rollouts run over cfg.num_envs slots, spread across `workers` threads;
/// slot s uses episode seeds derived from (cfg.seed, s, episode counter).
PolicyTraining train_policy(const Representation& rep, const env::EnvConfig& env_cfg,
                            const WorldSampler& worlds, const PpoConfig& cfg, int workers = 1,
                            const std::function<void(const UpdateLog&)>& on_update = {});

/// Full driver: builds the representation for `stage` (checkpoints required for
/// Final) and trains a policy on top of it.
PolicyTraining train_policy(Stage stage, AblationMode mode, const env::EnvConfig& env_cfg,
                            const WorldSampler& worlds, const RepresentationPaths& paths,
                            const repr::VaeArch& vae_arch, const repr::MemoryArch& mem_arch,
                            const PpoConfig& cfg, int workers = 1,
                            const std::function<void(const UpdateLog&)>& on_update = {});

/// Policy architecture implied by a representation and configs.
PolicyArch policy_arch(const Representation& rep, const env::EnvConfig& env_cfg,
                       const PpoConfig& cfg);

}  // namespace scalenav::ppo

#endif  // SCALENAV_PPO_HPP_
