// SPDX-License-Identifier: Apache-2.0
//
// Depth-image VAE and recurrent memory: models, losses and training loops.

#ifndef SCALENAV_REPR_HPP_
#define SCALENAV_REPR_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "scalenav/capre.hpp"
#include "scalenav/depthcam.hpp"
#include "scalenav/env.hpp"
#include "scalenav/tensor.hpp"

namespace scalenav::repr {

using tensor::Tensor;

inline constexpr int kLatentDim = 64;
inline constexpr int kHiddenDim = 256;
inline constexpr int kDefaultInterval = 10;

/// depth / max_range, row-major.
std::vector<double> normalized_values(const depthcam::DepthImage& img);
/// [1, 1, H, W] tensor of normalized depth.
Tensor normalize_depth(const depthcam::DepthImage& img);
depthcam::DepthImage denormalize_depth(std::span<const double> values, int width, int height,
                                       double max_range);

struct VaeArch {
  int width{64};
  int height{48};
  std::vector<int> channels{8, 16, 32, 32, 64, 64};
  int latent{kLatentDim};

  void validate() const;
};

class Vae {
 public:
  explicit Vae(VaeArch arch = {}, std::uint64_t seed = 0);

  struct Gaussian {
    Tensor mu;
    Tensor log_var;
  };

  /// x: [N, 1, H, W] normalized depth.
  Gaussian encode(const Tensor& x) const;
  /// z: [N, latent] -> [N, 1, H, W] in [0, 1].
  Tensor decode(const Tensor& z) const;

  /// Inference encoding: the posterior mean.
  std::vector<double> encode_mean(const depthcam::DepthImage& img) const;
  std::vector<double> encode_mean(std::span<const double> normalized) const;

  /// Deep copy with independent storage.
  Vae clone() const;

  const VaeArch& arch() const { return arch_; }
  tensor::ParamSet& params() { return params_; }
  const tensor::ParamSet& params() const { return params_; }
  std::size_t pixels() const { return static_cast<std::size_t>(arch_.width) * arch_.height; }

 private:
  VaeArch arch_;
  tensor::ParamSet params_;
  std::vector<Tensor> enc_w_, enc_b_, dec_w_, dec_b_;
  Tensor mu_w_, mu_b_, lv_w_, lv_b_, proj_w_, proj_b_;
  std::vector<std::array<int, 2>> sizes_;  // encoder activations (h, w), input first
  std::vector<std::array<int, 2>> out_pad_;
};

struct VaeLoss {
  Tensor total;
  Tensor coll;
  Tensor kl;
};

/// L_coll + lambda_kl * L_KL; input `raw`, supervision `target`, both [N, 1, H, W].
VaeLoss vae_loss(const Tensor& raw, const Tensor& target, const Vae& vae, double lambda_kl,
                 std::mt19937_64& rng);

/// Frames with a reconstruction target per frame and episode boundaries.
struct ImageDataset {
  int width{0};
  int height{0};
  std::vector<double> input;
  /// Empty when the target is the input itself.
  std::vector<double> target;
  /// episode_offsets[e] .. episode_offsets[e+1] index frames of episode e.
  std::vector<std::size_t> episode_offsets{0};

  std::size_t count() const;
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::span<const double> input_at(std::size_t i) const;
  std::span<const double> target_at(std::size_t i) const;
  std::size_t episodes() const { return episode_offsets.size() - 1; }

  void add_episode(std::span<const depthcam::DepthImage> raw,
                   std::span<const depthcam::DepthImage> target);
};

enum class Supervision { CollisionAware, Raw };

ImageDataset build_dataset(std::span<const env::EpisodeRecord> episodes,
                           const capre::CollisionAwareConfig& cfg, Supervision supervision);

struct TrainConfig {
  double lambda_kl{1e-5};
  double learning_rate{1e-3};
  int batch_size{32};
  int epochs{30};
  std::uint64_t seed{0};
  double grad_clip{10.0};

  void validate() const;
};

struct EpochLog {
  int epoch{0};
  double l_coll{0.0};
  double l_kl{0.0};
  double l_lstm{0.0};
};

void write_training_log(const std::filesystem::path& csv, std::span<const EpochLog> log);

using EpochCallback = std::function<void(const EpochLog&)>;

struct VaeFit {
  double l_coll{0.0};
  double l_kl{0.0};
};

/// Reconstruction MSE from the posterior mean, and KL, over the whole dataset.
VaeFit evaluate_vae(const Vae& vae, const ImageDataset& data);

/// MSE of the per-pixel mean target image.
double mean_image_baseline(const ImageDataset& data);

struct VaeTraining {
  Vae vae;
  std::vector<EpochLog> log;  // epoch 0 is the untrained evaluation
  int best_epoch{0};
};

/// Minibatch Adam; returns the parameters of the epoch with the lowest training loss.
VaeTraining train_vae(const ImageDataset& data, const VaeArch& arch, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

struct MemoryArch {
  int latent{kLatentDim};
  int hidden{kHiddenDim};
  int interval{kDefaultInterval};

  void validate() const;
};

class Memory {
 public:
  explicit Memory(MemoryArch arch = {}, std::uint64_t seed = 0);

  struct State {
    std::vector<double> h;
    std::vector<double> c;
  };

  /// Zero state used at every episode start.
  State initial_state() const;
  State step(std::span<const double> z, const State& prev) const;

  std::pair<Tensor, Tensor> cell(const Tensor& z, const Tensor& h, const Tensor& c) const;
  /// [B, hidden] -> [B, 2 latent]: (z_hat_{t-T}, z_hat_t).
  Tensor head(const Tensor& h) const;

  Memory clone() const;

  const MemoryArch& arch() const { return arch_; }
  tensor::ParamSet& params() { return params_; }
  const tensor::ParamSet& params() const { return params_; }

 private:
  MemoryArch arch_;
  tensor::ParamSet params_;
  tensor::LstmCellParams lstm_;
  Tensor head_w_, head_b_;
};

class SequenceTooShort : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Batched dual-frame loss. latents[t]: [B, latent]; targets[t]: [B, 1, H, W].
/// Averages MSE(I_t) + MSE(I_{t-T}) over t in [T, L).
Tensor lstm_loss(std::span<const Tensor> latents, std::span<const Tensor> targets, const Vae& vae,
                 const Memory& mem, int interval);

/// Single sequence: frames are encoded with the VAE mean, targets are `ca`.
Tensor lstm_loss(std::span<const depthcam::DepthImage> raw,
                 std::span<const depthcam::DepthImage> ca, const Vae& vae, const Memory& mem,
                 int interval);

/// Window length used for truncated backprop over `data` (2T+5, shortened to
/// the longest episode when no episode is that long).
int window_length(const ImageDataset& data, int interval);

struct LstmTrainConfig {
  double learning_rate{1e-3};
  int batch_size{8};
  int epochs{30};
  std::uint64_t seed{0};
  double grad_clip{1.0};

  void validate() const;
};

struct MemoryTraining {
  Memory memory;
  std::vector<EpochLog> log;
  int window{0};
};

/// The VAE is used frozen and is left unchanged.
MemoryTraining train_lstm(const ImageDataset& data, const Vae& vae, const MemoryArch& arch,
                          const LstmTrainConfig& cfg, const EpochCallback& on_epoch = {});

struct PastReconstruction {
  double model_mse{0.0};     // decode(z_hat_{t-T}) vs target_{t-T}
  double baseline_mse{0.0};  // decode(z_t) vs target_{t-T}
  std::size_t samples{0};
};

/// Past-frame reconstruction error over every valid step of every episode.
PastReconstruction evaluate_past_reconstruction(const ImageDataset& data, const Vae& vae,
                                                const Memory& mem);

}  // namespace scalenav::repr

#endif  // SCALENAV_REPR_HPP_
