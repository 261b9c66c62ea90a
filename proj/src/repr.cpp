// SPDX-License-Identifier: Apache-2.0

#include "scalenav/repr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

namespace scalenav::repr {

using tensor::NoGradGuard;
using tensor::ParamSet;
using tensor::Shape;

namespace {

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;
constexpr std::size_t kEvalBatch = 64;

int conv_out(int n) { return (n + 2 * kPad - kKernel) / kStride + 1; }

void copy_values(const ParamSet& from, ParamSet& to) {
  const auto& a = from.entries();
  auto& b = to.entries();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto src = a[i].tensor.values();
    std::copy(src.begin(), src.end(), b[i].tensor.values().begin());
  }
}

std::vector<std::vector<double>> snapshot(const ParamSet& p) {
  std::vector<std::vector<double>> out;
  for (const auto& e : p.entries()) {
    const auto v = e.tensor.values();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void restore(ParamSet& p, const std::vector<std::vector<double>>& snap) {
  auto& entries = p.entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    std::copy(snap[i].begin(), snap[i].end(), entries[i].tensor.values().begin());
}

Tensor image_batch(const ImageDataset& data, std::span<const std::size_t> idx, bool target) {
  const std::size_t px = data.pixels();
  std::vector<double> v(idx.size() * px);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = target ? data.target_at(idx[k]) : data.input_at(idx[k]);
    std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(k * px));
  }
  return Tensor::from({static_cast<int>(idx.size()), 1, data.height, data.width}, std::move(v));
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what);
}

bool any_requires_grad(const ParamSet& p) {
  for (const auto& e : p.entries())
    if (e.tensor.requires_grad()) return true;
  return false;
}

}  // namespace

std::vector<double> normalized_values(const depthcam::DepthImage& img) {
  if (!(img.max_range > 0.0)) throw InvalidArgument("depth image needs a positive max_range");
  std::vector<double> out(img.data.size());
  const double inv = 1.0 / img.max_range;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i] * inv;
  return out;
}

Tensor normalize_depth(const depthcam::DepthImage& img) {
  return Tensor::from({1, 1, img.height, img.width}, normalized_values(img));
}

depthcam::DepthImage denormalize_depth(std::span<const double> values, int width, int height,
                                       double max_range) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("denormalize_depth: value count does not match image size");
  }
  depthcam::DepthImage img(width, height, max_range, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) img.data[i] = values[i] * max_range;
  return img;
}

void VaeArch::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("VAE image size must be positive");
  if (channels.size() != 6) throw InvalidArgument("VAE needs exactly six convolution widths");
  for (int c : channels)
    if (c < 1) throw InvalidArgument("VAE channel counts must be positive");
  if (latent < 1) throw InvalidArgument("VAE latent size must be positive");
}

Vae::Vae(VaeArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  sizes_.push_back({arch_.height, arch_.width});
  int ci = 1;
  for (std::size_t i = 0; i < arch_.channels.size(); ++i) {
    const int co = arch_.channels[i];
    auto& w = params_.add("enc" + std::to_string(i) + ".w", {co, ci, kKernel, kKernel});
    tensor::init_uniform(w, std::sqrt(6.0 / (ci * kKernel * kKernel)), rng);
    enc_w_.push_back(w);
    enc_b_.push_back(params_.add("enc" + std::to_string(i) + ".b", {co}));
    sizes_.push_back({conv_out(sizes_.back()[0]), conv_out(sizes_.back()[1])});
    ci = co;
  }
  const int flat = ci * sizes_.back()[0] * sizes_.back()[1];
  mu_w_ = params_.add("mu.w", {flat, arch_.latent});
  tensor::init_uniform(mu_w_, std::sqrt(3.0 / flat), rng);
  mu_b_ = params_.add("mu.b", {arch_.latent});
  lv_w_ = params_.add("logvar.w", {flat, arch_.latent});
  tensor::init_uniform(lv_w_, 0.1 * std::sqrt(3.0 / flat), rng);
  lv_b_ = params_.add("logvar.b", {arch_.latent});
  proj_w_ = params_.add("proj.w", {arch_.latent, flat});
  tensor::init_uniform(proj_w_, std::sqrt(6.0 / arch_.latent), rng);
  proj_b_ = params_.add("proj.b", {flat});
  for (int j = 0; j < 6; ++j) {
    const int in_c = arch_.channels[5 - j];
    const int out_c = j < 5 ? arch_.channels[4 - j] : 1;
    const double fan_in = in_c * kKernel * kKernel / double(kStride * kStride);
    auto& w = params_.add("dec" + std::to_string(j) + ".w", {in_c, out_c, kKernel, kKernel});
    tensor::init_uniform(w, std::sqrt((j < 5 ? 6.0 : 3.0) / fan_in), rng);
    dec_w_.push_back(w);
    dec_b_.push_back(params_.add("dec" + std::to_string(j) + ".b", {out_c}));
    const auto& in = sizes_[6 - j];
    const auto& out = sizes_[5 - j];
    out_pad_.push_back({out[0] - 2 * in[0] + 1, out[1] - 2 * in[1] + 1});
  }
}

Vae::Gaussian Vae::encode(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != arch_.height || x.dim(3) != arch_.width) {
    throw tensor::ShapeError("VAE input " + tensor::shape_str(x.shape()) + " vs expected [N,1," +
                             std::to_string(arch_.height) + "," + std::to_string(arch_.width) +
                             "]");
  }
  Tensor h = x;
  for (std::size_t i = 0; i < enc_w_.size(); ++i)
    h = tensor::relu(tensor::conv2d(h, enc_w_[i], enc_b_[i], kStride, kPad));
  const int n = x.dim(0);
  h = tensor::reshape(h, {n, static_cast<int>(h.size()) / n});
  Tensor mu = tensor::affine(h, mu_w_, mu_b_);
  Tensor lv = tensor::clamp(tensor::affine(h, lv_w_, lv_b_), tensor::kLogVarMin, tensor::kLogVarMax);
  return {mu, lv};
}

Tensor Vae::decode(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != arch_.latent) {
    throw tensor::ShapeError("VAE latent " + tensor::shape_str(z.shape()) + " vs expected [N," +
                             std::to_string(arch_.latent) + "]");
  }
  const auto& s = sizes_.back();
  Tensor y = tensor::relu(tensor::affine(z, proj_w_, proj_b_));
  y = tensor::reshape(y, {z.dim(0), arch_.channels.back(), s[0], s[1]});
  for (std::size_t j = 0; j < dec_w_.size(); ++j) {
    y = tensor::conv_transpose2d(y, dec_w_[j], dec_b_[j], kStride, kPad, out_pad_[j][0],
                                 out_pad_[j][1]);
    y = j + 1 < dec_w_.size() ? tensor::relu(y) : tensor::sigmoid(y);
  }
  return y;
}

std::vector<double> Vae::encode_mean(std::span<const double> normalized) const {
  if (normalized.size() != pixels()) throw tensor::ShapeError("encode_mean: image size mismatch");
  NoGradGuard guard;
  Tensor x = Tensor::from({1, 1, arch_.height, arch_.width},
                          std::vector<double>(normalized.begin(), normalized.end()));
  const Tensor mu = encode(x).mu;
  return {mu.values().begin(), mu.values().end()};
}

std::vector<double> Vae::encode_mean(const depthcam::DepthImage& img) const {
  return encode_mean(normalized_values(img));
}

Vae Vae::clone() const {
  Vae out(arch_, 0);
  copy_values(params_, out.params_);
  for (std::size_t i = 0; i < params_.entries().size(); ++i)
    out.params_.entries()[i].tensor.set_requires_grad(params_.entries()[i].tensor.requires_grad());
  return out;
}

VaeLoss vae_loss(const Tensor& raw, const Tensor& target, const Vae& vae, double lambda_kl,
                 std::mt19937_64& rng) {
  if (raw.shape() != target.shape()) {
    throw tensor::ShapeError("vae_loss: input " + tensor::shape_str(raw.shape()) + " vs target " +
                             tensor::shape_str(target.shape()));
  }
  if (!(lambda_kl >= 0.0)) throw InvalidArgument("lambda_kl must be non-negative");
  const auto g = vae.encode(raw);
  const Tensor z = tensor::reparameterize(g.mu, g.log_var, rng);
  VaeLoss out;
  out.coll = tensor::mse(vae.decode(z), target);
  out.kl = tensor::gaussian_kl(g.mu, g.log_var);
  out.total = tensor::add(out.coll, tensor::scale(out.kl, lambda_kl));
  return out;
}

std::size_t ImageDataset::count() const {
  const std::size_t px = pixels();
  return px == 0 ? 0 : input.size() / px;
}

std::span<const double> ImageDataset::input_at(std::size_t i) const {
  return std::span<const double>(input).subspan(i * pixels(), pixels());
}

std::span<const double> ImageDataset::target_at(std::size_t i) const {
  const auto& src = target.empty() ? input : target;
  return std::span<const double>(src).subspan(i * pixels(), pixels());
}

void ImageDataset::add_episode(std::span<const depthcam::DepthImage> raw,
                               std::span<const depthcam::DepthImage> tgt) {
  if (!tgt.empty() && tgt.size() != raw.size()) {
    throw InvalidArgument("add_episode: input and target frame counts differ");
  }
  if (raw.empty()) return;
  if (count() > 0 && target.empty() != tgt.empty()) {
    throw InvalidArgument("add_episode: cannot mix self-supervised and targeted episodes");
  }
  if (width == 0) {
    width = raw.front().width;
    height = raw.front().height;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].width != width || raw[i].height != height ||
        (!tgt.empty() && !tgt[i].same_shape(raw[i]))) {
      throw tensor::ShapeError("add_episode: frame size differs from dataset size");
    }
    const auto a = normalized_values(raw[i]);
    input.insert(input.end(), a.begin(), a.end());
    if (!tgt.empty()) {
      const auto b = normalized_values(tgt[i]);
      target.insert(target.end(), b.begin(), b.end());
    }
  }
  episode_offsets.push_back(count());
}

ImageDataset build_dataset(std::span<const env::EpisodeRecord> episodes,
                           const capre::CollisionAwareConfig& cfg, Supervision supervision) {
  ImageDataset data;
  for (const auto& ep : episodes) {
    if (supervision == Supervision::Raw) {
      data.add_episode(ep.frames, {});
      continue;
    }
    std::vector<depthcam::DepthImage> ca;
    ca.reserve(ep.frames.size());
    for (const auto& f : ep.frames) ca.push_back(capre::collision_aware(f, cfg));
    data.add_episode(ep.frames, ca);
  }
  return data;
}

void TrainConfig::validate() const {
  if (!(lambda_kl >= 0.0)) throw InvalidArgument("lambda_kl must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (batch_size < 1 || epochs < 1) throw InvalidArgument("batch size and epochs must be positive");
}

void write_training_log(const std::filesystem::path& csv, std::span<const EpochLog> log) {
  std::ofstream os(csv);
  if (!os) throw std::runtime_error("cannot write " + csv.string());
  os << "epoch,L_coll,L_KL,L_LSTM\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.l_coll, e.l_kl, e.l_lstm);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + csv.string());
}

VaeFit evaluate_vae(const Vae& vae, const ImageDataset& data) {
  NoGradGuard guard;
  VaeFit fit;
  const std::size_t n = data.count();
  if (n == 0) return fit;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < n; b += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, n - b));
    std::iota(idx.begin(), idx.end(), b);
    const auto g = vae.encode(image_batch(data, idx, false));
    const double m = static_cast<double>(idx.size());
    fit.l_coll += tensor::mse(vae.decode(g.mu), image_batch(data, idx, true)).item() * m;
    fit.l_kl += tensor::gaussian_kl(g.mu, g.log_var).item() * m;
  }
  fit.l_coll /= static_cast<double>(n);
  fit.l_kl /= static_cast<double>(n);
  return fit;
}

double mean_image_baseline(const ImageDataset& data) {
  const std::size_t n = data.count(), px = data.pixels();
  if (n == 0) return 0.0;
  std::vector<double> mean(px, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = data.target_at(i);
    for (std::size_t p = 0; p < px; ++p) mean[p] += t[p];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = data.target_at(i);
    for (std::size_t p = 0; p < px; ++p) sq += (t[p] - mean[p]) * (t[p] - mean[p]);
  }
  return sq / static_cast<double>(n * px);
}

VaeTraining train_vae(const ImageDataset& data, const VaeArch& arch, const TrainConfig& cfg,
                      const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  if (data.count() == 0) throw InvalidArgument("train_vae: empty dataset");
  if (data.width != arch.width || data.height != arch.height) {
    throw tensor::ShapeError("train_vae: dataset frames do not match the VAE input size");
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  VaeTraining out{Vae(arch, derive_seed(cfg.seed, 1)), {}, 0};
  Vae& vae = out.vae;
  auto params = vae.params().tensors();
  auto adam = tensor::make_adam_state(params, {.lr = cfg.learning_rate});

  const VaeFit initial = evaluate_vae(vae, data);
  out.log.push_back({0, initial.l_coll, initial.l_kl, 0.0});
  if (on_epoch) on_epoch(out.log.back());

  std::vector<std::size_t> order(data.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  auto best_values = snapshot(vae.params());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double coll = 0.0, kl = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          b, std::min<std::size_t>(cfg.batch_size, order.size() - b));
      vae.params().zero_grad();
      const VaeLoss loss =
          vae_loss(image_batch(data, idx, false), image_batch(data, idx, true), vae, cfg.lambda_kl, rng);
      require_finite(loss.total.item(), "VAE loss");
      loss.total.backward();
      tensor::clip_grad_norm(params, cfg.grad_clip);
      tensor::adam_step(params, adam);
      coll += loss.coll.item() * static_cast<double>(idx.size());
      kl += loss.kl.item() * static_cast<double>(idx.size());
    }
    const double n = static_cast<double>(order.size());
    out.log.push_back({epoch, coll / n, kl / n, 0.0});
    if (on_epoch) on_epoch(out.log.back());
    const double total = (coll + cfg.lambda_kl * kl) / n;
    if (total < best) {
      best = total;
      out.best_epoch = epoch;
      best_values = snapshot(vae.params());
    }
  }
  restore(vae.params(), best_values);
  return out;
}

void MemoryArch::validate() const {
  if (latent < 1 || hidden < 1) throw InvalidArgument("memory sizes must be positive");
  if (interval < 1) throw InvalidArgument("memory interval T must be at least 1");
}

Memory::Memory(MemoryArch arch, std::uint64_t seed) : arch_(arch) {
  if (arch_.latent < 1 || arch_.hidden < 1) throw InvalidArgument("memory sizes must be positive");
  if (arch_.interval < 0) throw InvalidArgument("memory interval must be non-negative");
  std::mt19937_64 rng(seed);
  lstm_ = tensor::declare_lstm(params_, "lstm", arch_.latent, arch_.hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(arch_.hidden));
  tensor::init_uniform(lstm_.w_x, bound, rng);
  tensor::init_uniform(lstm_.w_h, bound, rng);
  auto bias = lstm_.bias.values();
  std::fill(bias.begin() + arch_.hidden, bias.begin() + 2 * arch_.hidden, 1.0);
  head_w_ = params_.add("head.w", {arch_.hidden, 2 * arch_.latent});
  tensor::init_uniform(head_w_, std::sqrt(3.0 / arch_.hidden), rng);
  head_b_ = params_.add("head.b", {2 * arch_.latent});
}

Memory::State Memory::initial_state() const {
  return {std::vector<double>(arch_.hidden, 0.0), std::vector<double>(arch_.hidden, 0.0)};
}

Memory::State Memory::step(std::span<const double> z, const State& prev) const {
  if (z.size() != static_cast<std::size_t>(arch_.latent) ||
      prev.h.size() != static_cast<std::size_t>(arch_.hidden) || prev.c.size() != prev.h.size()) {
    throw tensor::ShapeError("memory step: latent " + std::to_string(z.size()) + ", state " +
                             std::to_string(prev.h.size()) + "/" + std::to_string(prev.c.size()));
  }
  NoGradGuard guard;
  auto [h, c] = cell(Tensor::from({1, arch_.latent}, {z.begin(), z.end()}),
                     Tensor::from({1, arch_.hidden}, prev.h), Tensor::from({1, arch_.hidden}, prev.c));
  return {{h.values().begin(), h.values().end()}, {c.values().begin(), c.values().end()}};
}

std::pair<Tensor, Tensor> Memory::cell(const Tensor& z, const Tensor& h, const Tensor& c) const {
  return tensor::lstm_cell(z, h, c, lstm_);
}

Tensor Memory::head(const Tensor& h) const { return tensor::affine(h, head_w_, head_b_); }

Memory Memory::clone() const {
  Memory out(arch_, 0);
  copy_values(params_, out.params_);
  return out;
}

Tensor lstm_loss(std::span<const Tensor> latents, std::span<const Tensor> targets, const Vae& vae,
                 const Memory& mem, int interval) {
  if (latents.size() != targets.size()) {
    throw InvalidArgument("lstm_loss: latent and target sequences differ in length");
  }
  if (interval < 0) throw InvalidArgument("lstm_loss: interval must be non-negative");
  if (latents.size() <= static_cast<std::size_t>(interval)) {
    throw SequenceTooShort("lstm_loss: sequence of " + std::to_string(latents.size()) +
                           " steps needs more than T = " + std::to_string(interval));
  }
  if (any_requires_grad(vae.params())) throw InvalidArgument("lstm_loss needs a frozen VAE");
  const int batch = latents.front().dim(0);
  const int nz = mem.arch().latent;
  Tensor h = Tensor::zeros({batch, mem.arch().hidden});
  Tensor c = Tensor::zeros({batch, mem.arch().hidden});
  std::vector<Tensor> heads, want_past, want_now;
  for (std::size_t t = 0; t < latents.size(); ++t) {
    std::tie(h, c) = mem.cell(latents[t], h, c);
    if (t >= static_cast<std::size_t>(interval)) {
      heads.push_back(mem.head(h));
      want_past.push_back(targets[t - interval]);
      want_now.push_back(targets[t]);
    }
  }
  const Tensor pred = tensor::concat_rows(heads);
  const Tensor decoded = vae.decode(tensor::concat_rows(
      {tensor::slice_cols(pred, 0, nz), tensor::slice_cols(pred, nz, nz)}));
  want_past.insert(want_past.end(), want_now.begin(), want_now.end());
  // Both halves have equal size, so twice the joint mean is the sum of the two means.
  return tensor::scale(tensor::mse(decoded, tensor::concat_rows(want_past)), 2.0);
}

Tensor lstm_loss(std::span<const depthcam::DepthImage> raw,
                 std::span<const depthcam::DepthImage> ca, const Vae& vae, const Memory& mem,
                 int interval) {
  if (raw.size() != ca.size()) throw InvalidArgument("lstm_loss: raw and ca lengths differ");
  std::vector<Tensor> latents, targets;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    latents.push_back(Tensor::from({1, mem.arch().latent}, vae.encode_mean(raw[t])));
    targets.push_back(normalize_depth(ca[t]));
  }
  return lstm_loss(latents, targets, vae, mem, interval);
}

int window_length(const ImageDataset& data, int interval) {
  std::size_t longest = 0;
  for (std::size_t e = 0; e < data.episodes(); ++e)
    longest = std::max(longest, data.episode_offsets[e + 1] - data.episode_offsets[e]);
  const std::size_t want = 2 * static_cast<std::size_t>(interval) + 5;
  if (longest >= want) return static_cast<int>(want);
  if (longest > static_cast<std::size_t>(interval)) return static_cast<int>(longest);
  throw SequenceTooShort("no episode is longer than T = " + std::to_string(interval));
}

void LstmTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (batch_size < 1 || epochs < 1) throw InvalidArgument("batch size and epochs must be positive");
}

namespace {

std::vector<double> encode_all(const Vae& vae, const ImageDataset& data) {
  NoGradGuard guard;
  const std::size_t n = data.count(), nz = static_cast<std::size_t>(vae.arch().latent);
  std::vector<double> out(n * nz);
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < n; b += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, n - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor mu = vae.encode(image_batch(data, idx, false)).mu;
    std::copy(mu.values().begin(), mu.values().end(), out.begin() + static_cast<std::ptrdiff_t>(b * nz));
  }
  return out;
}

}  // namespace

MemoryTraining train_lstm(const ImageDataset& data, const Vae& vae, const MemoryArch& arch,
                          const LstmTrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  if (vae.arch().latent != arch.latent) {
    throw tensor::ShapeError("train_lstm: VAE latent size differs from memory input size");
  }
  if (data.width != vae.arch().width || data.height != vae.arch().height) {
    throw tensor::ShapeError("train_lstm: dataset frames do not match the VAE input size");
  }
  const std::uint64_t vae_sum = vae.params().checksum();
  Vae frozen = vae.clone();
  frozen.params().set_requires_grad(false);

  const int window = window_length(data, arch.interval);
  std::vector<std::size_t> starts;
  for (std::size_t e = 0; e < data.episodes(); ++e) {
    const std::size_t begin = data.episode_offsets[e], len = data.episode_offsets[e + 1] - begin;
    if (len < static_cast<std::size_t>(window)) continue;
    const std::size_t stride = std::max(1, window / 2);
    for (std::size_t s = 0; s + window <= len; s += stride) starts.push_back(begin + s);
    if ((len - window) % stride != 0) starts.push_back(begin + len - window);
  }

  const std::vector<double> latents = encode_all(frozen, data);
  const std::size_t nz = static_cast<std::size_t>(arch.latent), px = data.pixels();

  MemoryTraining out{Memory(arch, derive_seed(cfg.seed, 1)), {}, window};
  auto params = out.memory.params().tensors();
  auto adam = tensor::make_adam_state(params, {.lr = cfg.learning_rate});
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(starts.begin(), starts.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < starts.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t nb = std::min<std::size_t>(cfg.batch_size, starts.size() - b);
      std::vector<Tensor> zs, targets;
      for (int t = 0; t < window; ++t) {
        std::vector<double> z(nb * nz), img(nb * px);
        for (std::size_t k = 0; k < nb; ++k) {
          const std::size_t f = starts[b + k] + static_cast<std::size_t>(t);
          std::copy_n(latents.begin() + static_cast<std::ptrdiff_t>(f * nz), nz,
                      z.begin() + static_cast<std::ptrdiff_t>(k * nz));
          const auto tg = data.target_at(f);
          std::copy(tg.begin(), tg.end(), img.begin() + static_cast<std::ptrdiff_t>(k * px));
        }
        zs.push_back(Tensor::from({static_cast<int>(nb), arch.latent}, std::move(z)));
        targets.push_back(
            Tensor::from({static_cast<int>(nb), 1, data.height, data.width}, std::move(img)));
      }
      out.memory.params().zero_grad();
      Tensor loss = lstm_loss(zs, targets, frozen, out.memory, arch.interval);
      require_finite(loss.item(), "LSTM loss");
      loss.backward();
      tensor::clip_grad_norm(params, cfg.grad_clip);
      tensor::adam_step(params, adam);
      total += loss.item() * static_cast<double>(nb);
    }
    out.log.push_back({epoch, 0.0, 0.0, starts.empty() ? 0.0 : total / static_cast<double>(starts.size())});
    if (on_epoch) on_epoch(out.log.back());
  }
  if (frozen.params().checksum() != vae_sum || vae.params().checksum() != vae_sum) {
    throw std::logic_error("VAE parameters changed during memory training");
  }
  return out;
}

PastReconstruction evaluate_past_reconstruction(const ImageDataset& data, const Vae& vae,
                                                const Memory& mem) {
  NoGradGuard guard;
  const int interval = mem.arch().interval;
  const std::vector<double> latents = encode_all(vae, data);
  const std::size_t nz = static_cast<std::size_t>(mem.arch().latent);
  PastReconstruction out;
  for (std::size_t e = 0; e < data.episodes(); ++e) {
    const std::size_t begin = data.episode_offsets[e], end = data.episode_offsets[e + 1];
    if (end - begin <= static_cast<std::size_t>(interval)) continue;
    auto state = mem.initial_state();
    std::vector<double> model_z, base_z;
    std::vector<std::size_t> past;
    for (std::size_t f = begin; f < end; ++f) {
      const std::span<const double> z(latents.data() + f * nz, nz);
      state = mem.step(z, state);
      if (f - begin < static_cast<std::size_t>(interval)) continue;
      const Tensor pred = mem.head(Tensor::from({1, mem.arch().hidden}, state.h));
      model_z.insert(model_z.end(), pred.values().begin(),
                     pred.values().begin() + static_cast<std::ptrdiff_t>(nz));
      base_z.insert(base_z.end(), z.begin(), z.end());
      past.push_back(f - static_cast<std::size_t>(interval));
    }
    const int n = static_cast<int>(past.size());
    const Tensor want = image_batch(data, past, true);
    out.model_mse += tensor::mse(vae.decode(Tensor::from({n, mem.arch().latent}, model_z)), want).item() * n;
    out.baseline_mse += tensor::mse(vae.decode(Tensor::from({n, mem.arch().latent}, base_z)), want).item() * n;
    out.samples += past.size();
  }
  if (out.samples > 0) {
    out.model_mse /= static_cast<double>(out.samples);
    out.baseline_mse /= static_cast<double>(out.samples);
  }
  return out;
}

}  // namespace scalenav::repr
