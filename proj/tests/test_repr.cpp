// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "scalenav/repr.hpp"
#include "synthetic.hpp"

using namespace scalenav;
using namespace scalenav::repr;
using tensor::Tensor;

namespace {

VaeArch small_arch() {
  VaeArch a;
  a.width = 16;
  a.height = 12;
  a.channels = {3, 4, 4, 4, 4, 4};
  a.latent = 6;
  return a;
}

VaeArch train_arch() {
  VaeArch a = small_arch();
  a.channels = {8, 8, 16, 16, 16, 16};
  a.latent = 16;
  return a;
}

// Nonzero biases keep ReLU inputs off their kink for finite differences.
void randomize(tensor::ParamSet& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& e : p.entries())
    if (e.tensor.rank() == 1) tensor::init_uniform(e.tensor, 0.1, rng);
}

capre::CollisionAwareConfig small_camera() {
  capre::CollisionAwareConfig c;
  c.intr.width = 16;
  c.intr.height = 12;
  return c;
}

std::vector<Tensor> trainable(const tensor::ParamSet& p) {
  std::vector<Tensor> out;
  for (const auto& e : p.entries())
    if (e.tensor.requires_grad()) out.push_back(e.tensor);
  return out;
}

}  // namespace

TEST_CASE("normalization is exact division by max_range") {
  depthcam::DepthImage img(4, 3, 10.0, 10.0);
  img.data[1] = 0.0;
  img.data[2] = 3.3;
  const auto v = normalized_values(img);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 0.0);
  const auto back = denormalize_depth(v, 4, 3, 10.0);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) < 1e-12);
  CHECK(normalize_depth(img).shape() == tensor::Shape{1, 1, 3, 4});
  CHECK_THROWS_AS(denormalize_depth(v, 5, 3, 10.0), InvalidArgument);
}

TEST_CASE("VAE shapes, output range and latent size") {
  const Vae vae({}, 1);
  std::mt19937_64 rng(2);
  const Tensor x = gradcheck::random_tensor({2, 1, 48, 64}, rng, 0.0, 1.0, false);
  const auto g = vae.encode(x);
  CHECK(g.mu.shape() == tensor::Shape{2, kLatentDim});
  const Tensor y = vae.decode(g.mu);
  CHECK(y.shape() == x.shape());
  for (double v : y.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(vae.encode(gradcheck::random_tensor({1, 1, 40, 64}, rng)), tensor::ShapeError);
  // Odd sizes still decode to the input size.
  VaeArch odd = small_arch();
  odd.width = 23;
  odd.height = 17;
  const Vae v2(odd, 3);
  const Tensor x2 = gradcheck::random_tensor({1, 1, 17, 23}, rng, 0.0, 1.0, false);
  CHECK(v2.decode(v2.encode(x2).mu).shape() == x2.shape());
}

TEST_CASE("encode is deterministic and 64-dimensional") {
  const Vae vae({}, 5);
  depthcam::DepthImage img(64, 48, 10.0, 4.0);
  for (std::size_t i = 0; i < img.data.size(); i += 7) img.data[i] = 1.5;
  const auto a = vae.encode_mean(img), b = vae.encode_mean(img);
  CHECK(a.size() == 64);
  CHECK(a == b);
}

TEST_CASE("vae_loss vanishes when both terms vanish") {
  const Vae vae(small_arch(), 4);
  std::mt19937_64 rng(6);
  const Tensor x = gradcheck::random_tensor({3, 1, 12, 16}, rng, 0.0, 1.0, false);
  Tensor target;
  {
    // Decoder output at the noise-free sample used below.
    const auto g = vae.encode(x);
    std::mt19937_64 r(9);
    target = vae.decode(tensor::reparameterize(g.mu, g.log_var, r)).detach();
  }
  std::mt19937_64 r(9);
  CHECK(vae_loss(x, target, vae, 0.0, r).total.item() == 0.0);

  // mu = 0, sigma = 1: KL is exactly zero.
  const Tensor mu = Tensor::zeros({3, 6}), lv = Tensor::zeros({3, 6});
  CHECK(tensor::gaussian_kl(mu, lv).item() == 0.0);
  CHECK_THROWS_AS(vae_loss(x, Tensor::zeros({3, 1, 12, 15}), vae, 1.0, r), tensor::ShapeError);
}

TEST_CASE("vae_loss gradient matches finite differences") {
  Vae vae(small_arch(), 7);
  randomize(vae.params(), 1);
  std::mt19937_64 rng(8);
  const Tensor x = gradcheck::random_tensor({2, 1, 12, 16}, rng, 0.05, 1.0, false);
  const Tensor y = gradcheck::random_tensor({2, 1, 12, 16}, rng, 0.05, 1.0, false);
  auto f = [&] {
    std::mt19937_64 r(10);
    return vae_loss(x, y, vae, 0.5, r).total;
  };
  CHECK(gradcheck::max_relative_error(f, vae.params().tensors(), 1e-6) < 1e-4);
}

TEST_CASE("lstm_loss gradient over a 15-step sequence matches finite differences") {
  Vae vae(small_arch(), 11);
  randomize(vae.params(), 2);
  vae.params().set_requires_grad(false);
  MemoryArch ma;
  ma.latent = 6;
  ma.hidden = 5;
  ma.interval = 4;
  Memory mem(ma, 12);
  randomize(mem.params(), 3);
  std::mt19937_64 rng(13);
  std::vector<Tensor> z, tg;
  for (int t = 0; t < 15; ++t) {
    z.push_back(gradcheck::random_tensor({2, 6}, rng, -1.0, 1.0, false));
    tg.push_back(gradcheck::random_tensor({2, 1, 12, 16}, rng, 0.0, 1.0, false));
  }
  auto f = [&] { return lstm_loss(z, tg, vae, mem, ma.interval); };
  CHECK(gradcheck::max_relative_error(f, mem.params().tensors(), 1e-6) < 1e-4);

  // Freeze contract: the VAE slots stay zero.
  mem.params().zero_grad();
  f().backward();
  for (const auto& e : vae.params().entries())
    for (double g : e.tensor.grad()) CHECK(g == 0.0);
  double mem_grad = 0.0;
  for (const auto& t : trainable(mem.params()))
    for (double g : t.grad()) mem_grad += std::abs(g);
  CHECK(mem_grad > 0.0);
}

TEST_CASE("lstm_loss contract errors") {
  Vae vae(small_arch(), 1);
  Memory mem({6, 5, 4}, 2);
  std::vector<Tensor> z(4, Tensor::zeros({1, 6})), tg(4, Tensor::zeros({1, 1, 12, 16}));
  CHECK_THROWS_AS(lstm_loss(z, tg, vae, mem, 4), SequenceTooShort);
  z.push_back(Tensor::zeros({1, 6}));
  tg.push_back(Tensor::zeros({1, 1, 12, 16}));
  CHECK_THROWS_WITH_AS(lstm_loss(z, tg, vae, mem, 4), "lstm_loss needs a frozen VAE", InvalidArgument);
  vae.params().set_requires_grad(false);
  CHECK(std::isfinite(lstm_loss(z, tg, vae, mem, 4).item()));
  CHECK_THROWS_AS(MemoryArch({6, 5, 0}).validate(), InvalidArgument);
}

TEST_CASE("T = 0 with mirrored head halves gives equal terms") {
  Vae vae(small_arch(), 3);
  vae.params().set_requires_grad(false);
  Memory mem({6, 5, 0}, 4);
  // Copy the past half of the head onto the current half.
  auto w = mem.params().get("head.w").values();
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) w[r * 12 + 6 + c] = w[r * 12 + c];
  std::mt19937_64 rng(5);
  std::vector<Tensor> z, tg;
  for (int t = 0; t < 6; ++t) {
    z.push_back(gradcheck::random_tensor({1, 6}, rng, -1, 1, false));
    tg.push_back(gradcheck::random_tensor({1, 1, 12, 16}, rng, 0, 1, false));
  }
  const double loss = lstm_loss(z, tg, vae, mem, 0).item();
  // Independent recomputation: one decode per step, doubled.
  double want = 0.0;
  auto state = mem.initial_state();
  for (int t = 0; t < 6; ++t) {
    state = mem.step(z[t].values(), state);
    const Tensor head = mem.head(Tensor::from({1, 5}, state.h));
    want += tensor::mse(vae.decode(tensor::slice_cols(head, 0, 6)), tg[t]).item();
  }
  CHECK(loss == doctest::Approx(2.0 * want / 6.0).epsilon(1e-12));
}

TEST_CASE("memory step from the zero state, dimension and fixed-input convergence") {
  const Memory mem({}, 21);
  const auto s0 = mem.initial_state();
  for (double v : s0.h) CHECK(v == 0.0);
  std::mt19937_64 rng(3);
  std::vector<double> z(64);
  for (double& v : z) v = std::normal_distribution<double>(0, 1)(rng);
  auto s = mem.step(z, s0);
  CHECK(s.h.size() == 256);
  std::vector<double> deltas;
  for (int t = 0; t < 60; ++t) {
    const auto next = mem.step(z, s);
    double d = 0.0;
    for (std::size_t i = 0; i < next.h.size(); ++i) d += (next.h[i] - s.h[i]) * (next.h[i] - s.h[i]);
    deltas.push_back(std::sqrt(d));
    s = next;
  }
  for (std::size_t t = 21; t < deltas.size(); ++t) CHECK(deltas[t] <= deltas[t - 1] + 1e-12);
  CHECK(deltas.back() < 1e-3 * deltas.front());
}

TEST_CASE("VAE training reduces reconstruction error and is deterministic") {
  const auto cam = small_camera();
  const ImageDataset data = synthetic::dataset(12, 20, cam, 1);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 3e-3;
  cfg.seed = 4;
  int calls = 0;
  const auto a = train_vae(data, train_arch(), cfg, [&](const EpochLog&) { ++calls; });
  CHECK(calls == cfg.epochs + 1);
  CHECK(a.log.size() == static_cast<std::size_t>(cfg.epochs + 1));
  const VaeFit fit = evaluate_vae(a.vae, data);
  CHECK(fit.l_coll <= 0.5 * a.log.front().l_coll);
  CHECK(fit.l_coll < mean_image_baseline(data));
  for (const auto& e : a.log) CHECK(std::isfinite(e.l_coll + e.l_kl));

  cfg.epochs = 3;
  const auto b = train_vae(data, train_arch(), cfg);
  const auto c = train_vae(data, train_arch(), cfg);
  CHECK(b.vae.params().checksum() == c.vae.params().checksum());

  // Raw and collision-aware images of a cylinder encode differently.
  std::mt19937_64 rng(3);
  const auto seq = synthetic::forward_flight(rng, cam, 1);
  CHECK(a.vae.encode_mean(seq.raw[0]) != a.vae.encode_mean(seq.ca[0]));

  CHECK_THROWS_AS(train_vae(ImageDataset{}, small_arch(), cfg), InvalidArgument);
  cfg.lambda_kl = -1.0;
  CHECK_THROWS_AS(train_vae(data, small_arch(), cfg), InvalidArgument);
}

TEST_CASE("dataset bookkeeping") {
  const auto cam = small_camera();
  std::mt19937_64 rng(1);
  const auto s = synthetic::forward_flight(rng, cam, 5);
  ImageDataset d;
  d.add_episode(s.raw, s.ca);
  d.add_episode(s.raw, s.ca);
  CHECK(d.count() == 10);
  CHECK(d.episodes() == 2);
  CHECK(d.target_at(3)[0] == s.ca[3].data[0] / 10.0);
  CHECK_THROWS_AS(d.add_episode(s.raw, {}), InvalidArgument);
  CHECK_THROWS_AS(window_length(d, 10), SequenceTooShort);
  CHECK(window_length(d, 1) == 5);
  CHECK(window_length(d, 4) == 5);
  CHECK_THROWS_AS(window_length(d, 5), SequenceTooShort);
}

TEST_CASE("memory training beats the memoryless baseline and leaves the VAE untouched") {
  const auto cam = small_camera();
  const ImageDataset data = synthetic::dataset(16, 30, cam, 2);
  TrainConfig vcfg;
  vcfg.epochs = 40;
  vcfg.learning_rate = 3e-3;
  const Vae vae = train_vae(data, train_arch(), vcfg).vae;
  const auto before = vae.params().checksum();
  MemoryArch ma;
  ma.latent = 16;
  ma.hidden = 32;
  ma.interval = 5;
  LstmTrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 8;
  const auto trained = train_lstm(data, vae, ma, cfg);
  CHECK(vae.params().checksum() == before);
  CHECK(trained.window == 15);
  REQUIRE(trained.log.size() == 40);
  // 5-epoch moving average of the training loss keeps falling.
  std::vector<double> avg;
  for (std::size_t i = 4; i < trained.log.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i - 4; k <= i; ++k) s += trained.log[k].l_lstm;
    avg.push_back(s / 5.0);
  }
  CHECK(avg.back() < avg.front());
  int rises = 0;
  for (std::size_t i = 1; i < avg.size(); ++i) rises += avg[i] > avg[i - 1];
  CHECK(rises <= 2);
  const auto eval = evaluate_past_reconstruction(data, vae, trained.memory);
  CHECK(eval.samples == 16u * (30 - 5));
  CHECK(eval.model_mse < eval.baseline_mse);

  const auto again = train_lstm(data, vae, ma, cfg);
  CHECK(again.memory.params().checksum() == trained.memory.params().checksum());
}
