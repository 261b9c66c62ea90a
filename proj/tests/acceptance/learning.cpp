// SPDX-License-Identifier: Apache-2.0
//
// Criteria 3 to 6: gradients, KL, representation learning and memory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "../gradcheck.hpp"
#include "../scenes.hpp"
#include "../synthetic.hpp"
#include "acceptance.hpp"
#include "scalenav/ppo.hpp"
#include "scalenav/repr.hpp"

namespace acceptance {

using namespace scalenav;
using namespace scalenav::tensor;
using gradcheck::away_from_zero;
using gradcheck::max_relative_error;
using gradcheck::random_tensor;
using gradcheck::weighted_sum;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradRuntime = 120.0;  // s
constexpr double kKlTol = 1e-12;
constexpr double kVaeShrink = 0.5;      // final / initial reconstruction error
constexpr double kMemoryRatio = 0.5;    // masked error / mean-image baseline
constexpr double kVaeRuntime = 900.0;     // s
constexpr double kMemoryRuntime = 1200.0; // s

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void randomize_biases(ParamSet& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& e : p.entries())
    if (e.tensor.rank() == 1) init_uniform(e.tensor, 0.1, rng);
}

repr::VaeArch tiny_vae() {
  repr::VaeArch a;
  a.width = 16;
  a.height = 12;
  a.channels = {3, 4, 4, 4, 4, 4};
  a.latent = 6;
  return a;
}

}  // namespace

Outcome gradient_suite(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<const char*, double>> checks;
  auto check = [&](const char* name, const std::function<Tensor()>& f, std::vector<Tensor> in, double h = 1e-5) {
    checks.emplace_back(name, max_relative_error(f, std::move(in), h));
  };
  std::mt19937_64 rng(42);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({4}, rng), m = random_tensor({4, 5}, rng), bias = random_tensor({5}, rng);
  const Tensor pos = random_tensor({3, 4}, rng, 0.2, 2.0), kinked = away_from_zero({3, 4}, rng);

  check("matmul", [&] { return weighted_sum(matmul(a, m)); }, {a, m});
  check("affine", [&] { return weighted_sum(affine(a, m, bias)); }, {a, m, bias});
  check("add", [&] { return weighted_sum(add(a, row)); }, {a, row});
  check("sub", [&] { return weighted_sum(sub(a, b)); }, {a, b});
  check("mul", [&] { return weighted_sum(mul(a, row)); }, {a, row});
  check("minimum", [&] { return weighted_sum(minimum(a, kinked)); }, {a, kinked});
  check("scale", [&] { return weighted_sum(scale(a, -1.7)); }, {a});
  check("add_scalar", [&] { return weighted_sum(add_scalar(a, 0.3)); }, {a});
  check("clamp", [&] { return weighted_sum(clamp(kinked, -0.5, 0.5)); }, {kinked});
  check("relu", [&] { return weighted_sum(relu(kinked)); }, {kinked});
  check("sigmoid", [&] { return weighted_sum(sigmoid(a)); }, {a});
  check("tanh", [&] { return weighted_sum(tanh(a)); }, {a});
  check("exp", [&] { return weighted_sum(exp(a)); }, {a});
  check("log", [&] { return weighted_sum(log(pos)); }, {pos});
  check("square", [&] { return weighted_sum(square(a)); }, {a});
  check("reshape", [&] { return weighted_sum(reshape(a, {2, 6})); }, {a});
  check("slice_cols", [&] { return weighted_sum(slice_cols(a, 1, 2)); }, {a});
  check("concat_cols", [&] { return weighted_sum(concat_cols({a, b})); }, {a, b});
  check("concat_rows", [&] { return weighted_sum(concat_rows({a, b})); }, {a, b});
  check("reduce_sum", [&] { return reduce_sum(square(a)); }, {a});
  check("reduce_mean", [&] { return reduce_mean(square(a)); }, {a});
  check("sum_cols", [&] { return weighted_sum(sum_cols(a)); }, {a});
  check("mse", [&] { return mse(a, b); }, {a, b});

  const Tensor x = random_tensor({2, 3, 7, 6}, rng);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng), cb = random_tensor({4}, rng);
  check("conv2d", [&] { return weighted_sum(conv2d(x, w, cb, 2, 1)); }, {x, w, cb});
  check("conv2d/s1", [&] { return weighted_sum(conv2d(x, w, cb, 1, 0)); }, {x, w, cb});
  const Tensor xt = random_tensor({2, 3, 4, 3}, rng);
  const Tensor wt = random_tensor({3, 2, 3, 3}, rng), bt = random_tensor({2}, rng);
  check("conv_transpose2d", [&] { return weighted_sum(conv_transpose2d(xt, wt, bt, 2, 1, 1, 0)); }, {xt, wt, bt});
  check("conv_transpose2d/op", [&] { return weighted_sum(conv_transpose2d(xt, wt, bt, 2, 1, 0, 1)); }, {xt, wt, bt});

  const Tensor mu = random_tensor({3, 4}, rng), lv = random_tensor({3, 4}, rng);
  check("gaussian_kl", [&] { return gaussian_kl(mu, lv); }, {mu, lv});
  check("reparameterize",
        [&] {
          std::mt19937_64 fixed(123);
          return weighted_sum(reparameterize(mu, lv, fixed));
        },
        {mu, lv});

  ParamSet cell_ps;
  const LstmCellParams cell = declare_lstm(cell_ps, "cell", 3, 4);
  for (auto& e : cell_ps.entries()) init_uniform(e.tensor, 0.5, rng);
  std::vector<Tensor> xs;
  for (int t = 0; t < 5; ++t) xs.push_back(random_tensor({2, 3}, rng));
  std::vector<Tensor> cell_in = cell_ps.tensors();
  cell_in.insert(cell_in.end(), xs.begin(), xs.end());
  check("lstm_cell",
        [&] {
          Tensor h = Tensor::zeros({2, 4}), c = Tensor::zeros({2, 4});
          for (const auto& xi : xs) std::tie(h, c) = lstm_cell(xi, h, c, cell);
          return weighted_sum(h);
        },
        cell_in);

  // Composite losses.
  repr::Vae vae(tiny_vae(), 7);
  randomize_biases(vae.params(), 1);
  const Tensor img = random_tensor({2, 1, 12, 16}, rng, 0.05, 1.0, false);
  const Tensor tgt = random_tensor({2, 1, 12, 16}, rng, 0.05, 1.0, false);
  check("vae_loss",
        [&] {
          std::mt19937_64 r(10);
          return repr::vae_loss(img, tgt, vae, 0.5, r).total;
        },
        vae.params().tensors(), 1e-6);

  vae.params().set_requires_grad(false);
  repr::MemoryArch ma;
  ma.latent = 6;
  ma.hidden = 5;
  ma.interval = 4;
  repr::Memory mem(ma, 12);
  randomize_biases(mem.params(), 3);
  std::vector<Tensor> zs, tg;
  for (int t = 0; t < 15; ++t) {
    zs.push_back(random_tensor({2, 6}, rng, -1.0, 1.0, false));
    tg.push_back(random_tensor({2, 1, 12, 16}, rng, 0.0, 1.0, false));
  }
  check("lstm_loss/15 steps", [&] { return repr::lstm_loss(zs, tg, vae, mem, ma.interval); }, mem.params().tensors(),
        1e-6);

  ppo::PolicyArch pa;
  pa.obs_dim = 3;
  pa.hidden = 16;
  ppo::PolicyNet net(pa, 21);
  init_uniform(net.params().get("pi.mean.w"), 0.5, rng);
  for (const char* nm : {"pi.b1", "pi.b2"}) init_uniform(net.params().get(nm), 0.2, rng);
  ppo::RolloutBuffer buf;
  buf.obs_dim = 3;
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> r(-1.0, 1.0), jitter(-0.1, 0.1);
  for (int i = 0; i < 12; ++i) {
    const std::vector<double> o{g(rng), g(rng), g(rng)};
    buf.push(o, ppo::act(net, o, &rng), r(rng), i % 7 == 6);
  }
  ppo::gae(buf, 0.9, 0.8);
  for (double& lp : buf.log_prob) lp += jitter(rng);
  std::vector<std::size_t> idx(buf.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  ppo::PpoConfig pc;
  pc.clip_ratio = 0.5;
  pc.entropy_coef = 0.1;
  check("ppo_loss", [&] { return ppo::ppo_loss(net, buf, buf.advantage, idx, pc).total; }, net.params().tensors());

  const auto worst = std::max_element(checks.begin(), checks.end(),
                                      [](const auto& l, const auto& rr) { return l.second < rr.second; });
  int failing = 0;
  for (const auto& c : checks) failing += !(c.second < kGradTol);
  const double secs = elapsed(t0);
  return {failing == 0 && secs < kGradRuntime,
          format("%zu checks, %d over tol %.0e; worst %s %.2e; %.1f s (limit %.0f)", checks.size(), failing, kGradTol,
                 worst->first, worst->second, secs, kGradRuntime)};
}

Outcome kl_exactness(const Context&) {
  double worst = 0.0;
  // Standard normal posterior.
  worst = std::max(worst, std::abs(gaussian_kl(Tensor::zeros({4, 64}), Tensor::zeros({4, 64})).item()));
  // mu = 1, sigma = 1: 0.5 per dimension.
  for (int d : {1, 7, 64})
    worst = std::max(worst, std::abs(gaussian_kl(Tensor::full({3, d}, 1.0), Tensor::zeros({3, d})).item() - 0.5 * d));
  // Independent closed form in long double, batch mean of latent sums.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 5, d = 1 + (trial * 7) % 64;
    const Tensor mu = random_tensor({n, d}, rng, -2.0, 2.0, false);
    const Tensor lv = random_tensor({n, d}, rng, -3.0, 1.0, false);
    long double ref = 0.0L;
    for (int i = 0; i < n * d; ++i) {
      const long double m = mu.values()[i], l = lv.values()[i];
      ref += 0.5L * (m * m + std::exp(l) - 1.0L - l);
    }
    ref /= n;
    worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(gaussian_kl(mu, lv).item()) - ref)));
  }
  // The VAE loss reports the same KL as the encoder posterior.
  repr::Vae vae(tiny_vae(), 5);
  const Tensor x = random_tensor({3, 1, 12, 16}, rng, 0.0, 1.0, false);
  std::mt19937_64 r(1);
  const auto loss = repr::vae_loss(x, x, vae, 1e-5, r);
  const auto post = vae.encode(x);
  const double kl = gaussian_kl(post.mu, post.log_var).item();
  worst = std::max(worst, std::abs(loss.kl.item() - kl));
  const double composed = loss.coll.item() + 1e-5 * loss.kl.item();
  worst = std::max(worst, std::abs(loss.total.item() - composed));
  return {worst <= kKlTol, format("max deviation %.2e (tol %.0e) over 200 random posteriors and the VAE loss", worst, kKlTol)};
}

Outcome vae_learning(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const capre::CollisionAwareConfig cam;
  const repr::ImageDataset data = synthetic::dataset(25, 20, cam, 21);
  repr::TrainConfig cfg;
  cfg.epochs = 15;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 32;
  cfg.seed = 5;
  const auto trained = repr::train_vae(data, repr::VaeArch{}, cfg);
  const double initial = trained.log.front().l_coll;
  const double final_err = repr::evaluate_vae(trained.vae, data).l_coll;
  const double baseline = repr::mean_image_baseline(data);
  const double secs = elapsed(t0);
  const bool pass = final_err <= kVaeShrink * initial && final_err < baseline && secs < kVaeRuntime;
  return {pass, format("%zu frames at 64x48, latent 64: L_coll %.5f -> %.5f (<= %.2fx), mean-image baseline %.5f; "
                       "%.0f s (limit %.0f)",
                       data.count(), initial, final_err, kVaeShrink, baseline, secs, kVaeRuntime)};
}

namespace {

struct OcclusionEpisode {
  std::vector<depthcam::DepthImage> raw;
  std::vector<std::vector<int>> tags;
};

// Camera strafes sideways so a cylinder at random depth passes behind a nearer
// one against an open background.
OcclusionEpisode occlusion_episode(std::mt19937_64& rng, const depthcam::CameraIntrinsics& in, int length) {
  std::uniform_real_distribution<double> occ_x(1.5, 2.5), occ_r(0.7, 0.9), tgt_x(3.5, 6.5), tgt_r(0.4, 0.7),
      tgt_y(-0.5, 0.5), shift(-1.0, 1.0);
  const double xo = occ_x(rng), ro = occ_r(rng), yo = 0.0;
  const double xt = tgt_x(rng), rt = tgt_r(rng), yt = tgt_y(rng);
  const double step = 0.3 * (rng() % 2 ? 1.0 : -1.0);
  // Camera y at which the target centre lies behind the occluder centre.
  const double k = xo / xt;
  const double y_hidden = (yo - k * yt) / (1.0 - k);
  const double y0 = y_hidden - step * (0.5 * length + shift(rng));
  const auto world = scenes::arena(-2.0, -30.0, 30.0, 30.0, 8.0, {{xt, yt, rt, 8.0}, {xo, yo, ro, 8.0}});
  OcclusionEpisode e;
  for (int t = 0; t < length; ++t) {
    const auto r = depthcam::render_tagged(world, {{0.0, y0 + step * t, 4.0}, 0.0}, in);
    e.raw.push_back(r.depth);
    e.tags.push_back(r.tags);
  }
  return e;
}


}  // namespace

Outcome memory_property(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInterval = 5, kLength = 16, kTrainEpisodes = 400, kTestEpisodes = 24;
  depthcam::CameraIntrinsics in;
  in.width = 32;
  in.height = 24;
  std::mt19937_64 rng(8);
  repr::ImageDataset train;
  for (int e = 0; e < kTrainEpisodes; ++e) {
    const auto ep = occlusion_episode(rng, in, kLength);
    train.add_episode(ep.raw, ep.raw);
  }
  repr::VaeArch va;
  va.width = in.width;
  va.height = in.height;
  va.channels = {16, 32, 32, 64, 64, 64};
  va.latent = 32;
  repr::TrainConfig vc;
  vc.epochs = 40;
  vc.learning_rate = 2e-3;
  vc.seed = 1;
  const repr::Vae vae = repr::train_vae(train, va, vc).vae;
  repr::MemoryArch ma;
  ma.latent = va.latent;
  ma.hidden = 128;
  ma.interval = kInterval;
  repr::LstmTrainConfig lc;
  lc.epochs = 60;
  lc.learning_rate = 3e-3;
  lc.seed = 2;
  const repr::Memory mem = repr::train_lstm(train, vae, ma, lc).memory;

  // Mean-image baseline from the training frames.
  std::vector<double> mean(train.pixels(), 0.0);
  for (std::size_t i = 0; i < train.count(); ++i) {
    const auto t = train.target_at(i);
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += t[p];
  }
  for (double& v : mean) v /= static_cast<double>(train.count());

  double model_sq = 0.0, baseline_sq = 0.0, current_sq = 0.0, floor_sq = 0.0;
  std::size_t masked = 0;
  for (int e = 0; e < kTestEpisodes; ++e) {
    const auto ep = occlusion_episode(rng, in, kLength);
    auto state = mem.initial_state();
    for (int t = 0; t < kLength; ++t) {
      const auto z = vae.encode_mean(ep.raw[static_cast<std::size_t>(t)]);
      state = mem.step(z, state);
      if (t < kInterval) continue;
      // Target pixels at t - T that the occluder covers at t.
      const auto& past_tags = ep.tags[static_cast<std::size_t>(t - kInterval)];
      const auto& now_tags = ep.tags[static_cast<std::size_t>(t)];
      std::vector<std::size_t> mask;
      for (std::size_t p = 0; p < past_tags.size(); ++p)
        if (past_tags[p] == 0 && now_tags[p] == 1) mask.push_back(p);
      if (mask.empty()) continue;
      NoGradGuard guard;
      const Tensor h = Tensor::from({1, ma.hidden}, state.h, false);
      const Tensor past_z = slice_cols(mem.head(h), 0, ma.latent);
      const Tensor recon = vae.decode(past_z);
      const Tensor now_recon = vae.decode(Tensor::from({1, ma.latent}, z, false));
      const auto& past_frame = ep.raw[static_cast<std::size_t>(t - kInterval)];
      const Tensor past_recon = vae.decode(Tensor::from({1, ma.latent}, vae.encode_mean(past_frame), false));
      const auto past = repr::normalized_values(past_frame);
      for (std::size_t p : mask) {
        model_sq += std::pow(recon.values()[p] - past[p], 2);
        current_sq += std::pow(now_recon.values()[p] - past[p], 2);
        baseline_sq += std::pow(mean[p] - past[p], 2);
        floor_sq += std::pow(past_recon.values()[p] - past[p], 2);
      }
      masked += mask.size();
    }
  }
  const double model = model_sq / masked, baseline = baseline_sq / masked, current = current_sq / masked;
  const double vae_floor = floor_sq / masked;
  const double secs = elapsed(t0);
  const bool pass = masked > 0 && model < kMemoryRatio * baseline && secs < kMemoryRuntime;
  return {pass, format("T=%d, %zu occluded px: memory %.5f, mean image %.5f (ratio %.3f, tol %.2f), current frame "
                       "%.5f, VAE of the past frame %.5f; %.0f s (limit %.0f)",
                       kInterval, masked, model, baseline, model / baseline, kMemoryRatio, current, vae_floor, secs,
                       kMemoryRuntime)};
}

}  // namespace acceptance
