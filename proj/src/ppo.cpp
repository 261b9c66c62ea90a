// SPDX-License-Identifier: Apache-2.0

#include "scalenav/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace scalenav::ppo {

using tensor::NoGradGuard;

namespace {

constexpr std::array<std::string_view, 4> kModeNames = {"VanillaRL", "CaRL", "MeRL", "CaMeRL"};
constexpr std::array<std::string_view, 2> kStageNames = {"initial", "final"};
const double kHalfLog2Pi = 0.5 * std::log(2.0 * kPi);
constexpr int kWorldAttempts = 16;

// log(1 - tanh(u)^2), stable for large |u|.
double log1m_tanh2(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

Tensor rows(const std::vector<double>& src, std::size_t width, std::span<const std::size_t> idx) {
  std::vector<double> v(idx.size() * width);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[k] * width), width,
                v.begin() + static_cast<std::ptrdiff_t>(k * width));
  return Tensor::from({static_cast<int>(idx.size()), static_cast<int>(width)}, std::move(v));
}

Tensor gather(std::span<const double> src, std::span<const std::size_t> idx) {
  std::vector<double> v(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) v[k] = src[idx[k]];
  return Tensor::from({static_cast<int>(idx.size())}, std::move(v));
}

}  // namespace

std::string_view to_string(AblationMode m) { return kModeNames[static_cast<std::size_t>(m)]; }

std::optional<AblationMode> parse_mode(std::string_view text) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i)
    if (kModeNames[i] == text) return static_cast<AblationMode>(i);
  return std::nullopt;
}

bool collision_aware(AblationMode m) { return m == AblationMode::CaRL || m == AblationMode::CaMeRL; }
bool uses_memory(AblationMode m) { return m == AblationMode::MeRL || m == AblationMode::CaMeRL; }

std::array<double, kActionDim> action_scale(const dynamics::DynamicsConfig& cfg) {
  return {cfg.a_max, cfg.a_max, cfg.a_max, cfg.yaw_rate_max};
}

void PolicyArch::validate() const {
  if (obs_dim < 1 || hidden < 1) throw InvalidArgument("policy sizes must be positive");
  for (double s : scale)
    if (!(s > 0.0)) throw InvalidArgument("action scale must be positive");
}

PolicyNet::PolicyNet(PolicyArch arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  const int n = arch_.obs_dim, h = arch_.hidden;
  auto xavier = [](int in, int out) { return std::sqrt(6.0 / (in + out)); };
  w1_ = params_.add("pi.w1", {n, h});
  tensor::init_uniform(w1_, xavier(n, h), rng);
  b1_ = params_.add("pi.b1", {h});
  w2_ = params_.add("pi.w2", {h, h});
  tensor::init_uniform(w2_, xavier(h, h), rng);
  b2_ = params_.add("pi.b2", {h});
  wm_ = params_.add("pi.mean.w", {h, kActionDim});
  tensor::init_uniform(wm_, 0.01 * xavier(h, kActionDim), rng);
  bm_ = params_.add("pi.mean.b", {kActionDim});
  wv_ = params_.add("pi.value.w", {h, 1});
  tensor::init_uniform(wv_, xavier(h, 1), rng);
  bv_ = params_.add("pi.value.b", {1});
  log_std_ = params_.add("pi.log_std", {kActionDim});
  std::fill(log_std_.values().begin(), log_std_.values().end(), arch_.init_log_std);
}

PolicyNet::Output PolicyNet::forward(const Tensor& obs) const {
  if (obs.rank() != 2 || obs.dim(1) != arch_.obs_dim) {
    throw tensor::ShapeError("policy observation " + tensor::shape_str(obs.shape()) +
                             " vs expected [B," + std::to_string(arch_.obs_dim) + "]");
  }
  const Tensor h1 = tensor::tanh(tensor::affine(obs, w1_, b1_));
  const Tensor h2 = tensor::tanh(tensor::affine(h1, w2_, b2_));
  Output out;
  out.mean = tensor::affine(h2, wm_, bm_);
  out.log_std = tensor::clamp(log_std_, kLogStdMin, kLogStdMax);
  out.value = tensor::reshape(tensor::affine(h2, wv_, bv_), {obs.dim(0)});
  return out;
}

Tensor squashed_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& u,
                         const std::array<double, kActionDim>& scale) {
  const Tensor inv_std = tensor::exp(tensor::scale(log_std, -1.0));
  const Tensor z = tensor::mul(tensor::sub(u, mean), inv_std);
  const Tensor per = tensor::sub(tensor::scale(tensor::square(z), -0.5), log_std);
  const int b = u.dim(0);
  std::vector<double> jac(static_cast<std::size_t>(b), 0.0);
  const auto uv = u.values();
  for (int r = 0; r < b; ++r)
    for (int k = 0; k < kActionDim; ++k)
      jac[r] += std::log(scale[k]) + log1m_tanh2(uv[static_cast<std::size_t>(r) * kActionDim + k]);
  return tensor::sub(tensor::add_scalar(tensor::sum_cols(per), -kActionDim * kHalfLog2Pi),
                     Tensor::from({b}, std::move(jac)));
}

ActResult act(const PolicyNet& net, std::span<const double> obs, std::mt19937_64* rng) {
  if (obs.size() != static_cast<std::size_t>(net.arch().obs_dim)) {
    throw tensor::ShapeError("act: observation has " + std::to_string(obs.size()) +
                             " values, policy expects " + std::to_string(net.arch().obs_dim));
  }
  NoGradGuard guard;
  const auto out = net.forward(Tensor::from({1, net.arch().obs_dim}, {obs.begin(), obs.end()}));
  ActResult r;
  const auto mean = out.mean.values();
  const auto ls = out.log_std.values();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < kActionDim; ++k) r.u[k] = mean[k] + (rng ? std::exp(ls[k]) * normal(*rng) : 0.0);
  const auto& scale = net.arch().scale;
  std::array<double, kActionDim> a{};
  for (int k = 0; k < kActionDim; ++k) a[k] = scale[k] * std::tanh(r.u[k]);
  r.action = dynamics::Action::from_array(a);
  r.log_prob = squashed_log_prob(out.mean, out.log_std, Tensor::from({1, kActionDim}, {r.u.begin(), r.u.end()}),
                                 scale)
                   .item();
  r.value = out.value.item();
  return r;
}

void RolloutBuffer::push(std::span<const double> o, const ActResult& a, double r, bool d) {
  if (o.size() != static_cast<std::size_t>(obs_dim)) {
    throw tensor::ShapeError("rollout buffer: observation width " + std::to_string(o.size()) +
                             " vs " + std::to_string(obs_dim));
  }
  obs.insert(obs.end(), o.begin(), o.end());
  u.push_back(a.u);
  log_prob.push_back(a.log_prob);
  value.push_back(a.value);
  reward.push_back(r);
  done.push_back(d ? 1 : 0);
}

void RolloutBuffer::check() const {
  const std::size_t n = size();
  if (u.size() != n || log_prob.size() != n || value.size() != n || done.size() != n ||
      obs.size() != n * static_cast<std::size_t>(obs_dim)) {
    throw std::logic_error("rollout buffer columns differ in length");
  }
  if ((!advantage.empty() && advantage.size() != n) || ret.size() != advantage.size()) {
    throw std::logic_error("rollout buffer advantage columns differ in length");
  }
}

void RolloutBuffer::append(const RolloutBuffer& o) {
  o.check();
  if (size() > 0 && o.obs_dim != obs_dim) throw tensor::ShapeError("rollout buffers differ in width");
  if (o.advantage.size() != o.size()) throw std::logic_error("append needs computed advantages");
  obs_dim = o.obs_dim;
  obs.insert(obs.end(), o.obs.begin(), o.obs.end());
  u.insert(u.end(), o.u.begin(), o.u.end());
  log_prob.insert(log_prob.end(), o.log_prob.begin(), o.log_prob.end());
  value.insert(value.end(), o.value.begin(), o.value.end());
  reward.insert(reward.end(), o.reward.begin(), o.reward.end());
  done.insert(done.end(), o.done.begin(), o.done.end());
  advantage.insert(advantage.end(), o.advantage.begin(), o.advantage.end());
  ret.insert(ret.end(), o.ret.begin(), o.ret.end());
}

void gae(RolloutBuffer& buf, double gamma, double lambda) {
  buf.advantage.clear();
  buf.ret.clear();
  buf.check();
  const std::size_t n = buf.size();
  buf.advantage.assign(n, 0.0);
  buf.ret.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = buf.bootstrap;
  for (std::size_t i = n; i-- > 0;) {
    const double live = buf.done[i] ? 0.0 : 1.0;
    const double delta = buf.reward[i] + gamma * live * next_value - buf.value[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    buf.advantage[i] = next_adv;
    buf.ret[i] = next_adv + buf.value[i];
    next_value = buf.value[i];
  }
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InvalidArgument("gae_lambda must lie in [0, 1]");
  if (!(clip_ratio > 0.0)) throw InvalidArgument("clip_ratio must be positive");
  if (!(entropy_coef >= 0.0 && value_coef >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
  if (epochs < 1 || minibatch < 1 || rollout_length < 1 || num_envs < 1 || hidden < 1) {
    throw InvalidArgument("PPO counts must be positive");
  }
  if (rollout_length % num_envs != 0) throw InvalidArgument("rollout_length must be a multiple of num_envs");
  if (total_steps < 1) throw InvalidArgument("total_steps must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
}

PpoLoss ppo_loss(const PolicyNet& net, const RolloutBuffer& buf, std::span<const double> adv,
                 std::span<const std::size_t> idx, const PpoConfig& cfg) {
  const auto out = net.forward(rows(buf.obs, static_cast<std::size_t>(buf.obs_dim), idx));
  std::vector<double> uflat(idx.size() * kActionDim);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy(buf.u[idx[k]].begin(), buf.u[idx[k]].end(), uflat.begin() + static_cast<std::ptrdiff_t>(k * kActionDim));
  const Tensor u = Tensor::from({static_cast<int>(idx.size()), kActionDim}, std::move(uflat));
  const Tensor logp = squashed_log_prob(out.mean, out.log_std, u, net.arch().scale);
  const Tensor ratio = tensor::exp(tensor::sub(logp, gather(buf.log_prob, idx)));
  const Tensor a = gather(adv, idx);
  const Tensor s1 = tensor::mul(ratio, a);
  const Tensor s2 = tensor::mul(tensor::clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio), a);
  PpoLoss loss;
  loss.policy = tensor::scale(tensor::reduce_mean(tensor::minimum(s1, s2)), -1.0);
  loss.value = tensor::mse(out.value, gather(buf.ret, idx));
  // Entropy of the pre-squash Gaussian.
  loss.entropy = tensor::add_scalar(tensor::reduce_sum(out.log_std), kActionDim * (0.5 + kHalfLog2Pi));
  loss.total = tensor::add(tensor::add(loss.policy, tensor::scale(loss.value, cfg.value_coef)),
                           tensor::scale(loss.entropy, -cfg.entropy_coef));
  const auto r = ratio.values();
  double clipped = 0.0, kl = 0.0;
  for (double x : r) {
    clipped += std::abs(x - 1.0) > cfg.clip_ratio ? 1.0 : 0.0;
    kl += (x - 1.0) - std::log(x);
  }
  loss.clip_fraction = clipped / static_cast<double>(r.size());
  loss.approx_kl = kl / static_cast<double>(r.size());
  return loss;
}

UpdateMetrics ppo_update(const RolloutBuffer& buf, PolicyNet& net, tensor::AdamState& adam,
                         const PpoConfig& cfg, std::mt19937_64& rng) {
  buf.check();
  const std::size_t n = buf.size();
  if (buf.advantage.size() != n || n == 0) throw InvalidArgument("ppo_update needs computed advantages");
  std::vector<double> adv(buf.advantage);
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);

  auto params = net.params().tensors();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  UpdateMetrics m;
  int steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.minibatch)) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          b, std::min<std::size_t>(cfg.minibatch, n - b));
      net.params().zero_grad();
      const PpoLoss loss = ppo_loss(net, buf, adv, idx, cfg);
      if (!std::isfinite(loss.total.item())) throw std::runtime_error("non-finite PPO loss");
      loss.total.backward();
      tensor::clip_grad_norm(params, cfg.max_grad_norm);
      tensor::adam_step(params, adam);
      m.policy_loss += loss.policy.item();
      m.value_loss += loss.value.item();
      m.entropy += loss.entropy.item();
      m.approx_kl += loss.approx_kl;
      m.clip_fraction += loss.clip_fraction;
      ++steps;
    }
  }
  const double k = 1.0 / steps;
  m.policy_loss *= k;
  m.value_loss *= k;
  m.entropy *= k;
  m.approx_kl *= k;
  m.clip_fraction *= k;
  return m;
}

int Representation::memory_dim() const {
  if (memory) return memory->arch().hidden;
  if (!vae) throw InvalidArgument("representation has no VAE");
  return vae->arch().latent;
}

std::uint64_t Representation::checksum() const {
  std::uint64_t h = vae ? vae->params().checksum() : 0;
  if (memory) h = mix64(h ^ memory->params().checksum());
  return h;
}

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

std::optional<Stage> parse_stage(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  return std::nullopt;
}

Representation make_representation(Stage stage, AblationMode mode, const RepresentationPaths& paths,
                                   const repr::VaeArch& vae_arch, const repr::MemoryArch& mem_arch,
                                   std::uint64_t seed) {
  auto vae = std::make_shared<repr::Vae>(vae_arch, derive_seed(seed, 11));
  std::shared_ptr<repr::Memory> mem;
  if (uses_memory(mode)) mem = std::make_shared<repr::Memory>(mem_arch, derive_seed(seed, 12));
  if (stage == Stage::Final) {
    if (!tensor::checkpoint_exists(paths.vae)) {
      throw MissingCheckpoint("missing VAE checkpoint " + paths.vae.string());
    }
    vae->params().load(paths.vae);
    if (mem) {
      if (!tensor::checkpoint_exists(paths.memory)) {
        throw MissingCheckpoint("missing LSTM checkpoint " + paths.memory.string());
      }
      mem->params().load(paths.memory);
    }
  }
  vae->params().set_requires_grad(false);
  if (mem) mem->params().set_requires_grad(false);
  return {vae, mem};
}

Agent::Agent(Representation rep, std::shared_ptr<const PolicyNet> net, bool deterministic)
    : rep_(std::move(rep)), net_(std::move(net)), deterministic_(deterministic) {
  if (!rep_.vae || !net_) throw InvalidArgument("agent needs a VAE and a policy");
  const int want = env::kStateDim + rep_.memory_dim();
  if (net_->arch().obs_dim != want) {
    throw tensor::ShapeError("policy expects " + std::to_string(net_->arch().obs_dim) +
                             " observation values, representation gives " + std::to_string(want));
  }
  begin_episode(0);
}

void Agent::begin_episode(std::uint64_t episode_seed) {
  rng_.seed(episode_seed);
  if (rep_.memory) state_ = rep_.memory->initial_state();
}

std::vector<double> Agent::observe(const dynamics::UavState& state, const Vec3& goal,
                                   const depthcam::DepthImage& frame) {
  const std::vector<double> z = rep_.vae->encode_mean(frame);
  if (!rep_.memory) return env::make_observation(state, goal, z).flatten();
  state_ = rep_.memory->step(z, state_);
  return env::make_observation(state, goal, state_.h).flatten();
}

ActResult Agent::decide(std::span<const double> obs) {
  return ppo::act(*net_, obs, deterministic_ ? nullptr : &rng_);
}

dynamics::Action Agent::act(const dynamics::UavState& state, const Vec3& goal,
                            const depthcam::DepthImage& frame) {
  return decide(observe(state, goal, frame)).action;
}

WorldSampler world_sampler(const worldgen::WorldConfig& base, bool clear_obstacles) {
  base.validate();
  return [base, clear_obstacles](std::uint64_t seed) {
    worldgen::WorldConfig cfg = base;
    for (int attempt = 0; attempt < kWorldAttempts; ++attempt) {
      cfg.seed = attempt == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(attempt));
      try {
        auto w = std::make_shared<worldgen::World>(worldgen::generate_world(cfg));
        if (clear_obstacles) w->obstacles.clear();
        return std::shared_ptr<const worldgen::World>(std::move(w));
      } catch (const worldgen::PlacementError&) {
      }
    }
    throw worldgen::PlacementError("no placeable world after retries for seed " + std::to_string(seed));
  };
}

void write_update_log(const std::filesystem::path& csv, std::span<const UpdateLog> log) {
  std::ofstream os(csv);
  if (!os) throw std::runtime_error("cannot write " + csv.string());
  os << "update,steps,episodes,mean_return,success_rate,policy_loss,value_loss,entropy,approx_kl,"
        "clip_fraction\n";
  char buf[320];
  for (const auto& u : log) {
    std::snprintf(buf, sizeof(buf), "%d,%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", u.update,
                  static_cast<long long>(u.steps), u.episodes, u.mean_return, u.success_rate,
                  u.metrics.policy_loss, u.metrics.value_loss, u.metrics.entropy, u.metrics.approx_kl,
                  u.metrics.clip_fraction);
    os << buf;
  }
  if (!os) throw std::runtime_error("write failed for " + csv.string());
}

PolicyArch policy_arch(const Representation& rep, const env::EnvConfig& env_cfg, const PpoConfig& cfg) {
  PolicyArch a;
  a.obs_dim = env::kStateDim + rep.memory_dim();
  a.hidden = cfg.hidden;
  a.scale = action_scale(env_cfg.dynamics);
  a.init_log_std = cfg.init_log_std;
  return a;
}

namespace {

// One environment slot; its episodes continue across rollouts.
struct Slot {
  std::uint64_t seed{0};
  std::uint64_t episode{0};
  std::unique_ptr<Agent> agent;
  std::unique_ptr<env::Environment> env;
  std::vector<double> obs;
  double episode_return{0.0};
  RolloutBuffer buffer;
  std::vector<std::pair<double, bool>> finished;  // (return, arrived)
};

void start_episode(Slot& s, const WorldSampler& worlds, const env::EnvConfig& env_cfg) {
  const std::uint64_t ep_seed = derive_seed(s.seed, s.episode++);
  s.env = std::make_unique<env::Environment>(worlds(derive_seed(ep_seed, 1)), env_cfg);
  s.agent->begin_episode(ep_seed);
  s.episode_return = 0.0;
  s.obs = s.agent->observe(s.env->state(), s.env->world().goal, s.env->render());
}

void run_slot(Slot& s, int steps, const WorldSampler& worlds, const env::EnvConfig& env_cfg) {
  s.buffer = {};
  s.buffer.obs_dim = s.agent->net().arch().obs_dim;
  s.finished.clear();
  for (int t = 0; t < steps; ++t) {
    if (!s.env) start_episode(s, worlds, env_cfg);
    const ActResult a = s.agent->decide(s.obs);
    const env::StepOutcome out = s.env->step(a.action);
    const bool done = out.termination != env::Termination::Running;
    s.buffer.push(s.obs, a, out.reward, done);
    s.episode_return += out.reward;
    if (done) {
      s.finished.emplace_back(s.episode_return, out.termination == env::Termination::Arrived);
      s.env.reset();
    } else {
      s.obs = s.agent->observe(s.env->state(), s.env->world().goal, s.env->render());
    }
  }
  s.buffer.bootstrap = s.env ? ppo::act(s.agent->net(), s.obs, nullptr).value : 0.0;
}

}  // namespace

PolicyTraining train_policy(const Representation& rep, const env::EnvConfig& env_cfg,
                            const WorldSampler& worlds, const PpoConfig& cfg, int workers,
                            const std::function<void(const UpdateLog&)>& on_update) {
  cfg.validate();
  env_cfg.validate();
  if (workers < 1) throw InvalidArgument("workers must be at least 1");
  const std::uint64_t rep_sum = rep.checksum();
  PolicyTraining out;
  out.net = std::make_shared<PolicyNet>(policy_arch(rep, env_cfg, cfg), derive_seed(cfg.seed, 1));
  auto params = out.net->params().tensors();
  auto adam = tensor::make_adam_state(params, {.lr = cfg.learning_rate});
  std::mt19937_64 rng(derive_seed(cfg.seed, 2));

  std::vector<Slot> slots(static_cast<std::size_t>(cfg.num_envs));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    slots[i].seed = derive_seed(derive_seed(cfg.seed, 3), i);
    slots[i].agent = std::make_unique<Agent>(rep, out.net, false);
  }
  const int per_slot = cfg.rollout_length / cfg.num_envs;
  const std::int64_t updates = (cfg.total_steps + cfg.rollout_length - 1) / cfg.rollout_length;
  const int nthreads = std::min(workers, cfg.num_envs);
  std::int64_t steps = 0;
  for (std::int64_t u = 1; u <= updates; ++u) {
    if (nthreads == 1) {
      for (auto& s : slots) run_slot(s, per_slot, worlds, env_cfg);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
      for (int w = 0; w < nthreads; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = static_cast<std::size_t>(w); i < slots.size(); i += static_cast<std::size_t>(nthreads))
              run_slot(slots[i], per_slot, worlds, env_cfg);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    RolloutBuffer all;
    UpdateLog entry;
    double returns = 0.0, arrived = 0.0;
    for (auto& s : slots) {
      gae(s.buffer, cfg.gamma, cfg.gae_lambda);
      all.append(s.buffer);
      for (const auto& [r, ok] : s.finished) {
        returns += r;
        arrived += ok ? 1.0 : 0.0;
        ++entry.episodes;
      }
    }
    steps += static_cast<std::int64_t>(all.size());
    entry.update = static_cast<int>(u);
    entry.steps = steps;
    if (entry.episodes > 0) {
      entry.mean_return = returns / entry.episodes;
      entry.success_rate = arrived / entry.episodes;
    }
    entry.metrics = ppo_update(all, *out.net, adam, cfg, rng);
    out.log.push_back(entry);
    if (on_update) on_update(entry);
  }
  if (rep.checksum() != rep_sum) throw std::logic_error("representation parameters changed during policy training");
  return out;
}

PolicyTraining train_policy(Stage stage, AblationMode mode, const env::EnvConfig& env_cfg,
                            const WorldSampler& worlds, const RepresentationPaths& paths,
                            const repr::VaeArch& vae_arch, const repr::MemoryArch& mem_arch,
                            const PpoConfig& cfg, int workers,
                            const std::function<void(const UpdateLog&)>& on_update) {
  const Representation rep = make_representation(stage, mode, paths, vae_arch, mem_arch, cfg.seed);
  return train_policy(rep, env_cfg, worlds, cfg, workers, on_update);
}

}  // namespace scalenav::ppo
