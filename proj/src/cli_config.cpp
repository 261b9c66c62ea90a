// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "scalenav/cli.hpp"

namespace scalenav::cli {

namespace {

using Values = std::vector<std::string>;

struct Binding {
  std::string section;
  std::string key;
  std::function<void(const Values&)> set;
  std::function<std::string()> get;
};

std::string where(const Binding& b) { return b.section.empty() ? b.key : b.section + "." + b.key; }

const std::string& single(const Values& v, const std::string& name) {
  if (v.size() != 1) throw ConfigError(name + " expects one value");
  return v.front();
}

template <class T>
T parse_number(const std::string& s, const std::string& name) {
  T out{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(name + ": cannot parse '" + s + "'");
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

class Registry {
 public:
  void section(std::string s) { section_ = std::move(s); }

  void real(const std::string& key, double& v) {
    add(key, [&v, n = name(key)](const Values& in) { v = parse_number<double>(single(in, n), n); },
        [&v] { return fmt_double(v); });
  }
  void degrees(const std::string& key, double& radians) {
    add(key,
        [&radians, n = name(key)](const Values& in) {
          radians = parse_number<double>(single(in, n), n) * kPi / 180.0;
        },
        [&radians] { return fmt_double(radians * 180.0 / kPi); });
  }
  template <class I>
  void integer(const std::string& key, I& v) {
    add(key, [&v, n = name(key)](const Values& in) { v = parse_number<I>(single(in, n), n); },
        [&v] { return std::to_string(v); });
  }
  void boolean(const std::string& key, bool& v) {
    add(key,
        [&v, n = name(key)](const Values& in) {
          const std::string& s = single(in, n);
          if (s == "true" || s == "1" || s == "yes" || s == "on") {
            v = true;
          } else if (s == "false" || s == "0" || s == "no" || s == "off") {
            v = false;
          } else {
            throw ConfigError(n + ": expected a boolean, got '" + s + "'");
          }
        },
        [&v] { return std::string(v ? "true" : "false"); });
  }
  void integers(const std::string& key, std::vector<int>& v) {
    add(key,
        [&v, n = name(key)](const Values& in) {
          std::vector<int> out;
          for (const auto& item : in) {
            std::stringstream ss(item);
            std::string part;
            while (std::getline(ss, part, ',')) {
              part = CLI::detail::trim_copy(part);
              if (!part.empty()) out.push_back(parse_number<int>(part, n));
            }
          }
          if (out.empty()) throw ConfigError(n + " expects at least one value");
          v = std::move(out);
        },
        [&v] {
          std::string s;
          for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
          return s;
        });
  }
  void text(const std::string& key, std::string& v) {
    add(key, [&v, n = name(key)](const Values& in) { v = in.empty() ? std::string() : single(in, n); },
        [&v] { return v; });
  }
  void path(const std::string& key, std::filesystem::path& v) {
    add(key, [&v, n = name(key)](const Values& in) { v = single(in, n); }, [&v] { return v.string(); });
  }
  void scale(const std::string& key, worldgen::ScaleName& v) {
    add(key,
        [&v, n = name(key)](const Values& in) {
          const auto s = worldgen::parse_scale(single(in, n));
          if (!s) throw ConfigError(n + ": unknown scale class '" + in.front() + "'");
          v = *s;
        },
        [&v] { return std::string(worldgen::to_string(v)); });
  }

  std::vector<Binding> take() { return std::move(items_); }

 private:
  std::string name(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }
  void add(const std::string& key, std::function<void(const Values&)> set, std::function<std::string()> get) {
    items_.push_back({section_, key, std::move(set), std::move(get)});
  }

  std::string section_;
  std::vector<Binding> items_;
};

std::vector<Binding> bindings(RunConfig& c) {
  Registry r;
  r.integer("seed", c.seed);
  r.path("out", c.out);
  r.integer("workers", c.workers);

  r.section("world");
  r.scale("scale", c.scale);
  r.real("poisson_radius", c.poisson_radius);
  r.real("size_x", c.size_x);
  r.real("size_y", c.size_y);
  r.real("ceiling", c.ceiling);
  r.real("clearance", c.clearance);
  r.integer("count", c.world_count);

  r.section("camera");
  r.integer("width", c.camera.width);
  r.integer("height", c.camera.height);
  r.degrees("hfov_deg", c.camera.hfov);
  r.real("max_range", c.camera.max_range);

  r.section("capre");
  r.real("d_uav", c.capre.d_uav);
  r.real("contour_grad_threshold", c.capre.contour_grad_threshold);
  r.real("inflation_factor", c.capre.inflation_factor);

  r.section("dynamics");
  r.real("dt", c.dynamics.dt);
  r.real("a_max", c.dynamics.a_max);
  r.real("v_cap", c.dynamics.v_cap);
  r.real("yaw_rate_max", c.dynamics.yaw_rate_max);

  r.section("reward");
  r.real("r_arrive", c.reward.r_arrive);
  r.real("r_collision", c.reward.r_collision);
  r.real("r_exceed", c.reward.r_exceed);
  r.real("lambda_d", c.reward.lambda_d);
  r.real("lambda_z", c.reward.lambda_z);
  r.real("lambda_v", c.reward.lambda_v);
  r.real("lambda_dir", c.reward.lambda_dir);
  r.real("lambda_ang", c.reward.lambda_ang);
  r.real("lambda_lat", c.reward.lambda_lat);
  r.real("d_min", c.reward.d_min);
  r.real("v_max", c.reward.v_max);
  r.boolean("signed_dz", c.reward.signed_dz);
  r.integer("max_steps", c.max_steps);

  r.section("collect");
  r.integer("episodes", c.collect.episodes);
  r.integer("cap_frames", c.collect.cap_frames);

  r.section("vae");
  r.integers("channels", c.vae_arch.channels);
  r.integer("latent", c.vae_arch.latent);
  r.real("lambda_kl", c.vae.lambda_kl);
  r.real("learning_rate", c.vae.learning_rate);
  r.integer("batch_size", c.vae.batch_size);
  r.integer("epochs", c.vae.epochs);
  r.real("grad_clip", c.vae.grad_clip);

  r.section("lstm");
  r.integer("interval", c.lstm_arch.interval);
  r.integer("hidden", c.lstm_arch.hidden);
  r.real("learning_rate", c.lstm.learning_rate);
  r.integer("batch_size", c.lstm.batch_size);
  r.integer("epochs", c.lstm.epochs);
  r.real("grad_clip", c.lstm.grad_clip);

  r.section("ppo");
  r.real("gamma", c.ppo.gamma);
  r.real("gae_lambda", c.ppo.gae_lambda);
  r.real("clip_ratio", c.ppo.clip_ratio);
  r.real("entropy_coef", c.ppo.entropy_coef);
  r.real("value_coef", c.ppo.value_coef);
  r.integer("epochs", c.ppo.epochs);
  r.integer("minibatch", c.ppo.minibatch);
  r.integer("rollout_length", c.ppo.rollout_length);
  r.integer("total_steps", c.ppo.total_steps);
  r.real("learning_rate", c.ppo.learning_rate);
  r.real("max_grad_norm", c.ppo.max_grad_norm);
  r.integer("num_envs", c.ppo.num_envs);
  r.integer("hidden", c.ppo.hidden);
  r.real("init_log_std", c.ppo.init_log_std);

  r.section("eval");
  r.integer("seeds", c.protocol.seeds);
  r.integer("runs_per_seed", c.protocol.runs_per_seed);
  r.text("scale", c.eval_scale);
  r.boolean("empty_world", c.protocol.empty_world);
  r.boolean("deterministic", c.protocol.deterministic);
  r.boolean("speed_all_runs", c.protocol.speed_all_runs);
  r.integers("sweep_intervals", c.sweep_intervals);
  return r.take();
}

}  // namespace

void RunConfig::load(std::istream& is) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(is);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  auto table = bindings(*this);
  std::map<std::string, Binding*> index;
  for (auto& b : table) index[where(b)] = &b;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string section;
    for (const auto& p : item.parents) section += (section.empty() ? "" : ".") + p;
    if (section == "default") section.clear();
    const std::string full = section.empty() ? item.name : section + "." + item.name;
    const auto it = index.find(full);
    if (it == index.end()) throw ConfigError("unknown config key '" + full + "'");
    it->second->set(item.inputs);
  }
}

void RunConfig::load(const std::filesystem::path& ini) {
  std::ifstream is(ini);
  if (!is) throw ConfigError("cannot read config " + ini.string());
  load(is);
}

std::vector<ConfigKeyInfo> config_keys(const RunConfig& cfg) {
  std::vector<ConfigKeyInfo> out;
  for (const auto& b : bindings(const_cast<RunConfig&>(cfg))) out.push_back({b.section, b.key, b.get()});
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  std::string current;
  for (const auto& k : config_keys(*this)) {
    if (k.section != current) {
      os << "\n[" << k.section << "]\n";
      current = k.section;
    }
    os << k.key << " = " << (k.value.empty() ? "\"\"" : k.value) << '\n';
  }
  return os.str();
}

void RunConfig::validate() const {
  try {
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (world_count < 1) throw ConfigError("world.count must be at least 1");
    if (!eval_scale.empty() && !worldgen::parse_scale(eval_scale)) {
      throw ConfigError("eval.scale: unknown scale class '" + eval_scale + "'");
    }
    world_config().validate();
    world_config(true).validate();
    env_config().validate();
    capre::CollisionAwareConfig ca = capre;
    ca.intr = camera;
    ca.validate();
    repr::VaeArch va = vae_arch;
    va.width = camera.width;
    va.height = camera.height;
    va.validate();
    vae.validate();
    lstm_arch.validate();
    lstm.validate();
    ppo.validate();
    eval_protocol().validate();
    if (collect.episodes < 1 || collect.cap_frames < 1) throw ConfigError("collect caps must be positive");
    for (int t : sweep_intervals)
      if (t < 1) throw ConfigError("eval.sweep_intervals must be positive");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

worldgen::WorldConfig RunConfig::world_config(bool for_eval) const {
  worldgen::WorldConfig w;
  w.bounds_max = {size_x, size_y, ceiling};
  w.ceiling_height = ceiling;
  w.clearance = clearance;
  w.scale_class = worldgen::ScaleClass::of(scale);
  if (for_eval && !eval_scale.empty()) {
    if (const auto s = worldgen::parse_scale(eval_scale)) w.scale_class = worldgen::ScaleClass::of(*s);
  }
  w.poisson_radius = poisson_radius > 0.0 ? poisson_radius : w.scale_class.default_poisson_radius();
  return w;
}

env::EnvConfig RunConfig::env_config() const {
  env::EnvConfig e;
  e.reward = reward;
  e.dynamics = dynamics;
  e.camera = camera;
  e.d_uav = capre.d_uav;
  e.max_steps = max_steps;
  return e;
}

eval::EvalProtocol RunConfig::eval_protocol() const {
  eval::EvalProtocol p = protocol;
  p.world = world_config(true);
  p.seed = derive_seed(seed, 6);
  return p;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is) {
    is.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace scalenav::cli
