// SPDX-License-Identifier: Apache-2.0

#include "scalenav/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace scalenav::eval {

using json = nlohmann::json;

void EvalProtocol::validate() const {
  if (seeds < 1) throw InvalidArgument("eval seeds must be at least 1");
  if (runs_per_seed < 1) throw InvalidArgument("eval runs_per_seed must be at least 1");
  world.validate();
}

std::uint64_t run_world_seed(const EvalProtocol& p, int seed_index, int run) {
  return derive_seed(derive_seed(p.seed, static_cast<std::uint64_t>(seed_index)), static_cast<std::uint64_t>(run));
}

void compute_metrics(RunRecord& r) {
  r.steps = static_cast<int>(r.trajectory.size());
  double length = 0.0, speed = 0.0;
  Vec3 prev = r.start;
  for (const auto& p : r.trajectory) {
    length += (p.position - prev).norm();
    speed += p.velocity.norm_xy();
    prev = p.position;
  }
  r.path_length = length;
  r.mean_horizontal_speed = r.trajectory.empty() ? 0.0 : speed / static_cast<double>(r.trajectory.size());
}

double EvalReport::success_rate() const {
  if (runs.empty()) return 0.0;
  return static_cast<double>(count(env::Termination::Arrived)) / static_cast<double>(runs.size());
}

double EvalReport::average_speed() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : runs) {
    if (!speed_all_runs && !r.arrived()) continue;
    sum += r.mean_horizontal_speed;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

int EvalReport::count(env::Termination t) const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [t](const RunRecord& r) { return r.termination == t; }));
}

PolicyFactory agent_factory(const ppo::Representation& rep, std::shared_ptr<const ppo::PolicyNet> net,
                            bool deterministic) {
  return [rep, net, deterministic] { return std::make_unique<ppo::Agent>(rep, net, deterministic); };
}

RunRecord run_episode(env::Policy& policy, std::shared_ptr<const worldgen::World> world,
                      const env::EnvConfig& cfg, std::uint64_t episode_seed) {
  env::Environment e(std::move(world), cfg);
  RunRecord r;
  r.start = e.state().position;
  r.termination = env::classify(e.state(), e.world(), cfg, 0);
  if (r.termination == env::Termination::Running) {
    policy.begin_episode(episode_seed);
    while (!e.done()) {
      const auto frame = e.render();
      const auto out = e.step(policy.act(e.state(), e.world().goal, frame));
      const auto& s = e.state();
      r.trajectory.push_back({s.position, s.velocity, s.yaw});
      r.termination = out.termination;
    }
  }
  compute_metrics(r);
  return r;
}

EvalReport run_eval(const PolicyFactory& make_policy, const EvalProtocol& protocol,
                    const env::EnvConfig& env_cfg, int workers) {
  protocol.validate();
  env_cfg.validate();
  if (workers < 1) throw InvalidArgument("workers must be at least 1");
  const auto worlds = ppo::world_sampler(protocol.world, protocol.empty_world);
  const int total = protocol.total_runs();
  EvalReport report;
  report.speed_all_runs = protocol.speed_all_runs;
  report.runs.resize(static_cast<std::size_t>(total));

  std::atomic<int> next{0};
  auto work = [&] {
    const auto policy = make_policy();
    for (int i = next++; i < total; i = next++) {
      const int s = i / protocol.runs_per_seed, run = i % protocol.runs_per_seed;
      const std::uint64_t ws = run_world_seed(protocol, s, run);
      RunRecord r = run_episode(*policy, worlds(ws), env_cfg, derive_seed(ws, 2));
      r.seed_index = s;
      r.run = run;
      r.world_seed = ws;
      report.runs[static_cast<std::size_t>(i)] = std::move(r);
    }
  };
  const int nthreads = std::min(workers, total);
  if (nthreads == 1) {
    work();
    return report;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
  for (int w = 0; w < nthreads; ++w) {
    pool.emplace_back([&, w] {
      try {
        work();
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
        next = total;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return report;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "seed_index,run,world_seed,termination,steps,path_length,mean_horizontal_speed\n";
  for (const auto& r : report.runs) {
    os << r.seed_index << ',' << r.run << ',' << r.world_seed << ',' << env::to_string(r.termination) << ','
       << r.steps << ',' << fmt("%.17g", r.path_length) << ',' << fmt("%.17g", r.mean_horizontal_speed) << '\n';
  }
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_report_csv(os, report);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

void write_report_table(std::ostream& os, const EvalReport& report) {
  char line[160];
  std::snprintf(line, sizeof(line), "%5s %4s %-12s %6s %10s %10s\n", "seed", "run", "termination", "steps",
                "path (m)", "v_h (m/s)");
  os << line;
  for (const auto& r : report.runs) {
    std::snprintf(line, sizeof(line), "%5d %4d %-12s %6d %10.2f %10.2f\n", r.seed_index, r.run,
                  std::string(env::to_string(r.termination)).c_str(), r.steps, r.path_length,
                  r.mean_horizontal_speed);
    os << line;
  }
  std::snprintf(line, sizeof(line), "runs %zu  success rate %.2f  average speed %.2f m/s (%s)\n", report.runs.size(),
                report.success_rate(), report.average_speed(), report.speed_all_runs ? "all runs" : "successful runs");
  os << line;
}

SummaryRow summarize(std::string label, const EvalReport& report) {
  return {std::move(label), report.success_rate(), report.average_speed(), static_cast<int>(report.runs.size())};
}

void write_summary_table(std::ostream& os, std::span<const SummaryRow> rows, const std::string& label_header) {
  std::size_t w = label_header.size();
  for (const auto& r : rows) w = std::max(w, r.label.size());
  const int width = static_cast<int>(w);
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %12s  %18s  %5s\n", width, label_header.c_str(), "Success rate",
                "Average speed (m/s)", "Runs");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-*s  %12.2f  %18.2f  %5d\n", width, r.label.c_str(), r.success_rate,
                  r.average_speed, r.runs);
    os << line;
  }
}

void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows, const std::string& label_header) {
  os << label_header << ",success_rate,average_speed,runs\n";
  for (const auto& r : rows)
    os << r.label << ',' << fmt("%.17g", r.success_rate) << ',' << fmt("%.17g", r.average_speed) << ',' << r.runs
       << '\n';
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void export_trajectories(const std::filesystem::path& stem, const EvalReport& report) {
  auto jsonl = stem;
  jsonl += ".jsonl";
  auto dat = stem;
  dat += ".dat";
  std::ofstream js(jsonl), table(dat);
  if (!js || !table) throw std::runtime_error("cannot write trajectories under " + stem.string());
  table << "# seed run t x y z vx vy vz speed_h terminal\n";
  for (const auto& r : report.runs) {
    json head = {{"run", r.run},
                 {"seed_index", r.seed_index},
                 {"world_seed", r.world_seed},
                 {"termination", env::to_string(r.termination)},
                 {"steps", r.steps},
                 {"start", vec_json(r.start)},
                 {"speed_all_runs", report.speed_all_runs}};
    js << head.dump() << '\n';
    for (std::size_t t = 0; t < r.trajectory.size(); ++t) {
      const auto& p = r.trajectory[t];
      const bool terminal = t + 1 == r.trajectory.size();
      json row = {{"t", t + 1},
                  {"position", vec_json(p.position)},
                  {"velocity", vec_json(p.velocity)},
                  {"yaw", p.yaw},
                  {"terminal", terminal}};
      js << row.dump() << '\n';
      char line[320];
      std::snprintf(line, sizeof(line), "%d %d %zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d\n", r.seed_index, r.run,
                    t + 1, p.position.x, p.position.y, p.position.z, p.velocity.x, p.velocity.y, p.velocity.z,
                    p.velocity.norm_xy(), terminal ? 1 : 0);
      table << line;
    }
    table << '\n';
  }
  if (!js || !table) throw std::runtime_error("write failed under " + stem.string());
}

EvalReport import_trajectories(const std::filesystem::path& jsonl) {
  std::ifstream is(jsonl);
  if (!is) throw InvalidArgument("cannot read " + jsonl.string());
  EvalReport report;
  std::string line;
  RunRecord* cur = nullptr;
  int declared = 0;
  auto finish = [&] {
    if (!cur) return;
    if (static_cast<int>(cur->trajectory.size()) != declared) {
      throw InvalidArgument("trajectory file run has " + std::to_string(cur->trajectory.size()) + " rows, header says " +
                            std::to_string(declared));
    }
    compute_metrics(*cur);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("termination")) {
      finish();
      RunRecord r;
      r.run = j.at("run").get<int>();
      r.seed_index = j.at("seed_index").get<int>();
      r.world_seed = j.at("world_seed").get<std::uint64_t>();
      const auto t = env::parse_termination(j.at("termination").get<std::string>());
      if (!t) throw InvalidArgument("unknown termination in " + jsonl.string());
      r.termination = *t;
      r.start = json_vec(j.at("start"));
      declared = j.at("steps").get<int>();
      report.speed_all_runs = j.at("speed_all_runs").get<bool>();
      report.runs.push_back(std::move(r));
      cur = &report.runs.back();
    } else {
      if (!cur) throw InvalidArgument("trajectory row before any run header in " + jsonl.string());
      cur->trajectory.push_back(
          {json_vec(j.at("position")), json_vec(j.at("velocity")), j.at("yaw").get<double>()});
    }
  }
  finish();
  return report;
}

std::vector<SweepRow> sweep_T(const SweepConfig& cfg, const repr::ImageDataset& data,
                              std::shared_ptr<const repr::Vae> vae, const env::EnvConfig& env_cfg,
                              const ppo::WorldSampler& train_worlds, int workers,
                              const std::function<void(const SweepRow&)>& on_row) {
  if (!vae) throw InvalidArgument("sweep_T needs a trained VAE");
  if (cfg.intervals.empty()) throw InvalidArgument("sweep_T needs at least one interval");
  std::vector<SweepRow> rows;
  for (int T : cfg.intervals) {
    repr::MemoryArch arch = cfg.memory;
    arch.interval = T;
    auto trained = repr::train_lstm(data, *vae, arch, cfg.lstm);
    auto mem = std::make_shared<repr::Memory>(std::move(trained.memory));
    mem->params().set_requires_grad(false);
    const ppo::Representation rep{vae, mem};
    const auto policy = ppo::train_policy(rep, env_cfg, train_worlds, cfg.ppo, workers);
    SweepRow row{T, run_eval(agent_factory(rep, policy.net), cfg.protocol, env_cfg, workers)};
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace scalenav::eval
