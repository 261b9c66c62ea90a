// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scalenav/cli.hpp"

namespace scalenav::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum class Target { CollisionAware, Raw };

std::string target_name(Target t) { return t == Target::CollisionAware ? "ca" : "raw"; }
Target target_of(ppo::AblationMode m) { return ppo::collision_aware(m) ? Target::CollisionAware : Target::Raw; }

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string numbered(const char* pattern, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, i);
  return buf;
}

// Seed streams of the master seed.
enum SeedStream : std::uint64_t { kWorlds = 1, kCollect = 2, kVae = 3, kLstm = 4, kPolicy = 5 };

std::uint64_t policy_seed(const RunConfig& c, ppo::Stage stage, ppo::AblationMode mode) {
  const std::uint64_t base = derive_seed(c.seed, kPolicy);
  return stage == ppo::Stage::Initial ? base : derive_seed(base, 1 + static_cast<std::uint64_t>(mode));
}

// Output directory plus the manifest bookkeeping of one subcommand.
class Run {
 public:
  Run(const RunConfig& cfg, std::string command, std::ostream& log)
      : cfg_(cfg), command_(std::move(command)), log_(log) {}

  const RunConfig& cfg() const { return cfg_; }
  std::ostream& log() { return log_; }
  fs::path abs(const fs::path& rel) const { return cfg_.out / rel; }

  void option(const std::string& k, const std::string& v) { options_[k] = v; }

  void require(const fs::path& rel, const std::string& what) const {
    if (!fs::exists(abs(rel))) {
      throw MissingPrerequisite("missing " + what + " (" + abs(rel).string() + "); run the earlier stage first");
    }
  }
  void require_checkpoint(const fs::path& rel, const std::string& what) const {
    if (!tensor::checkpoint_exists(abs(rel))) {
      throw MissingPrerequisite("missing " + what + " checkpoint (" + abs(rel).string() +
                                ".bin); run the earlier stage first");
    }
  }

  void input(const fs::path& rel) { inputs_.push_back(rel); }
  void input_checkpoint(const fs::path& rel) {
    input(fs::path(rel.string() + ".bin"));
    input(fs::path(rel.string() + ".manifest"));
  }
  fs::path output(const fs::path& rel) {
    fs::create_directories(abs(rel).parent_path());
    outputs_.push_back(rel);
    return abs(rel);
  }
  fs::path output_checkpoint(const fs::path& rel) {
    output(fs::path(rel.string() + ".bin"));
    output(fs::path(rel.string() + ".manifest"));
    return abs(rel);
  }

  void write_manifest(const std::string& tag = {}) {
    json m;
    m["command"] = command_;
    m["options"] = options_;
    m["seed"] = cfg_.seed;
    json config = json::object();
    for (const auto& k : config_keys(cfg_)) {
      if (k.section.empty() && (k.key == "out" || k.key == "workers")) continue;
      config[k.section.empty() ? k.key : k.section + "." + k.key] = k.value;
    }
    m["config"] = config;
    auto files = [this](const std::vector<fs::path>& list) {
      json arr = json::array();
      for (const auto& p : list) arr.push_back({{"path", p.generic_string()}, {"fnv1a64", hex(file_checksum(abs(p)))}});
      return arr;
    };
    m["inputs"] = files(inputs_);
    m["outputs"] = files(outputs_);
    const fs::path rel = fs::path("manifests") / (command_ + (tag.empty() ? "" : "_" + tag) + ".json");
    fs::create_directories(abs(rel).parent_path());
    std::ofstream os(abs(rel));
    os << m.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + abs(rel).string());
    log_ << "wrote " << rel.generic_string() << '\n';
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  std::ostream& log_;
  std::map<std::string, std::string> options_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

fs::path world_file(std::size_t i) { return fs::path("worlds") / numbered("world_%03zu.txt", i); }
fs::path vae_ckpt(Target t) { return fs::path("checkpoints") / ("vae_" + target_name(t)); }
fs::path lstm_ckpt(Target t) { return fs::path("checkpoints") / ("lstm_" + target_name(t)); }
fs::path policy_ckpt(ppo::Stage s, ppo::AblationMode m) {
  if (s == ppo::Stage::Initial) return fs::path("checkpoints") / "policy_initial";
  return fs::path("checkpoints") / ("policy_final_" + std::string(ppo::to_string(m)));
}
const fs::path kDatasetDir = "dataset";

repr::VaeArch vae_arch(const RunConfig& c) {
  repr::VaeArch a = c.vae_arch;
  a.width = c.camera.width;
  a.height = c.camera.height;
  return a;
}

repr::MemoryArch memory_arch(const RunConfig& c) {
  repr::MemoryArch m = c.lstm_arch;
  m.latent = c.vae_arch.latent;
  return m;
}

capre::CollisionAwareConfig capre_config(const RunConfig& c) {
  capre::CollisionAwareConfig ca = c.capre;
  ca.intr = c.camera;
  return ca;
}

ppo::PpoConfig ppo_config(const RunConfig& c, ppo::Stage stage, ppo::AblationMode mode) {
  ppo::PpoConfig p = c.ppo;
  p.seed = policy_seed(c, stage, mode);
  return p;
}

// The initial policy sees the CaMeRL layout with random frozen modules.
constexpr ppo::AblationMode kInitialMode = ppo::AblationMode::CaMeRL;

ppo::RepresentationPaths rep_paths(const Run& run, ppo::AblationMode mode) {
  const Target t = target_of(mode);
  return {run.abs(vae_ckpt(t)), run.abs(lstm_ckpt(t))};
}

void require_representation(Run& run, ppo::AblationMode mode) {
  const Target t = target_of(mode);
  run.require_checkpoint(vae_ckpt(t), "VAE (" + target_name(t) + ")");
  run.input_checkpoint(vae_ckpt(t));
  if (ppo::uses_memory(mode)) {
    run.require_checkpoint(lstm_ckpt(t), "LSTM (" + target_name(t) + ")");
    run.input_checkpoint(lstm_ckpt(t));
  }
}

ppo::Representation representation(const Run& run, ppo::Stage stage, ppo::AblationMode mode) {
  const RunConfig& c = run.cfg();
  const auto m = stage == ppo::Stage::Initial ? kInitialMode : mode;
  return ppo::make_representation(stage, m, rep_paths(run, m), vae_arch(c), memory_arch(c),
                                  policy_seed(c, stage, mode));
}

std::vector<fs::path> dataset_files(const Run& run) {
  std::vector<fs::path> files;
  if (fs::is_directory(run.abs(kDatasetDir))) {
    for (const auto& e : fs::directory_iterator(run.abs(kDatasetDir)))
      if (e.path().extension() == ".jsonl") files.push_back(kDatasetDir / e.path().filename());
  }
  std::sort(files.begin(), files.end());
  return files;
}

repr::ImageDataset load_dataset(Run& run, Target target) {
  const auto files = dataset_files(run);
  if (files.empty()) throw MissingPrerequisite("no collected episodes under " + run.abs(kDatasetDir).string() + "; run collect first");
  std::vector<env::EpisodeRecord> episodes;
  for (const auto& f : files) {
    run.input(f);
    episodes.push_back(env::load_episode(run.abs(f)));
  }
  return repr::build_dataset(episodes, capre_config(run.cfg()),
                             target == Target::CollisionAware ? repr::Supervision::CollisionAware
                                                              : repr::Supervision::Raw);
}

std::shared_ptr<ppo::PolicyNet> load_policy(Run& run, const ppo::Representation& rep, ppo::Stage stage,
                                            ppo::AblationMode mode) {
  const fs::path ckpt = policy_ckpt(stage, mode);
  run.require_checkpoint(ckpt, std::string(ppo::to_string(stage)) + " policy");
  run.input_checkpoint(ckpt);
  const RunConfig& c = run.cfg();
  auto net = std::make_shared<ppo::PolicyNet>(ppo::policy_arch(rep, c.env_config(), c.ppo), 0);
  net->params().load(run.abs(ckpt));
  return net;
}

void log_epoch(std::ostream& log, const char* what, const repr::EpochLog& e) {
  log << what << " epoch " << e.epoch << " l_coll " << e.l_coll << " l_kl " << e.l_kl << " l_lstm " << e.l_lstm << '\n';
}

// ---------------------------------------------------------------------------

void cmd_gen_world(Run& run) {
  const RunConfig& c = run.cfg();
  const auto sampler = ppo::world_sampler(c.world_config());
  for (int i = 0; i < c.world_count; ++i) {
    const auto w = sampler(derive_seed(derive_seed(c.seed, kWorlds), static_cast<std::uint64_t>(i)));
    std::ofstream os(run.output(world_file(static_cast<std::size_t>(i))));
    worldgen::save_world(*w, os);
    if (!os) throw std::runtime_error("cannot write world file");
    run.log() << "world " << i << ": " << w->obstacles.size() << " obstacles\n";
  }
  run.write_manifest();
}

std::vector<fs::path> world_inputs(Run& run, const std::string& explicit_world) {
  std::vector<fs::path> worlds;
  if (!explicit_world.empty()) {
    run.require(explicit_world, "world file");
    worlds.push_back(explicit_world);
  } else {
    for (int i = 0; i < run.cfg().world_count; ++i) {
      run.require(world_file(static_cast<std::size_t>(i)), "generated world");
      worlds.push_back(world_file(static_cast<std::size_t>(i)));
    }
  }
  return worlds;
}

fs::path frame_for(const fs::path& world_rel) {
  return fs::path("frames") / world_rel.filename().replace_extension(".pgm");
}

void cmd_render(Run& run, const std::string& world) {
  const auto worlds = world_inputs(run, world);
  for (const auto& rel : worlds) {
    run.input(rel);
    std::ifstream is(run.abs(rel));
    const worldgen::World w = worldgen::load_world(is);
    const depthcam::CameraPose pose{w.start, std::atan2(w.goal.y - w.start.y, w.goal.x - w.start.x)};
    const auto img = depthcam::render_depth(w, pose, run.cfg().camera);
    depthcam::save_depth(run.output(frame_for(rel)), img, run.cfg().camera, pose);
    run.output(fs::path(depthcam::meta_path(frame_for(rel))));
  }
  run.write_manifest(world.empty() ? "" : fs::path(world).stem().string());
}

void cmd_preprocess(Run& run, const std::string& input) {
  std::vector<fs::path> frames;
  if (!input.empty()) {
    run.require(input, "depth frame");
    frames.push_back(input);
  } else {
    for (const auto& w : world_inputs(run, {})) {
      run.require(frame_for(w), "rendered frame");
      frames.push_back(frame_for(w));
    }
  }
  const auto ca_cfg = capre_config(run.cfg());
  for (const auto& rel : frames) {
    run.input(rel);
    const auto file = depthcam::load_depth(run.abs(rel));
    capre::CollisionAwareConfig cfg = ca_cfg;
    cfg.intr = file.intr;
    const auto out = capre::collision_aware(file.image, cfg);
    fs::path dst = rel;
    dst.replace_filename(rel.stem().string() + "_ca.pgm");
    depthcam::save_depth(run.output(dst), out, file.intr, file.pose);
    run.output(depthcam::meta_path(dst));
  }
  run.write_manifest(input.empty() ? "" : fs::path(input).stem().string());
}

void cmd_collect(Run& run) {
  const RunConfig& c = run.cfg();
  const ppo::Representation rep = representation(run, ppo::Stage::Initial, kInitialMode);
  const auto net = load_policy(run, rep, ppo::Stage::Initial, kInitialMode);
  ppo::Agent agent(rep, net, false);
  const auto sampler = ppo::world_sampler(c.world_config());
  env::CollectConfig cc = c.collect;
  cc.seed = derive_seed(c.seed, kCollect);
  std::vector<std::shared_ptr<const worldgen::World>> worlds;
  for (int i = 0; i < cc.episodes; ++i) worlds.push_back(sampler(derive_seed(cc.seed, 1000 + static_cast<std::uint64_t>(i))));
  const auto episodes = env::collect_dataset(agent, worlds, c.env_config(), cc);
  // Stale episodes from an earlier, larger collection would leak into training.
  for (const auto& f : dataset_files(run)) fs::remove(run.abs(f));
  fs::remove_all(run.abs(kDatasetDir / "frames"));
  std::size_t frames = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const fs::path rel = kDatasetDir / numbered("episode_%04zu.jsonl", i);
    env::save_episode(run.output(rel), episodes[i], c.camera, "frames");
    frames += episodes[i].size();
  }
  run.log() << "collected " << episodes.size() << " episodes, " << frames << " frames\n";
  run.write_manifest();
}

void cmd_train_vae(Run& run, Target target) {
  const RunConfig& c = run.cfg();
  const auto data = load_dataset(run, target);
  repr::TrainConfig tc = c.vae;
  tc.seed = derive_seed(c.seed, kVae);
  std::ostream& log = run.log();
  auto trained = repr::train_vae(data, vae_arch(c), tc, [&](const repr::EpochLog& e) { log_epoch(log, "vae", e); });
  trained.vae.params().save(run.output_checkpoint(vae_ckpt(target)));
  repr::write_training_log(run.output(fs::path("logs") / ("vae_" + target_name(target) + ".csv")), trained.log);
  log << "baseline mean-image mse " << repr::mean_image_baseline(data) << ", best epoch " << trained.best_epoch << '\n';
  run.write_manifest(target_name(target));
}

void cmd_train_lstm(Run& run, Target target) {
  const RunConfig& c = run.cfg();
  run.require_checkpoint(vae_ckpt(target), "VAE (" + target_name(target) + ")");
  if (dataset_files(run).empty()) throw MissingPrerequisite("no collected episodes; run collect first");
  run.input_checkpoint(vae_ckpt(target));
  repr::Vae vae(vae_arch(c), 0);
  vae.params().load(run.abs(vae_ckpt(target)));
  vae.params().set_requires_grad(false);
  const auto data = load_dataset(run, target);
  repr::LstmTrainConfig lc = c.lstm;
  lc.seed = derive_seed(c.seed, kLstm);
  std::ostream& log = run.log();
  auto trained = repr::train_lstm(data, vae, memory_arch(c), lc, [&](const repr::EpochLog& e) { log_epoch(log, "lstm", e); });
  trained.memory.params().save(run.output_checkpoint(lstm_ckpt(target)));
  repr::write_training_log(run.output(fs::path("logs") / ("lstm_" + target_name(target) + ".csv")), trained.log);
  const auto past = repr::evaluate_past_reconstruction(data, vae, trained.memory);
  log << "window " << trained.window << ", past-frame mse " << past.model_mse << " vs memoryless " << past.baseline_mse
      << '\n';
  run.write_manifest(target_name(target));
}

ppo::PolicyTraining train_policy_stage(Run& run, ppo::Stage stage, ppo::AblationMode mode) {
  const RunConfig& c = run.cfg();
  const ppo::Representation rep = representation(run, stage, mode);
  std::ostream& log = run.log();
  const std::string label = stage == ppo::Stage::Initial ? "initial" : std::string(ppo::to_string(mode));
  auto trained = ppo::train_policy(rep, c.env_config(), ppo::world_sampler(c.world_config()),
                                   ppo_config(c, stage, mode), c.workers, [&](const ppo::UpdateLog& u) {
                                     char line[200];
                                     std::snprintf(line, sizeof(line),
                                                   "%s update %d steps %lld episodes %d return %.3f success %.2f\n",
                                                   label.c_str(), u.update, static_cast<long long>(u.steps), u.episodes,
                                                   u.mean_return, u.success_rate);
                                     log << line << std::flush;
                                   });
  trained.net->params().save(run.output_checkpoint(policy_ckpt(stage, mode)));
  const fs::path csv = fs::path("logs") / (policy_ckpt(stage, mode).filename().string() + ".csv");
  ppo::write_update_log(run.output(csv), trained.log);
  return trained;
}

eval::EvalReport evaluate(Run& run, const ppo::Representation& rep, std::shared_ptr<const ppo::PolicyNet> net,
                          const std::string& stem) {
  const RunConfig& c = run.cfg();
  const auto protocol = c.eval_protocol();
  const auto report = eval::run_eval(eval::agent_factory(rep, std::move(net), protocol.deterministic), protocol,
                                     c.env_config(), c.workers);
  eval::write_report_csv(run.output(stem + ".csv"), report);
  std::ofstream txt(run.output(stem + ".txt"));
  eval::write_report_table(txt, report);
  eval::export_trajectories(run.abs(stem + "_traj"), report);
  run.output(stem + "_traj.jsonl");
  run.output(stem + "_traj.dat");
  run.log() << stem << ": success rate " << report.success_rate() << ", average speed " << report.average_speed()
            << " m/s over " << report.runs.size() << " runs\n";
  return report;
}

void cmd_train_policy(Run& run, ppo::Stage stage, ppo::AblationMode mode) {
  if (stage == ppo::Stage::Final) require_representation(run, mode);
  train_policy_stage(run, stage, mode);
  run.write_manifest(stage == ppo::Stage::Initial ? "initial" : "final_" + std::string(ppo::to_string(mode)));
}

void cmd_eval(Run& run, ppo::Stage stage, ppo::AblationMode mode) {
  if (stage == ppo::Stage::Final) require_representation(run, mode);
  const auto rep = representation(run, stage, mode);
  const auto net = load_policy(run, rep, stage, mode);
  const std::string tag = stage == ppo::Stage::Initial ? "initial" : "final_" + std::string(ppo::to_string(mode));
  evaluate(run, rep, net, "eval/" + tag);
  run.write_manifest(tag);
}

void write_tables(Run& run, const std::string& stem, std::span<const eval::SummaryRow> rows, const std::string& header) {
  std::ofstream csv(run.output(stem + ".csv"));
  eval::write_summary_csv(csv, rows, header);
  std::ostringstream table;
  eval::write_summary_table(table, rows, header);
  std::ofstream txt(run.output(stem + ".txt"));
  txt << table.str();
  run.log() << table.str();
}

void cmd_sweep_t(Run& run) {
  const RunConfig& c = run.cfg();
  run.require_checkpoint(vae_ckpt(Target::CollisionAware), "VAE (ca)");
  if (dataset_files(run).empty()) throw MissingPrerequisite("no collected episodes; run collect first");
  run.input_checkpoint(vae_ckpt(Target::CollisionAware));
  auto vae = std::make_shared<repr::Vae>(vae_arch(c), 0);
  vae->params().load(run.abs(vae_ckpt(Target::CollisionAware)));
  vae->params().set_requires_grad(false);
  const auto data = load_dataset(run, Target::CollisionAware);
  eval::SweepConfig sc;
  sc.intervals = c.sweep_intervals;
  sc.memory = memory_arch(c);
  sc.lstm = c.lstm;
  sc.lstm.seed = derive_seed(c.seed, kLstm);
  sc.ppo = ppo_config(c, ppo::Stage::Final, ppo::AblationMode::CaMeRL);
  sc.protocol = c.eval_protocol();
  std::ostream& log = run.log();
  const auto rows = eval::sweep_T(sc, data, vae, c.env_config(), ppo::world_sampler(c.world_config()), c.workers,
                                  [&](const eval::SweepRow& r) {
                                    log << "T=" << r.interval << " success " << r.report.success_rate() << '\n';
                                  });
  std::vector<eval::SummaryRow> summary;
  for (const auto& r : rows) {
    summary.push_back(eval::summarize(std::to_string(r.interval), r.report));
    eval::write_report_csv(run.output("sweep/T" + std::to_string(r.interval) + ".csv"), r.report);
  }
  write_tables(run, "sweep/sweep_t", summary, "T");
  run.write_manifest();
}

void cmd_ablate(Run& run) {
  for (auto m : ppo::kAllModes) require_representation(run, m);
  std::vector<eval::SummaryRow> summary;
  for (auto m : ppo::kAllModes) {
    const auto trained = train_policy_stage(run, ppo::Stage::Final, m);
    const auto rep = representation(run, ppo::Stage::Final, m);
    const auto report = evaluate(run, rep, trained.net, "ablate/" + std::string(ppo::to_string(m)));
    summary.push_back(eval::summarize(std::string(ppo::to_string(m)), report));
  }
  write_tables(run, "ablate/ablation", summary, "Method");
  run.write_manifest();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collision-aware, memory-enhanced navigation pipeline", "scalenav"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir;
  app.add_option("--config", config_path, "INI run configuration");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--workers", workers, "Worker threads for rollouts and evaluation")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  bool dump_config = false;
  app.add_flag("--print-config", dump_config, "Print the resolved configuration and exit");

  std::string world, input, target = "ca", stage = "final", mode = "CaMeRL";
  const std::vector<std::string> targets = {"ca", "raw"};
  const std::vector<std::string> stages = {"initial", "final"};
  const std::vector<std::string> modes = {"VanillaRL", "CaRL", "MeRL", "CaMeRL"};

  auto* gen = app.add_subcommand("gen-world", "Generate world files");
  auto* render = app.add_subcommand("render", "Render the start view of generated worlds");
  render->add_option("--world", world, "World file relative to the output directory");
  auto* pre = app.add_subcommand("preprocess", "Collision-aware transform of rendered frames");
  pre->add_option("--input", input, "Depth PGM relative to the output directory");
  auto* collect = app.add_subcommand("collect", "Collect depth sequences with the initial policy");
  auto* tvae = app.add_subcommand("train-vae", "Train the VAE on collected frames");
  tvae->add_option("--target", target, "Supervision target")->check(CLI::IsMember(targets));
  auto* tlstm = app.add_subcommand("train-lstm", "Train the LSTM on a frozen VAE");
  tlstm->add_option("--target", target, "Supervision target")->check(CLI::IsMember(targets));
  auto* tpol = app.add_subcommand("train-policy", "Train a policy with PPO");
  tpol->add_option("--stage", stage, "Pipeline stage")->check(CLI::IsMember(stages));
  tpol->add_option("--mode", mode, "Ablation mode")->check(CLI::IsMember(modes));
  auto* ev = app.add_subcommand("eval", "Evaluate a trained policy");
  ev->add_option("--stage", stage, "Pipeline stage")->check(CLI::IsMember(stages));
  ev->add_option("--mode", mode, "Ablation mode")->check(CLI::IsMember(modes));
  auto* sweep = app.add_subcommand("sweep-t", "Sweep the LSTM interval T");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all four ablation modes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg.load(fs::path(config_path));
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (!out_dir.empty()) cfg.out = out_dir;
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (dump_config) {
    out << cfg.dump();
    return kExitOk;
  }
  if (app.get_subcommands().empty()) {
    err << "a subcommand is required; run with --help for the list\n";
    return kExitConfig;
  }

  const auto* sub = app.get_subcommands().front();
  Run r(cfg, sub->get_name(), out);
  try {
    if (sub == gen) {
      cmd_gen_world(r);
    } else if (sub == render) {
      r.option("world", world);
      cmd_render(r, world);
    } else if (sub == pre) {
      r.option("input", input);
      cmd_preprocess(r, input);
    } else if (sub == collect) {
      cmd_collect(r);
    } else if (sub == tvae || sub == tlstm) {
      r.option("target", target);
      const Target t = target == "ca" ? Target::CollisionAware : Target::Raw;
      sub == tvae ? cmd_train_vae(r, t) : cmd_train_lstm(r, t);
    } else if (sub == tpol || sub == ev) {
      r.option("stage", stage);
      r.option("mode", mode);
      const auto st = *ppo::parse_stage(stage);
      const auto md = *ppo::parse_mode(mode);
      sub == tpol ? cmd_train_policy(r, st, md) : cmd_eval(r, st, md);
    } else if (sub == sweep) {
      cmd_sweep_t(r);
    } else if (sub == ablate) {
      cmd_ablate(r);
    }
  } catch (const MissingPrerequisite& e) {
    err << "missing prerequisite: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const ppo::MissingCheckpoint& e) {
    err << "missing prerequisite: " << e.what() << '\n';
    return kExitPrerequisite;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << sub->get_name() << " failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace scalenav::cli
