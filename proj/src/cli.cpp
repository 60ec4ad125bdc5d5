#include "active_mocap/cli.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "active_mocap/config.hpp"
#include "active_mocap/errors.hpp"
#include "active_mocap/metrics.hpp"
#include "active_mocap/seeding.hpp"
#include "json.hpp"

namespace active_mocap::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

struct Usage : Error {
  using Error::Error;
};

marl::RunConfig resolve_config(const std::string& path, const std::string& preset) {
  return path.empty() ? config::preset(preset) : config::load(path);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TrainArgs {
  std::string config, preset = "desk", out = "runs/train", reward_mode;
  uint64_t seed = 0;
  bool seed_set = false;
  int iterations = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto run = resolve_config(a.config, a.preset);
  if (a.seed_set) run.seed = a.seed;
  if (a.iterations >= 0) run.train.total_steps = static_cast<int64_t>(a.iterations) * run.train.batch;
  if (a.reward_mode == "shared") run.env.reward_mode = marl::RewardMode::kShared;
  if (a.reward_mode == "ctcr") run.env.reward_mode = marl::RewardMode::kCtcr;
  run.resolve();
  fs::create_directories(a.out);
  write_file(fs::path(a.out) / "config.json", config::to_json(run));
  const auto result = marl::train(run, a.out, [&](const std::string& row) {
    if (!a.quiet) out << row << '\n';
  });
  out << "metrics: " << result.metrics_path << "\ncheckpoint: " << result.final_checkpoint << '\n';
  return 0;
}

struct EvalArgs {
  std::string config, preset = "desk", checkpoint, policy = "learned", triangulation, smoothing = "off",
              out, safety;
  int episodes = 1;
  int n_cams = 0;
  double tau = 200.0;
  double smoothing_alpha = 0.5;
  double ema = 0.0;
  bool noise = false;
  bool greedy = false;
  uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto run = resolve_config(a.config, a.preset);
  auto& env = run.env;
  if (a.n_cams > 0) {
    env.world.num_cameras = a.n_cams;
    env.max_cameras_observed = std::max(env.max_cameras_observed, a.n_cams);
  }
  if (a.triangulation == "dlt") env.reconstruction.method = perception::TriangulationMethod::kDlt;
  if (a.triangulation == "ransac") env.reconstruction.method = perception::TriangulationMethod::kRansac;
  env.smoothing_alpha = a.smoothing == "on" ? a.smoothing_alpha : 1.0;
  if (a.safety == "none") env.safety.mode = safety::SafetyMode::kNone;
  if (a.safety == "oca") env.safety.mode = safety::SafetyMode::kOca;
  if (a.safety == "mask") env.safety.mode = safety::SafetyMode::kMask;
  if (a.ema > 0.0) {
    env.safety.smooth = true;
    env.safety.smooth_eta = a.ema;
  }
  if (a.noise) env.safety.noise = true;
  run.resolve();

  std::unique_ptr<metrics::Policy> policy;
  if (a.policy == "fixed") {
    policy = std::make_unique<metrics::FixedPolicy>();
  } else if (a.policy == "rulebased") {
    policy = std::make_unique<metrics::RuleBasedPolicy>();
  } else if (a.policy == "random") {
    policy = std::make_unique<metrics::RandomPolicy>();
  } else {
    if (a.checkpoint.empty()) throw Usage("--policy learned needs --checkpoint");
    auto net = std::make_shared<neural::PolicyNetwork>(run.model);
    net->load(a.checkpoint);
    policy = std::make_unique<metrics::LearnedPolicy>(net, a.greedy);
  }

  metrics::EvalOptions opts;
  opts.episodes = a.episodes;
  opts.tau_mm = a.tau;
  opts.seed = a.seed;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    opts.frames_path = (fs::path(a.out) / "frames.jsonl").string();
    opts.summary_path = (fs::path(a.out) / "summary.json").string();
  }
  const auto s = metrics::evaluate(*policy, env, opts);
  out << std::fixed << std::setprecision(3);
  out << "policy            " << s.policy << '\n'
      << "cameras           " << env.world.num_cameras << '\n'
      << "episodes          " << s.episodes << '\n'
      << "frames            " << s.frames << '\n'
      << "mean MPJPE (mm)   " << s.mean_mpjpe_mm << '\n'
      << "tau (mm)          " << s.tau_mm << '\n'
      << "success rate      " << s.success_rate << '\n'
      << "mean team reward  " << s.mean_team_reward << '\n'
      << "min cam-human (m) " << s.min_camera_human_distance << '\n';
  return 0;
}

int line_of(const std::string& text, size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

int cmd_contrib(const std::string& scene_path, const std::string& out_path, uint64_t seed, double noise,
                std::ostream& out) {
  const std::string text = read_file(scene_path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(scene_path + ":" + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  world::WorldState state;
  world::WorldConfig wcfg;
  try {
    for (const auto& c : j.at("cameras")) {
      world::CameraAgentState cam;
      cam.id = static_cast<int>(state.cameras.size());
      const auto p = c.at("position").get<std::vector<double>>();
      if (p.size() != 3) throw ConfigError("camera position needs 3 values");
      cam.pose.position = {p[0], p[1], p[2]};
      cam.pose.pitch = c.value("pitch", 0.0);
      cam.pose.yaw = c.value("yaw", 0.0);
      cam.intrinsics = wcfg.intrinsics;
      state.cameras.push_back(cam);
    }
    for (const auto& h : j.at("humans")) {
      world::HumanState hs;
      hs.id = static_cast<int>(state.humans.size());
      const auto p = h.at("position").get<std::vector<double>>();
      if (p.size() < 2) throw ConfigError("human position needs x and y");
      hs.position = {p[0], p[1], 0.0};
      hs.heading = h.value("heading", 0.0);
      hs.is_target = h.value("is_target", false);
      state.humans.push_back(hs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(scene_path + ": " + e.what());
  }
  const int target = [&] {
    for (const auto& h : state.humans)
      if (h.is_target) return h.id;
    throw ConfigError(scene_path + ": no human has is_target");
  }();
  if (state.cameras.size() < 2) throw ConfigError(scene_path + ": need at least two cameras");

  perception::PerceptionConfig pc;
  pc.noise_sigma = noise;
  std::mt19937_64 rng(mix_seed(seed, 11));
  std::vector<perception::AgentPacket> packets;
  for (const auto& cam : state.cameras)
    packets.push_back(perception::make_packet(cam, perception::detect(cam, state, pc, rng)));
  const auto truth = world::skeleton_of(state.humans[target]);
  const auto table = reward::coalition_table(packets, target, truth, nullptr, reward::TeamRewardOptions{});
  const auto credit = reward::ctcr(table);

  ordered_json report;
  report["cameras"] = static_cast<int>(state.cameras.size());
  auto& coalitions = report["coalitions"] = json::array();
  for (perception::CameraMask m = 0; m < table.values.size(); ++m) {
    std::vector<int> members;
    for (int i = 0; i < table.n; ++i)
      if (m >> i & 1u) members.push_back(i);
    coalitions.push_back(ordered_json{{"members", members}, {"reward", table[m]}});
  }
  report["team_reward"] = table.full();
  report["ctcr"] = credit;
  out << std::fixed << std::setprecision(6);
  out << "coalition            reward\n";
  for (perception::CameraMask m = 0; m < table.values.size(); ++m) {
    if (std::popcount(m) < 2) continue;
    std::string name = "{";
    for (int i = 0; i < table.n; ++i)
      if (m >> i & 1u) name += (name.size() > 1 ? "," : "") + std::to_string(i);
    name += "}";
    out << std::left << std::setw(20) << name << ' ' << table[m] << '\n';
  }
  out << "camera  ctcr\n";
  for (size_t i = 0; i < credit.size(); ++i) out << std::setw(7) << i << ' ' << credit[i] << '\n';
  if (!out_path.empty()) write_file(out_path, report.dump(2) + "\n");
  return 0;
}

int cmd_stats(const std::string& frames_path, const std::string& out_dir, std::ostream& out) {
  const auto frames = metrics::read_frames(frames_path);
  const auto s = metrics::behavior_stats(frames);
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "distance.csv", s.distance.to_csv());
  write_file(fs::path(out_dir) / "pitch.csv", s.pitch.to_csv());
  write_file(fs::path(out_dir) / "min_angle.csv", s.min_angle.to_csv());
  std::vector<double> mins;
  for (const auto& f : frames) mins.push_back(f.min_camera_human_distance);
  const auto safety = metrics::Histogram::build(mins, metrics::Histogram::uniform_edges(0.0, 5.0, 0.1));
  write_file(fs::path(out_dir) / "min_camera_human_distance.csv", safety.to_csv());
  out << "frames " << frames.size() << " -> " << out_dir << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active multi-camera motion capture: training, evaluation and analysis"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train camera policies with MAPPO");
  train->add_option("--config", ta.config, "Run config file (JSON)");
  train->add_option("--preset", ta.preset, "Preset when no config is given")->check(CLI::IsMember({"desk", "paper"}));
  train->add_option("--out", ta.out, "Output directory");
  auto* seed_opt = train->add_option("--seed", ta.seed, "Run seed (overrides the config)");
  train->add_option("--iterations", ta.iterations, "Training iterations (overrides total_steps)");
  train->add_option("--reward-mode", ta.reward_mode, "shared or ctcr")->check(CLI::IsMember({"shared", "ctcr"}));
  train->add_flag("--quiet", ta.quiet, "Do not echo metric rows");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a policy or baseline");
  eval->add_option("--config", ea.config, "Run config file (JSON)");
  eval->add_option("--preset", ea.preset, "Preset when no config is given")->check(CLI::IsMember({"desk", "paper"}));
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint for --policy learned");
  eval->add_option("--policy", ea.policy, "fixed|rulebased|learned|random")
      ->check(CLI::IsMember({"fixed", "rulebased", "learned", "random"}));
  eval->add_option("--episodes", ea.episodes, "Episodes to run")->check(CLI::PositiveNumber);
  eval->add_option("--tau", ea.tau, "Success threshold in mm")->check(CLI::PositiveNumber);
  eval->add_option("--seed", ea.seed, "Evaluation seed");
  eval->add_option("--n-cams", ea.n_cams, "Camera count override")->check(CLI::Range(2, 12));
  eval->add_option("--triangulation", ea.triangulation, "dlt|ransac")->check(CLI::IsMember({"dlt", "ransac"}));
  eval->add_option("--smoothing", ea.smoothing, "on|off")->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--smoothing-alpha", ea.smoothing_alpha, "Low-pass coefficient when smoothing is on");
  eval->add_option("--safety", ea.safety, "none|oca|mask")->check(CLI::IsMember({"none", "oca", "mask"}));
  eval->add_option("--ema", ea.ema, "EMA smoothing factor of the executed command")->check(CLI::Range(0.0, 1.0));
  eval->add_flag("--noise", ea.noise, "Multiplicative actuation noise");
  eval->add_flag("--greedy", ea.greedy, "Take the most likely action instead of sampling");
  eval->add_option("--out", ea.out, "Directory for summary.json and frames.jsonl");

  std::string scene, contrib_out;
  uint64_t contrib_seed = 0;
  double contrib_noise = 0.0;
  auto* contrib = app.add_subcommand("contrib", "Coalition rewards and CTCR for one scene");
  contrib->add_option("scene", scene, "Scene file (JSON)")->required();
  contrib->add_option("--out", contrib_out, "Write the report as JSON");
  contrib->add_option("--seed", contrib_seed, "Detection noise seed");
  contrib->add_option("--noise", contrib_noise, "Keypoint noise sigma in pixels");

  std::string frames_path, stats_out = "stats";
  auto* stats = app.add_subcommand("stats", "Histogram CSVs from a frame log");
  stats->add_option("frames", frames_path, "frames.jsonl from eval")->required();
  stats->add_option("--out", stats_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      ta.seed_set = seed_opt->count() > 0;
      return cmd_train(ta, out);
    }
    if (*eval) return cmd_eval(ea, out);
    if (*contrib) return cmd_contrib(scene, contrib_out, contrib_seed, contrib_noise, out);
    if (*stats) return cmd_stats(frames_path, stats_out, out);
  } catch (const CheckpointVersionMismatch& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigMismatch& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Usage& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace active_mocap::cli
