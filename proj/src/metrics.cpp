#include "active_mocap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "active_mocap/errors.hpp"
#include "active_mocap/marl.hpp"
#include "active_mocap/seeding.hpp"
#include "json.hpp"

namespace active_mocap::metrics {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
constexpr double kDeg = 180.0 / std::numbers::pi;
}

double success_rate(std::span<const double> mpjpe_mm, double tau_mm) {
  if (mpjpe_mm.empty()) throw EmptySeries("success rate of an empty MPJPE series");
  const auto hits = std::count_if(mpjpe_mm.begin(), mpjpe_mm.end(), [&](double v) { return v <= tau_mm; });
  return static_cast<double>(hits) / static_cast<double>(mpjpe_mm.size());
}

std::vector<double> Histogram::uniform_edges(double lo, double hi, double width) {
  std::vector<double> e;
  const int bins = static_cast<int>(std::ceil((hi - lo) / width - 1e-9));
  for (int k = 0; k <= bins; ++k) e.push_back(lo + k * width);
  return e;
}

Histogram Histogram::build(std::span<const double> values, std::vector<double> edges) {
  if (edges.size() < 2) throw Error("histogram needs at least two edges");
  Histogram h;
  h.edges = std::move(edges);
  h.counts.assign(h.edges.size() - 1, 0);
  for (double v : values) {
    const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    long bin = static_cast<long>(it - h.edges.begin()) - 1;
    bin = std::clamp<long>(bin, 0, static_cast<long>(h.counts.size()) - 1);
    ++h.counts[bin];
  }
  return h;
}

int64_t Histogram::total() const {
  int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os << "lo,hi,count\n" << std::setprecision(10);
  for (size_t k = 0; k < counts.size(); ++k) os << edges[k] << ',' << edges[k + 1] << ',' << counts[k] << '\n';
  return os.str();
}

geometry::Vec3 optical_axis(const geometry::CameraPose& pose) { return geometry::forward_axis(pose); }

std::vector<double> min_camera_angles(std::span<const geometry::CameraPose> poses) {
  std::vector<double> out;
  for (size_t i = 0; i < poses.size(); ++i) {
    double best = 180.0;
    for (size_t j = 0; j < poses.size(); ++j) {
      if (i == j) continue;
      const double c = std::clamp(optical_axis(poses[i]).dot(optical_axis(poses[j])), -1.0, 1.0);
      best = std::min(best, std::acos(c) * kDeg);
    }
    out.push_back(best);
  }
  return out;
}

std::string FrameRecord::to_json() const {
  ordered_json j;
  j["episode"] = episode;
  j["step"] = step;
  j["mpjpe_mm"] = mpjpe_mm;
  j["team_reward"] = team_reward;
  if (!ctcr.empty()) j["ctcr"] = ctcr;
  j["min_camera_human_distance"] = min_camera_human_distance;
  j["target_id"] = target_id;
  auto& cams = j["cameras"] = json::array();
  for (const auto& c : cameras)
    cams.push_back({c.position.x(), c.position.y(), c.position.z(), c.pitch, c.yaw});
  auto& hs = j["humans"] = json::array();
  for (const auto& h : humans) hs.push_back({h.x(), h.y(), h.z()});
  return j.dump();
}

FrameRecord FrameRecord::from_json(const std::string& line) {
  const auto j = json::parse(line);
  FrameRecord f;
  f.episode = j.at("episode").get<int>();
  f.step = j.at("step").get<int>();
  f.mpjpe_mm = j.at("mpjpe_mm").get<double>();
  f.team_reward = j.at("team_reward").get<double>();
  if (j.contains("ctcr")) f.ctcr = j.at("ctcr").get<std::vector<double>>();
  f.min_camera_human_distance = j.at("min_camera_human_distance").get<double>();
  f.target_id = j.at("target_id").get<int>();
  for (const auto& c : j.at("cameras")) {
    geometry::CameraPose p;
    p.position = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    p.pitch = c.at(3).get<double>();
    p.yaw = c.at(4).get<double>();
    f.cameras.push_back(p);
  }
  for (const auto& h : j.at("humans"))
    f.humans.emplace_back(h.at(0).get<double>(), h.at(1).get<double>(), h.at(2).get<double>());
  return f;
}

std::vector<FrameRecord> read_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read frame log " + path);
  std::vector<FrameRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(FrameRecord::from_json(line));
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

BehaviorStats behavior_stats(std::span<const FrameRecord> frames, const BehaviorEdges& edges) {
  std::vector<double> dist, pitch, angle;
  const double height = world::WorldConfig{}.human_height;
  for (const auto& f : frames) {
    for (const auto& c : f.cameras) {
      pitch.push_back(c.pitch * kDeg);
      if (f.target_id >= 0 && f.target_id < static_cast<int>(f.humans.size())) {
        const auto& feet = f.humans[f.target_id];
        const double z = std::clamp(c.position.z(), feet.z(), feet.z() + height);
        dist.push_back((c.position - geometry::Vec3(feet.x(), feet.y(), z)).norm());
      }
    }
    if (f.cameras.size() >= 2) {
      const auto a = min_camera_angles(f.cameras);
      double sum = 0.0;
      for (double v : a) sum += v;
      angle.push_back(sum / static_cast<double>(a.size()));
    }
  }
  return {Histogram::build(dist, edges.distance), Histogram::build(pitch, edges.pitch),
          Histogram::build(angle, edges.min_angle)};
}

std::vector<world::AgentAction> FixedPolicy::act(const marl::Environment& env, std::mt19937_64&) {
  return std::vector<world::AgentAction>(env.num_agents());
}

std::vector<world::AgentAction> RandomPolicy::act(const marl::Environment& env, std::mt19937_64& rng) {
  std::vector<world::AgentAction> out(env.num_agents());
  const bool learned_rotation = env.config().world.pitch_yaw_mode == world::PitchYawMode::kLearned;
  for (int i = 0; i < env.num_agents(); ++i) {
    neural::ActionDistribution d;
    d.factors.assign(learned_rotation ? 5 : 3, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    if (env.config().safety.mode == safety::SafetyMode::kMask) {
      const auto safe = env.safe_translations(i);
      if (std::any_of(safe.begin(), safe.end(), [](bool b) { return b; })) d = safety::action_mask(d, safe);
    }
    out[i] = d.sample(rng);
  }
  return out;
}

std::vector<world::AgentAction> RuleBasedPolicy::act(const marl::Environment& env, std::mt19937_64&) {
  std::vector<geometry::CameraPose> poses;
  for (const auto& c : env.state().cameras) poses.push_back(c.pose);
  return baselines::rule_based_formation(env.target_position_estimate(), poses, env.config().world, cfg_);
}

LearnedPolicy::LearnedPolicy(std::shared_ptr<const neural::PolicyNetwork> net, bool greedy)
    : net_(std::move(net)), greedy_(greedy) {}

void LearnedPolicy::reset(const marl::Environment& env) {
  const auto& mc = net_->config();
  const auto layout = env.config().layout();
  const int factors = env.config().world.pitch_yaw_mode == world::PitchYawMode::kLearned ? 5 : 3;
  if (mc.num_agents != env.num_agents() || mc.obs_size() != layout.size() || mc.num_factors != factors)
    throw ConfigMismatch("network expects " + std::to_string(mc.num_agents) + " cameras, observation " +
                         std::to_string(mc.obs_size()) + ", " + std::to_string(mc.num_factors) +
                         " action factors; environment has " + std::to_string(env.num_agents()) + ", " +
                         std::to_string(layout.size()) + ", " + std::to_string(factors));
  hidden_ = neural::Matrix::Zero(env.num_agents(), mc.hidden);
}

std::vector<world::AgentAction> LearnedPolicy::act(const marl::Environment& env, std::mt19937_64& rng) {
  const int n = env.num_agents();
  const auto& o = env.observations();
  neural::Matrix obs(n, o[0].size());
  for (int i = 0; i < n; ++i)
    for (size_t c = 0; c < o[i].size(); ++c) obs(i, c) = o[i][c];
  const auto out = net_->forward(obs, hidden_, nullptr, false, nullptr);
  hidden_ = out.h;
  std::vector<world::AgentAction> actions(n);
  const auto& sc = env.config().safety;
  for (int i = 0; i < n; ++i) {
    auto d = marl::policy_distribution(out.probs, i, net_->config().num_factors);
    bool fallback = false;
    if (sc.mode == safety::SafetyMode::kMask) {
      const auto safe = env.safe_translations(i);
      if (std::any_of(safe.begin(), safe.end(), [](bool b) { return b; }))
        d = safety::action_mask(d, safe);
      else
        fallback = true;
    }
    actions[i] = greedy_ ? d.mode() : d.sample(rng);
    if (fallback) {
      const auto obstacles = safety::obstacles_for(env.state(), i);
      actions[i] = safety::oca_filter(actions[i], env.state().cameras[i].pose, obstacles, sc.range,
                                      sc.reverse_magnitude);
    }
  }
  return actions;
}

std::string EvalSummary::to_json() const {
  ordered_json j;
  j["policy"] = policy;
  j["episodes"] = episodes;
  j["frames"] = frames;
  j["tau_mm"] = tau_mm;
  j["mean_mpjpe_mm"] = mean_mpjpe_mm;
  j["success_rate"] = success_rate;
  j["mean_team_reward"] = mean_team_reward;
  j["min_camera_human_distance"] = min_camera_human_distance;
  j["mean_min_camera_human_distance"] = mean_min_camera_human_distance;
  j["episode_mpjpe_mm"] = episode_mpjpe_mm;
  return j.dump(2) + "\n";
}

EvalSummary evaluate(const Policy& policy, const marl::EnvConfig& env_cfg, const EvalOptions& opts,
                     std::vector<FrameRecord>* frames_out) {
  marl::EnvConfig cfg = env_cfg;
  cfg.static_cameras = cfg.static_cameras || policy.static_cameras();
  std::vector<std::vector<FrameRecord>> episodes(opts.episodes);
  marl::parallel_for(opts.episodes, marl::worker_threads(opts.threads), [&](int ep) {
    auto p = policy.clone();
    marl::Environment env(cfg, mix_seed(opts.seed, static_cast<uint64_t>(ep)));
    std::mt19937_64 rng(mix_seed(opts.seed ^ 0xe7a1ULL, static_cast<uint64_t>(ep)));
    p->reset(env);
    auto& log = episodes[ep];
    bool done = false;
    while (!done) {
      const auto actions = p->act(env, rng);
      const auto r = env.step(actions);
      FrameRecord f;
      f.episode = ep;
      f.step = env.state().step;
      for (const auto& c : env.state().cameras) f.cameras.push_back(c.pose);
      for (const auto& h : env.state().humans) f.humans.push_back(h.position);
      f.target_id = env.state().target().id;
      f.mpjpe_mm = r.mpjpe_mm;
      f.team_reward = r.team_reward;
      f.ctcr = r.ctcr;
      f.min_camera_human_distance = r.min_camera_human_distance;
      log.push_back(std::move(f));
      done = r.done;
    }
  });

  EvalSummary s;
  s.policy = policy.name();
  s.episodes = opts.episodes;
  s.tau_mm = opts.tau_mm;
  std::vector<double> mpjpe;
  double reward = 0.0, dist = 0.0;
  s.min_camera_human_distance = std::numeric_limits<double>::infinity();
  std::ofstream frames;
  if (!opts.frames_path.empty()) {
    frames.open(opts.frames_path, std::ios::trunc);
    if (!frames) throw Error("cannot write " + opts.frames_path);
  }
  for (const auto& log : episodes) {
    double ep_sum = 0.0;
    for (const auto& f : log) {
      mpjpe.push_back(f.mpjpe_mm);
      ep_sum += f.mpjpe_mm;
      reward += f.team_reward;
      dist += f.min_camera_human_distance;
      s.min_camera_human_distance = std::min(s.min_camera_human_distance, f.min_camera_human_distance);
      if (frames) frames << f.to_json() << '\n';
    }
    s.episode_mpjpe_mm.push_back(log.empty() ? 0.0 : ep_sum / static_cast<double>(log.size()));
  }
  s.frames = static_cast<int64_t>(mpjpe.size());
  if (!mpjpe.empty()) {
    double sum = 0.0;
    for (double v : mpjpe) sum += v;
    s.mean_mpjpe_mm = sum / static_cast<double>(mpjpe.size());
    s.success_rate = success_rate(mpjpe, opts.tau_mm);
    s.mean_team_reward = reward / static_cast<double>(mpjpe.size());
    s.mean_min_camera_human_distance = dist / static_cast<double>(mpjpe.size());
  }
  if (!opts.summary_path.empty()) {
    std::ofstream out(opts.summary_path, std::ios::trunc);
    if (!out) throw Error("cannot write " + opts.summary_path);
    out << s.to_json();
  }
  if (frames_out)
    for (auto& log : episodes)
      for (auto& f : log) frames_out->push_back(std::move(f));
  return s;
}

}  // namespace active_mocap::metrics
