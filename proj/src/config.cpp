#include "active_mocap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "active_mocap/errors.hpp"
#include "json.hpp"

namespace active_mocap::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads keys from one object, remembering which were consumed so leftovers
// can be reported.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  template <typename E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (v.is_string())
      for (const auto& [name, value] : names)
        if (v.get<std::string>() == name) {
          out = value;
          return;
        }
    std::string allowed;
    for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : "|") + name;
    throw ConfigError(path_ + "." + key + " must be one of " + allowed);
  }

  bool has(const char* key) const { return j_.contains(key); }

  Block child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Block(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::initializer_list<std::pair<const char*, world::PitchYawMode>> kPitchYaw{
    {"rule", world::PitchYawMode::kRuleBased}, {"learned", world::PitchYawMode::kLearned}};
const std::initializer_list<std::pair<const char*, perception::TriangulationMethod>> kTriangulation{
    {"dlt", perception::TriangulationMethod::kDlt}, {"ransac", perception::TriangulationMethod::kRansac}};
const std::initializer_list<std::pair<const char*, marl::RewardMode>> kRewardMode{
    {"shared", marl::RewardMode::kShared}, {"ctcr", marl::RewardMode::kCtcr}};
const std::initializer_list<std::pair<const char*, safety::SafetyMode>> kSafetyMode{
    {"none", safety::SafetyMode::kNone}, {"oca", safety::SafetyMode::kOca}, {"mask", safety::SafetyMode::kMask}};

template <typename E>
std::string name_of(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, value] : names)
    if (value == v) return name;
  return "?";
}

void read_world(Block b, world::WorldConfig& w) {
  b.get("arena_size", w.arena_size);
  b.get("flight_margin", w.flight_margin);
  b.get("z_min", w.z_min);
  b.get("z_max", w.z_max);
  b.get("min_humans", w.min_humans);
  b.get("max_humans", w.max_humans);
  b.get("num_cameras", w.num_cameras);
  b.get("translation_step", w.translation_step);
  b.get("rotation_step", w.rotation_step);
  b.get("speed_min", w.speed_min);
  b.get("speed_max", w.speed_max);
  b.get("dt", w.dt);
  b.get("capsule_radius", w.capsule_radius);
  b.get("human_height", w.human_height);
  b.get("waypoint_tolerance", w.waypoint_tolerance);
  b.get("walk_half_extent", w.walk_half_extent);
  b.get("personal_space", w.personal_space);
  b.get("repulsion_gain", w.repulsion_gain);
  b.get("steering_blend", w.steering_blend);
  b.get("max_episode_length", w.max_episode_length);
  b.get_enum("pitch_yaw", w.pitch_yaw_mode, kPitchYaw);
  auto in = b.child("intrinsics");
  in.get("focal", w.intrinsics.focal);
  in.get("cx", w.intrinsics.cx);
  in.get("cy", w.intrinsics.cy);
  in.get("width", w.intrinsics.width);
  in.get("height", w.intrinsics.height);
  in.finish();
  b.finish();
}

void read_perception(Block b, marl::EnvConfig& e) {
  b.get("noise_sigma", e.perception.noise_sigma);
  b.get("min_visible_joints", e.perception.min_visible_joints);
  b.get_enum("triangulation", e.reconstruction.method, kTriangulation);
  b.get("ransac_threshold_px", e.reconstruction.ransac.inlier_threshold);
  b.get("ransac_iterations", e.reconstruction.ransac.iterations);
  b.get("ransac_seed", e.reconstruction.ransac_seed);
  b.get("geman_mcclure_mm", e.geman_mcclure_scale_mm);
  b.get("max_humans_observed", e.max_humans_observed);
  b.get("max_cameras_observed", e.max_cameras_observed);
  b.get("smoothing_alpha", e.smoothing_alpha);
  b.finish();
}

void read_model(Block b, neural::ModelConfig& m) {
  b.get("hidden", m.hidden);
  b.get("encoder_layers", m.encoder_layers);
  b.get("mdn_layers", m.mdn_layers);
  b.get("mdn_components", m.mdn_components);
  b.get("actor_layers", m.actor_layers);
  b.get("critic_layers", m.critic_layers);
  b.get("projector_size", m.projector_size);
  b.get("actor_output_gain", m.actor_output_gain);
  b.finish();
}

void read_train(Block b, marl::RunConfig& r) {
  auto& t = r.train;
  b.get_enum("reward_mode", r.env.reward_mode, kRewardMode);
  b.get("gamma", t.gamma);
  b.get("gae_lambda", t.gae_lambda);
  b.get("clip", t.clip);
  b.get("ppo_coef", t.ppo_coef);
  b.get("kl_coef", t.kl_coef);
  b.get("kl_target", t.kl_target);
  b.get("entropy_coef", t.entropy_coef);
  b.get("value_coef", t.value_coef);
  b.get("value_clip", t.value_clip);
  b.get("grad_clip", t.grad_clip);
  b.get("fragment", t.fragment);
  b.get("rollouts", t.rollouts);
  b.get("batch", t.batch);
  b.get("minibatch", t.minibatch);
  b.get("sgd_iters", t.sgd_iters);
  b.get("lr_schedule", t.lr.points);
  b.get("use_wdl", t.use_wdl);
  b.get("wdl_coef", t.wdl_coef);
  auto w = b.child("wdl");
  w.get("self", t.wdl.self);
  w.get("peer", t.wdl.peer);
  w.get("reward", t.wdl.reward);
  w.get("target", t.wdl.target);
  w.get("pedestrian", t.wdl.pedestrian);
  w.finish();
  b.get("critic_team_reward", t.critic_team_reward);
  b.get("standardize_advantages", t.standardize_advantages);
  b.get("total_steps", t.total_steps);
  b.get("checkpoint_every", t.checkpoint_every);
  b.get("threads", t.threads);
  b.finish();
}

void read_safety(Block b, safety::SafetyConfig& s) {
  b.get_enum("mode", s.mode, kSafetyMode);
  b.get("range", s.range);
  b.get("reverse_magnitude", s.reverse_magnitude);
  b.get("smooth", s.smooth);
  b.get("smooth_eta", s.smooth_eta);
  b.get("noise", s.noise);
  b.get("noise_lo", s.noise_lo);
  b.get("noise_hi", s.noise_hi);
  b.finish();
}

}  // namespace

marl::RunConfig preset(const std::string& name) {
  marl::RunConfig r;
  if (name == "desk") {
    r.env.world.min_humans = 3;
    r.env.world.max_humans = 3;
    r.train = marl::TrainConfig::desk();
  } else if (name == "paper") {
    r.train = marl::TrainConfig::paper();
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }
  r.resolve();
  return r;
}

marl::RunConfig parse(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  try {
    Block root(j, "config");
    std::string base = "desk";
    root.get("preset", base);
    auto r = preset(base);
    root.get("seed", r.seed);
    read_world(root.child("world"), r.env.world);
    read_perception(root.child("perception"), r.env);
    read_model(root.child("model"), r.model);
    read_train(root.child("train"), r);
    read_safety(root.child("safety"), r.env.safety);
    root.finish();
    r.resolve();
    return r;
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

marl::RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string to_json(const marl::RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const auto& w = c.env.world;
  auto& jw = j["world"];
  jw["arena_size"] = w.arena_size;
  jw["flight_margin"] = w.flight_margin;
  jw["z_min"] = w.z_min;
  jw["z_max"] = w.z_max;
  jw["min_humans"] = w.min_humans;
  jw["max_humans"] = w.max_humans;
  jw["num_cameras"] = w.num_cameras;
  jw["translation_step"] = w.translation_step;
  jw["rotation_step"] = w.rotation_step;
  jw["speed_min"] = w.speed_min;
  jw["speed_max"] = w.speed_max;
  jw["dt"] = w.dt;
  jw["capsule_radius"] = w.capsule_radius;
  jw["human_height"] = w.human_height;
  jw["waypoint_tolerance"] = w.waypoint_tolerance;
  jw["walk_half_extent"] = w.walk_half_extent;
  jw["personal_space"] = w.personal_space;
  jw["repulsion_gain"] = w.repulsion_gain;
  jw["steering_blend"] = w.steering_blend;
  jw["max_episode_length"] = w.max_episode_length;
  jw["pitch_yaw"] = name_of(w.pitch_yaw_mode, kPitchYaw);
  jw["intrinsics"] = {{"focal", w.intrinsics.focal}, {"cx", w.intrinsics.cx}, {"cy", w.intrinsics.cy},
                      {"width", w.intrinsics.width}, {"height", w.intrinsics.height}};
  const auto& e = c.env;
  auto& jp = j["perception"];
  jp["noise_sigma"] = e.perception.noise_sigma;
  jp["min_visible_joints"] = e.perception.min_visible_joints;
  jp["triangulation"] = name_of(e.reconstruction.method, kTriangulation);
  jp["ransac_threshold_px"] = e.reconstruction.ransac.inlier_threshold;
  jp["ransac_iterations"] = e.reconstruction.ransac.iterations;
  jp["ransac_seed"] = e.reconstruction.ransac_seed;
  jp["geman_mcclure_mm"] = e.geman_mcclure_scale_mm;
  jp["max_humans_observed"] = e.max_humans_observed;
  jp["max_cameras_observed"] = e.max_cameras_observed;
  jp["smoothing_alpha"] = e.smoothing_alpha;
  const auto& m = c.model;
  auto& jm = j["model"];
  jm["hidden"] = m.hidden;
  jm["encoder_layers"] = m.encoder_layers;
  jm["mdn_layers"] = m.mdn_layers;
  jm["mdn_components"] = m.mdn_components;
  jm["actor_layers"] = m.actor_layers;
  jm["critic_layers"] = m.critic_layers;
  jm["projector_size"] = m.projector_size;
  jm["actor_output_gain"] = m.actor_output_gain;
  const auto& t = c.train;
  auto& jt = j["train"];
  jt["reward_mode"] = name_of(e.reward_mode, kRewardMode);
  jt["gamma"] = t.gamma;
  jt["gae_lambda"] = t.gae_lambda;
  jt["clip"] = t.clip;
  jt["ppo_coef"] = t.ppo_coef;
  jt["kl_coef"] = t.kl_coef;
  jt["kl_target"] = t.kl_target;
  jt["entropy_coef"] = t.entropy_coef;
  jt["value_coef"] = t.value_coef;
  jt["value_clip"] = t.value_clip;
  jt["grad_clip"] = t.grad_clip;
  jt["fragment"] = t.fragment;
  jt["rollouts"] = t.rollouts;
  jt["batch"] = t.batch;
  jt["minibatch"] = t.minibatch;
  jt["sgd_iters"] = t.sgd_iters;
  jt["lr_schedule"] = t.lr.points;
  jt["use_wdl"] = t.use_wdl;
  jt["wdl_coef"] = t.wdl_coef;
  jt["wdl"] = {{"self", t.wdl.self}, {"peer", t.wdl.peer}, {"reward", t.wdl.reward},
               {"target", t.wdl.target}, {"pedestrian", t.wdl.pedestrian}};
  jt["critic_team_reward"] = t.critic_team_reward;
  jt["standardize_advantages"] = t.standardize_advantages;
  jt["total_steps"] = t.total_steps;
  jt["checkpoint_every"] = t.checkpoint_every;
  jt["threads"] = t.threads;
  const auto& s = e.safety;
  auto& js = j["safety"];
  js["mode"] = name_of(s.mode, kSafetyMode);
  js["range"] = s.range;
  js["reverse_magnitude"] = s.reverse_magnitude;
  js["smooth"] = s.smooth;
  js["smooth_eta"] = s.smooth_eta;
  js["noise"] = s.noise;
  js["noise_lo"] = s.noise_lo;
  js["noise_hi"] = s.noise_hi;
  return j.dump(2) + "\n";
}

}  // namespace active_mocap::config
