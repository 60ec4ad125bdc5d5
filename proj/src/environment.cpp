#include "active_mocap/environment.hpp"

#include <algorithm>
#include <limits>

#include "active_mocap/errors.hpp"
#include "active_mocap/seeding.hpp"

namespace active_mocap::marl {

Environment::Environment(EnvConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed), fill_(1.0), smoother_(cfg_.smoothing_alpha) {
  if (cfg_.spawn.empty()) cfg_.spawn = baselines::fixed_formation(cfg_.world.num_cameras, cfg_.world);
  if (static_cast<int>(cfg_.spawn.size()) != cfg_.world.num_cameras)
    throw ConfigError("spawn lists " + std::to_string(cfg_.spawn.size()) + " poses for " +
                      std::to_string(cfg_.world.num_cameras) + " cameras");
  reset();
}

std::vector<std::vector<double>> Environment::reset() {
  ++episode_;
  const uint64_t s = mix_seed(seed_, static_cast<uint64_t>(episode_));
  state_ = world::reset_world(cfg_.world, cfg_.spawn, mix_seed(s, 1));
  perception_rng_.seed(mix_seed(s, 2));
  noise_rng_.seed(mix_seed(s, 3));
  prev_commands_.assign(num_agents(), world::CameraCommand{});

  // Before anything is seen the target is assumed to stand at the centre.
  const auto centre = world::skeleton_of(world::HumanState{});
  fill_.reset(centre);
  smoother_.reset(centre);
  perceive();
  const auto* est = recon_.find(state_.target().id);
  if (est && est->reconstructed) {
    fill_.update(est->skeleton, est->joint_valid);
    estimate_ = smoother_.update(est->skeleton, est->joint_valid);
  } else {
    estimate_ = centre;
  }
  return obs_;
}

void Environment::perceive() {
  packets_.clear();
  for (const auto& cam : state_.cameras)
    packets_.push_back(perception::make_packet(
        cam, perception::detect(cam, state_, cfg_.perception, perception_rng_)));
  recon_ = perception::reconstruct(packets_, perception::full_mask(num_agents()), cfg_.reconstruction);

  const auto layout = cfg_.layout();
  const int target_id = state_.target().id;
  obs_.clear();
  camera_slots_.assign(num_agents(), {});
  human_slots_.assign(num_agents(), {});
  for (int i = 0; i < num_agents(); ++i) {
    obs_.push_back(perception::assemble_observation(i, packets_, recon_, target_id, layout));
    auto& cams = camera_slots_[i];
    cams.push_back(i);
    for (int j = 0; j < num_agents(); ++j)
      if (j != i) cams.push_back(j);
    if (static_cast<int>(cams.size()) > layout.max_cameras) cams.resize(layout.max_cameras);
    human_slots_[i] = perception::human_slot_order(i, packets_, recon_, target_id, layout.max_humans);
  }
}

Vec3 Environment::target_position_estimate() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& j : estimate_.joints) sum += j;
  return sum / geometry::kNumJoints;
}

safety::TranslationMask Environment::safe_translations(int agent) const {
  const auto obstacles = safety::obstacles_for(state_, agent);
  return safety::safe_translations(state_.cameras.at(agent).pose, obstacles, cfg_.safety.range,
                                   cfg_.world);
}

double Environment::min_camera_human_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : state_.cameras)
    for (const auto& h : state_.humans)
      best = std::min(best, (c.pose.position - world::closest_body_point(h, c.pose.position)).norm());
  return best;
}

StepResult Environment::step(std::span<const world::AgentAction> actions) {
  const int n = num_agents();
  if (static_cast<int>(actions.size()) != n)
    throw ActionCountMismatch("expected " + std::to_string(n) + " actions, got " +
                              std::to_string(actions.size()));
  const auto& sc = cfg_.safety;
  const Vec3 aim = target_position_estimate();
  std::vector<world::CameraCommand> commands(n, world::CameraCommand{});
  if (!cfg_.static_cameras) {
    for (int i = 0; i < n; ++i) {
      const auto& pose = state_.cameras[i].pose;
      world::AgentAction a = actions[i];
      if (sc.mode == safety::SafetyMode::kOca) {
        const auto obstacles = safety::obstacles_for(state_, i);
        a = safety::oca_filter(a, pose, obstacles, sc.range, sc.reverse_magnitude);
      }
      auto cmd = world::to_command(a, cfg_.world);
      if (cfg_.world.pitch_yaw_mode == world::PitchYawMode::kRuleBased) {
        const auto rates = world::look_at_rates(pose, aim, cfg_.world.rotation_step);
        cmd[3] = rates[0];
        cmd[4] = rates[1];
      }
      if (sc.smooth) {
        cmd = safety::ema_smooth(prev_commands_[i], cmd, sc.smooth_eta);
        prev_commands_[i] = cmd;
      }
      if (sc.noise) cmd = safety::action_noise(cmd, noise_rng_, sc.noise_lo, sc.noise_hi);
      commands[i] = cmd;
    }
  }

  const auto camera_slots = camera_slots_;
  const auto human_slots = human_slots_;
  state_ = world::step_world(state_, commands, cfg_.world);
  perceive();

  StepResult out;
  const auto& target = state_.target();
  const auto truth = world::skeleton_of(target);
  const auto fallback = *fill_.previous();
  reward::TeamRewardOptions ropts{cfg_.geman_mcclure_scale_mm, cfg_.reconstruction};
  if (cfg_.reward_mode == RewardMode::kCtcr) {
    const auto table = reward::coalition_table(packets_, target.id, truth, &fallback, ropts);
    out.team_reward = table.full();
    out.ctcr = reward::ctcr(table);
    out.rewards = out.ctcr;
  } else {
    out.team_reward = reward::team_reward(perception::full_mask(n), packets_, target.id, truth,
                                          &fallback, ropts);
    out.rewards.assign(n, out.team_reward);
  }

  const auto* est = recon_.find(target.id);
  std::array<bool, geometry::kNumJoints> none{};
  const auto& valid = est ? est->joint_valid : none;
  const auto& skel = est ? est->skeleton : fallback;
  fill_.update(skel, valid);
  estimate_ = smoother_.update(skel, valid);
  out.mpjpe_mm = geometry::mpjpe(estimate_, truth);
  out.min_camera_human_distance = min_camera_human_distance();

  const double scale = 1.0 / cfg_.world.arena_size;
  auto planar = [&](const Vec3& p) { return Vec2(p.x() * scale, p.y() * scale); };
  const auto layout = cfg_.layout();
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& l = out.labels[i];
    l.self = planar(state_.cameras[i].pose.position);
    l.target = planar(target.position);
    l.cameras.assign(layout.max_cameras, Vec2::Zero());
    l.camera_present.assign(layout.max_cameras, false);
    for (size_t s = 0; s < camera_slots[i].size(); ++s) {
      l.cameras[s] = planar(state_.cameras[camera_slots[i][s]].pose.position);
      l.camera_present[s] = true;
    }
    l.humans.assign(layout.max_humans, Vec2::Zero());
    l.human_present.assign(layout.max_humans, false);
    for (size_t s = 0; s < human_slots[i].size(); ++s) {
      for (const auto& h : state_.humans)
        if (h.id == human_slots[i][s]) l.humans[s] = planar(h.position);
      l.human_present[s] = true;
    }
  }
  out.obs = obs_;
  out.done = state_.done(cfg_.world);
  return out;
}

}  // namespace active_mocap::marl
