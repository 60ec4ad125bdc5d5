#pragma once

// Gym-style multi-camera environment: one step moves every camera, advances
// the crowd, runs synthetic detection and collaborative triangulation, and
// returns per-agent observations and rewards.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "active_mocap/baselines.hpp"
#include "active_mocap/perception.hpp"
#include "active_mocap/reward.hpp"
#include "active_mocap/safety.hpp"
#include "active_mocap/world.hpp"

namespace active_mocap::marl {

using geometry::Vec2;
using geometry::Vec3;

enum class RewardMode { kShared, kCtcr };

struct EnvConfig {
  world::WorldConfig world{};
  perception::PerceptionConfig perception{};
  perception::ReconstructionOptions reconstruction{};
  safety::SafetyConfig safety{};
  RewardMode reward_mode = RewardMode::kCtcr;
  double geman_mcclure_scale_mm = geometry::kGemanMcClureScaleMm;
  int max_humans_observed = 7;
  int max_cameras_observed = 3;
  // Cameras ignore all actions (passive baselines).
  bool static_cameras = false;
  // Spawn poses; empty means the fixed polygon formation.
  std::vector<geometry::CameraPose> spawn;
  // Low-pass coefficient of the reported target estimate; 1 keeps only the
  // fill-in of missing joints.
  double smoothing_alpha = 1.0;

  perception::ObservationLayout layout() const {
    return {max_cameras_observed, max_humans_observed, world.arena_size};
  }
};

// Next-step ground truth for the world-dynamics heads, in observation units
// (metres / arena size). Slots follow the observation the action was taken
// on; absent slots are flagged.
struct DynamicsLabels {
  Vec2 self = Vec2::Zero();
  Vec2 target = Vec2::Zero();
  std::vector<Vec2> cameras;           // per camera slot
  std::vector<bool> camera_present;
  std::vector<Vec2> humans;            // per human slot
  std::vector<bool> human_present;
};

struct StepResult {
  std::vector<std::vector<double>> obs;
  std::vector<double> rewards;     // per agent: CTCR or the team reward
  double team_reward = 0.0;
  std::vector<double> ctcr;        // empty in shared mode
  double mpjpe_mm = 0.0;
  double min_camera_human_distance = 0.0;
  std::vector<DynamicsLabels> labels;
  bool done = false;
};

class Environment {
 public:
  Environment(EnvConfig cfg, uint64_t seed);

  // Starts the next episode (seeded from the base seed and episode index)
  // and returns the initial observations.
  std::vector<std::vector<double>> reset();

  // Throws ActionCountMismatch.
  StepResult step(std::span<const world::AgentAction> actions);

  // Translation combos that keep `agent` out of the safety range.
  safety::TranslationMask safe_translations(int agent) const;

  const EnvConfig& config() const { return cfg_; }
  const world::WorldState& state() const { return state_; }
  int num_agents() const { return static_cast<int>(state_.cameras.size()); }
  int episode() const { return episode_; }
  const std::vector<std::vector<double>>& observations() const { return obs_; }
  const geometry::Skeleton3D& target_estimate() const { return estimate_; }
  Vec3 target_position_estimate() const;
  const std::vector<perception::AgentPacket>& packets() const { return packets_; }

 private:
  void perceive();
  double min_camera_human_distance() const;

  EnvConfig cfg_;
  uint64_t seed_;
  int episode_ = -1;
  world::WorldState state_;
  std::mt19937_64 perception_rng_, noise_rng_;
  std::vector<perception::AgentPacket> packets_;
  perception::ReconstructionResult recon_;
  std::vector<std::vector<double>> obs_;
  // Ids behind each observation slot, per agent.
  std::vector<std::vector<int>> camera_slots_, human_slots_;
  std::vector<world::CameraCommand> prev_commands_;
  baselines::TemporalSmoother fill_, smoother_;
  geometry::Skeleton3D estimate_;
};

}  // namespace active_mocap::marl
