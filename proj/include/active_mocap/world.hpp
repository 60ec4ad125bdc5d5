#pragma once

// Ground-truth crowd world: humans walking between random waypoints inside a
// square arena and camera agents moving under discretized egocentric commands.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "active_mocap/geometry.hpp"

namespace active_mocap::world {

using geometry::CameraIntrinsics;
using geometry::CameraPose;
using geometry::Skeleton3D;
using geometry::Vec2;
using geometry::Vec3;

enum class PitchYawMode { kRuleBased, kLearned };

struct WorldConfig {
  double arena_size = 10.0;      // square side, metres, centred on the origin
  double flight_margin = 0.5;    // cameras may leave the arena by this much
  double z_min = 0.5;
  double z_max = 3.5;
  int min_humans = 1;
  int max_humans = 6;
  int num_cameras = 3;
  double translation_step = 0.25;  // delta, metres per step
  double rotation_step = 5.0 * 3.14159265358979323846 / 180.0;  // eta, rad/step
  double speed_min = 0.5;  // m/s
  double speed_max = 1.5;
  double dt = 0.1;  // seconds per step for human motion
  double capsule_radius = 0.30;
  double human_height = 1.70;
  double waypoint_tolerance = 0.3;
  // Waypoints are drawn from a centred square of this half-size; a negative
  // value means the full arena minus one capsule radius.
  double walk_half_extent = -1.0;
  double personal_space = 1.0;    // repulsion steering starts inside this gap
  double repulsion_gain = 1.5;
  double steering_blend = 0.5;    // fraction of new heading applied per step
  int max_episode_length = 500;
  PitchYawMode pitch_yaw_mode = PitchYawMode::kRuleBased;
  CameraIntrinsics intrinsics{};
  uint64_t seed = 0;

  double half_size() const { return arena_size / 2.0; }
  double walk_extent() const {
    return walk_half_extent >= 0.0 ? walk_half_extent
                                   : half_size() - capsule_radius;
  }
};

struct HumanState {
  int id = 0;
  Vec3 position = Vec3::Zero();  // feet on the ground plane
  double heading = 0.0;
  double speed = 1.0;
  double gait_phase = 0.0;
  bool is_target = false;
  double capsule_radius = 0.30;
  double height = 1.70;
  Vec2 waypoint = Vec2::Zero();
};

struct CameraAgentState {
  int id = 0;
  CameraPose pose;
  CameraIntrinsics intrinsics;
};

// Translation levels (x forward, y left, z up) and rotation levels
// (pitch, yaw), each in {-1, 0, +1}.
struct AgentAction {
  std::array<int, 3> translation{};
  std::array<int, 2> rotation{};

  bool operator==(const AgentAction&) const = default;
};

// Continuous per-step command in the camera's egocentric ground frame.
// Order: (forward m, left m, up m, pitch rad, yaw rad).
using CameraCommand = std::array<double, 5>;

struct WorldState {
  std::vector<HumanState> humans;
  std::vector<CameraAgentState> cameras;
  int step = 0;
  std::mt19937_64 rng;

  const HumanState& target() const;
  bool done(const WorldConfig& cfg) const { return step >= cfg.max_episode_length; }
};

// Builds the initial world: human count uniform in [min_humans, max_humans],
// human 0 is the target, cameras at `camera_poses`.
WorldState reset_world(const WorldConfig& cfg, std::span<const CameraPose> camera_poses,
                       uint64_t seed);

CameraCommand to_command(const AgentAction& action, const WorldConfig& cfg);

// World-frame displacement of an egocentric (forward, left, up) translation.
Vec3 egocentric_to_world(double yaw, const Vec3& translation);

// Camera position after applying `translation` (egocentric), clamped to the
// flight volume.
Vec3 moved_position(const CameraPose& pose, const Vec3& translation,
                    const WorldConfig& cfg);

// Rate-limited look-at: (pitch, yaw) increments turning `pose` toward `aim`,
// each clamped to +-max_rate.
std::array<double, 2> look_at_rates(const CameraPose& pose, const Vec3& aim,
                                    double max_rate);

std::vector<HumanState> step_humans(const WorldState& state, const WorldConfig& cfg,
                                    std::mt19937_64& rng);

// Moves cameras by the given commands (clamped), advances the crowd and the
// step index. Throws ActionCountMismatch.
WorldState step_world(const WorldState& state, std::span<const CameraCommand> commands,
                      const WorldConfig& cfg);

WorldState step_world(const WorldState& state, std::span<const AgentAction> actions,
                      const WorldConfig& cfg);

Skeleton3D skeleton_of(const HumanState& human);

// Closest point on the human's vertical body axis to `p`.
Vec3 closest_body_point(const HumanState& human, const Vec3& p);

// Distance between segments [p0,p1] and [q0,q1].
double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);

// True iff `joint` is outside the camera frustum or the segment from the
// camera centre to it passes through another human's capsule.
bool occluded(const CameraAgentState& camera, const Vec3& joint,
              std::span<const HumanState> humans, int exclude_id);

}  // namespace active_mocap::world
