#pragma once

// Passive and scripted comparison policies: static polygon formations, a
// rule-based formation tracker and temporal smoothing of reconstructions.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "active_mocap/world.hpp"

namespace active_mocap::baselines {

using geometry::CameraPose;
using geometry::Skeleton3D;
using geometry::Vec3;

inline constexpr double kFixedAltitude = 3.0;
inline constexpr double kFixedPitch = -35.0 * 3.14159265358979323846 / 180.0;

// Static cameras on regular-polygon vertices of the circle inscribed in the
// arena, at 3 m altitude and -35 deg pitch, facing the centre. Two cameras
// sit 90 deg apart. Throws UnsupportedCount outside 2..6.
std::vector<CameraPose> fixed_formation(int n, const world::WorldConfig& cfg = {});

// Angle of vertex k of an n-camera formation around its centre.
double formation_angle(int k, int n);

struct RuleBasedConfig {
  double radius = 2.5;    // metres from the target
  double altitude = 2.5;  // metres
};

// Desired world position of camera k.
Vec3 formation_vertex(const Vec3& target, int k, int n, const RuleBasedConfig& rb);

// Translation levels (x, y, z) whose post-step position is closest to
// `goal`; ties go to the combination with fewer non-zero levels.
std::array<int, 3> best_translation(const CameraPose& pose, const Vec3& goal,
                                    const world::WorldConfig& cfg);

// One action per camera steering toward its formation vertex around the
// estimated target. Rotation levels aim at the target (used only when the
// world lets the policy control pitch and yaw).
std::vector<world::AgentAction> rule_based_formation(const Vec3& target_estimate,
                                                     std::span<const CameraPose> cameras,
                                                     const world::WorldConfig& cfg,
                                                     const RuleBasedConfig& rb = {});

// Low-pass filter with fill-in: present joints become
// alpha * current + (1 - alpha) * previous; missing joints repeat the
// previous output.
class TemporalSmoother {
 public:
  explicit TemporalSmoother(double alpha = 1.0) : alpha_(alpha) {}

  void reset(const std::optional<Skeleton3D>& initial = std::nullopt) { prev_ = initial; }
  Skeleton3D update(const Skeleton3D& estimate, const std::array<bool, geometry::kNumJoints>& valid);
  const std::optional<Skeleton3D>& previous() const { return prev_; }
  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::optional<Skeleton3D> prev_;
};

}  // namespace active_mocap::baselines
