#pragma once

// Collision avoidance and control-signal conditioning for camera agents.

#include <array>
#include <random>
#include <span>
#include <vector>

#include "active_mocap/action_distribution.hpp"
#include "active_mocap/world.hpp"

namespace active_mocap::safety {

using geometry::Vec3;

// Segment obstacle (a point when a == b): human body axes and peer cameras.
struct Obstacle {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();

  Vec3 closest_point(const Vec3& p) const;
  double distance(const Vec3& p) const { return (p - closest_point(p)).norm(); }
};

enum class SafetyMode { kNone, kOca, kMask };

struct SafetyConfig {
  SafetyMode mode = SafetyMode::kNone;
  double range = 0.8;            // metres
  int reverse_magnitude = 1;     // level forced by OCA
  bool smooth = false;
  double smooth_eta = 0.5;
  bool noise = false;
  double noise_lo = 0.80;
  double noise_hi = 1.20;
};

// Human body axes, followed by peer cameras other than `self_id`.
std::vector<Obstacle> obstacles_for(const world::WorldState& state, int self_id,
                                    bool include_peers = true);

// Overrides translation levels to point away from the nearest obstacle within
// `range`; passes the action through when nothing is that close.
world::AgentAction oca_filter(const world::AgentAction& action, const geometry::CameraPose& pose,
                              std::span<const Obstacle> obstacles, double range,
                              int reverse_magnitude = 1);

// One flag per joint translation combination, index = 9*(x+1) + 3*(y+1) + (z+1).
using TranslationMask = std::array<bool, 27>;

inline constexpr int combo_index(int x, int y, int z) { return 9 * (x + 1) + 3 * (y + 1) + (z + 1); }
inline constexpr std::array<int, 3> combo_levels(int index) {
  return {index / 9 - 1, (index / 3) % 3 - 1, index % 3 - 1};
}

// Combos whose post-step position keeps every obstacle at least `range` away.
TranslationMask safe_translations(const geometry::CameraPose& pose,
                                  std::span<const Obstacle> obstacles, double range,
                                  const world::WorldConfig& cfg);

// Zeroes the mass of unsafe translation combinations and renormalizes over
// the safe set. The masked joint is kept on the result; factor entries become
// its marginals. Throws NoSafeAction when every combination is unsafe.
neural::ActionDistribution action_mask(const neural::ActionDistribution& dist,
                                       const TranslationMask& safe);

neural::ActionDistribution action_mask(const neural::ActionDistribution& dist,
                                       const geometry::CameraPose& pose,
                                       std::span<const Obstacle> obstacles, double range,
                                       const world::WorldConfig& cfg);

// EMA on the continuous command: prev + eta * (current - prev).
world::CameraCommand ema_smooth(const world::CameraCommand& prev,
                                const world::CameraCommand& current, double eta);

// Multiplies every component by an independent U[lo, hi) factor.
world::CameraCommand action_noise(const world::CameraCommand& command, std::mt19937_64& rng,
                                  double lo = 0.80, double hi = 1.20);

}  // namespace active_mocap::safety
