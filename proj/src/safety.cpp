#include "active_mocap/safety.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "active_mocap/errors.hpp"

namespace active_mocap::safety {

Vec3 Obstacle::closest_point(const Vec3& p) const {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  if (len2 < 1e-18) return a;
  const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
  return a + t * d;
}

std::vector<Obstacle> obstacles_for(const world::WorldState& state, int self_id,
                                    bool include_peers) {
  std::vector<Obstacle> out;
  for (const auto& h : state.humans)
    out.push_back({h.position, h.position + Vec3(0, 0, h.height)});
  if (include_peers)
    for (const auto& c : state.cameras)
      if (c.id != self_id) out.push_back({c.pose.position, c.pose.position});
  return out;
}

world::AgentAction oca_filter(const world::AgentAction& action, const geometry::CameraPose& pose,
                              std::span<const Obstacle> obstacles, double range,
                              int reverse_magnitude) {
  const Obstacle* nearest = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : obstacles) {
    const double d = o.distance(pose.position);
    if (d < best) {
      best = d;
      nearest = &o;
    }
  }
  if (!nearest || best >= range) return action;
  // Repulsion direction in the camera's egocentric ground frame.
  const Vec3 away_world = pose.position - nearest->closest_point(pose.position);
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const Vec3 away(c * away_world.x() + s * away_world.y(),
                  -s * away_world.x() + c * away_world.y(), away_world.z());
  constexpr double kDeadband = 1e-6;
  world::AgentAction out = action;
  for (int k = 0; k < 3; ++k) {
    if (away(k) > kDeadband) out.translation[k] = reverse_magnitude;
    else if (away(k) < -kDeadband) out.translation[k] = -reverse_magnitude;
  }
  return out;
}

TranslationMask safe_translations(const geometry::CameraPose& pose,
                                  std::span<const Obstacle> obstacles, double range,
                                  const world::WorldConfig& cfg) {
  TranslationMask safe{};
  for (int c = 0; c < 27; ++c) {
    const auto lv = combo_levels(c);
    const Vec3 next = world::moved_position(
        pose, Vec3(lv[0], lv[1], lv[2]) * cfg.translation_step, cfg);
    bool ok = true;
    for (const auto& o : obstacles)
      if (o.distance(next) < range) {
        ok = false;
        break;
      }
    safe[c] = ok;
  }
  return safe;
}

neural::ActionDistribution action_mask(const neural::ActionDistribution& dist,
                                       const TranslationMask& safe) {
  if (std::none_of(safe.begin(), safe.end(), [](bool b) { return b; }))
    throw NoSafeAction("every translation combination violates the safety range");
  auto joint = dist.translation_probs();
  double total = 0.0;
  for (int c = 0; c < 27; ++c) {
    if (!safe[c]) joint[c] = 0.0;
    total += joint[c];
  }
  if (!(total > 0.0)) {
    int n_safe = 0;
    for (bool b : safe) n_safe += b;
    for (int c = 0; c < 27; ++c) joint[c] = safe[c] ? 1.0 / n_safe : 0.0;
  } else {
    for (auto& p : joint) p /= total;
  }
  neural::ActionDistribution out = dist;
  out.translation_joint = joint;
  for (int k = 0; k < 3; ++k) out.factors[k] = {0.0, 0.0, 0.0};
  for (int c = 0; c < 27; ++c) {
    const auto lv = combo_levels(c);
    for (int k = 0; k < 3; ++k) out.factors[k][lv[k] + 1] += joint[c];
  }
  return out;
}

neural::ActionDistribution action_mask(const neural::ActionDistribution& dist,
                                       const geometry::CameraPose& pose,
                                       std::span<const Obstacle> obstacles, double range,
                                       const world::WorldConfig& cfg) {
  return action_mask(dist, safe_translations(pose, obstacles, range, cfg));
}

world::CameraCommand ema_smooth(const world::CameraCommand& prev,
                                const world::CameraCommand& current, double eta) {
  world::CameraCommand out;
  // Same as prev + eta * (current - prev), but exact at eta = 1.
  for (size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - eta) * prev[k] + eta * current[k];
  return out;
}

world::CameraCommand action_noise(const world::CameraCommand& command, std::mt19937_64& rng,
                                  double lo, double hi) {
  world::CameraCommand out;
  for (size_t k = 0; k < out.size(); ++k) {
    const double f = hi > lo ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
    out[k] = command[k] * f;
  }
  return out;
}

}  // namespace active_mocap::safety
