#include "active_mocap/baselines.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "active_mocap/errors.hpp"
#include "active_mocap/safety.hpp"

namespace active_mocap::baselines {

double formation_angle(int k, int n) {
  if (n == 2) return std::numbers::pi - k * std::numbers::pi / 2;
  return std::numbers::pi + 2.0 * std::numbers::pi * k / n;
}

std::vector<CameraPose> fixed_formation(int n, const world::WorldConfig& cfg) {
  if (n < 2 || n > 6)
    throw UnsupportedCount("fixed formation supports 2 to 6 cameras, got " + std::to_string(n));
  const double r = cfg.half_size();
  std::vector<CameraPose> out;
  for (int k = 0; k < n; ++k) {
    const double a = formation_angle(k, n);
    CameraPose p;
    p.position = Vec3(r * std::cos(a), r * std::sin(a), kFixedAltitude);
    p.pitch = kFixedPitch;
    p.yaw = std::atan2(-p.position.y(), -p.position.x());
    out.push_back(p);
  }
  return out;
}

Vec3 formation_vertex(const Vec3& target, int k, int n, const RuleBasedConfig& rb) {
  const double a = formation_angle(k, n);
  return {target.x() + rb.radius * std::cos(a), target.y() + rb.radius * std::sin(a), rb.altitude};
}

std::array<int, 3> best_translation(const CameraPose& pose, const Vec3& goal,
                                    const world::WorldConfig& cfg) {
  std::array<int, 3> best{0, 0, 0};
  double best_d = std::numeric_limits<double>::infinity();
  int best_moves = 4;
  for (int c = 0; c < 27; ++c) {
    const auto lv = safety::combo_levels(c);
    const Vec3 next = world::moved_position(pose, Vec3(lv[0], lv[1], lv[2]) * cfg.translation_step, cfg);
    const double d = (next - goal).norm();
    const int moves = std::abs(lv[0]) + std::abs(lv[1]) + std::abs(lv[2]);
    if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && moves < best_moves)) {
      best_d = d;
      best = lv;
      best_moves = moves;
    }
  }
  return best;
}

std::vector<world::AgentAction> rule_based_formation(const Vec3& target_estimate,
                                                     std::span<const CameraPose> cameras,
                                                     const world::WorldConfig& cfg,
                                                     const RuleBasedConfig& rb) {
  const int n = static_cast<int>(cameras.size());
  std::vector<world::AgentAction> out(n);
  for (int k = 0; k < n; ++k) {
    out[k].translation = best_translation(cameras[k], formation_vertex(target_estimate, k, n, rb), cfg);
    const auto rates = world::look_at_rates(cameras[k], target_estimate, cfg.rotation_step);
    for (int a = 0; a < 2; ++a)
      out[k].rotation[a] = std::abs(rates[a]) < 0.5 * cfg.rotation_step ? 0 : (rates[a] > 0 ? 1 : -1);
  }
  return out;
}

Skeleton3D TemporalSmoother::update(const Skeleton3D& estimate,
                                    const std::array<bool, geometry::kNumJoints>& valid) {
  Skeleton3D out;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    if (valid[j])
      out.joints[j] = prev_ ? Vec3(alpha_ * estimate.joints[j] + (1.0 - alpha_) * prev_->joints[j])
                            : estimate.joints[j];
    else
      out.joints[j] = prev_ ? prev_->joints[j] : estimate.joints[j];
  }
  prev_ = out;
  return out;
}

}  // namespace active_mocap::baselines
