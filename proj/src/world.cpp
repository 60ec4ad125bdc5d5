#include "active_mocap/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "active_mocap/errors.hpp"

namespace active_mocap::world {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStrideLength = 1.4;  // metres per full gait cycle
constexpr double kReferenceHeight = 1.70;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec2 sample_waypoint(std::mt19937_64& rng, const WorldConfig& cfg) {
  const double e = cfg.walk_extent();
  const double x = uniform(rng, -e, e);
  const double y = uniform(rng, -e, e);
  return {x, y};
}

void clamp_to_arena(HumanState& h, const WorldConfig& cfg) {
  const double lim = cfg.half_size() - h.capsule_radius;
  h.position.x() = std::clamp(h.position.x(), -lim, lim);
  h.position.y() = std::clamp(h.position.y(), -lim, lim);
}

// Pushes overlapping pairs apart symmetrically until every pair is separated
// by at least the sum of radii (plus a hair to survive round-off).
void resolve_overlaps(std::vector<HumanState>& humans, const WorldConfig& cfg) {
  constexpr double kSlack = 1e-6;
  for (int pass = 0; pass < 50; ++pass) {
    bool clean = true;
    for (size_t i = 0; i < humans.size(); ++i) {
      for (size_t j = i + 1; j < humans.size(); ++j) {
        Vec2 d = humans[j].position.head<2>() - humans[i].position.head<2>();
        const double need = humans[i].capsule_radius + humans[j].capsule_radius;
        double dist = d.norm();
        if (dist >= need) continue;
        clean = false;
        if (dist < 1e-12) {
          // Coincident centres: separate along a fixed axis keyed by index.
          const double a = 2.0 * kPi * static_cast<double>(i + j) / 7.0;
          d = Vec2(std::cos(a), std::sin(a));
          dist = 0.0;
        } else {
          d /= dist;
        }
        const double push = 0.5 * (need - dist) + kSlack;
        humans[i].position.head<2>() -= push * d;
        humans[j].position.head<2>() += push * d;
      }
    }
    for (auto& h : humans) clamp_to_arena(h, cfg);
    if (clean) return;
  }
}

}  // namespace

const HumanState& WorldState::target() const {
  for (const auto& h : humans)
    if (h.is_target) return h;
  throw Error("world has no target human");
}

WorldState reset_world(const WorldConfig& cfg, std::span<const CameraPose> camera_poses,
                       uint64_t seed) {
  WorldState state;
  state.rng.seed(seed);
  const int count = std::uniform_int_distribution<int>(cfg.min_humans, cfg.max_humans)(state.rng);
  const double e = cfg.walk_extent();
  for (int i = 0; i < count; ++i) {
    HumanState h;
    h.id = i;
    h.is_target = (i == 0);
    h.capsule_radius = cfg.capsule_radius;
    h.height = cfg.human_height;
    // Rejection-sample a spawn point clear of earlier humans.
    for (int attempt = 0; attempt < 1000; ++attempt) {
      h.position = Vec3(uniform(state.rng, -e, e), uniform(state.rng, -e, e), 0.0);
      bool clear = true;
      for (const auto& other : state.humans)
        if ((other.position - h.position).head<2>().norm() <
            other.capsule_radius + h.capsule_radius + 0.2)
          clear = false;
      if (clear) break;
    }
    h.heading = uniform(state.rng, -kPi, kPi);
    h.speed = uniform(state.rng, cfg.speed_min, cfg.speed_max);
    h.gait_phase = uniform(state.rng, 0.0, 2.0 * kPi);
    h.waypoint = sample_waypoint(state.rng, cfg);
    state.humans.push_back(h);
  }
  resolve_overlaps(state.humans, cfg);
  for (size_t i = 0; i < camera_poses.size(); ++i) {
    CameraAgentState cam;
    cam.id = static_cast<int>(i);
    cam.pose = geometry::normalized(camera_poses[i]);
    cam.intrinsics = cfg.intrinsics;
    state.cameras.push_back(cam);
  }
  return state;
}

CameraCommand to_command(const AgentAction& action, const WorldConfig& cfg) {
  return {action.translation[0] * cfg.translation_step,
          action.translation[1] * cfg.translation_step,
          action.translation[2] * cfg.translation_step,
          action.rotation[0] * cfg.rotation_step,
          action.rotation[1] * cfg.rotation_step};
}

Vec3 egocentric_to_world(double yaw, const Vec3& t) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * t.x() - s * t.y(), s * t.x() + c * t.y(), t.z()};
}

Vec3 moved_position(const CameraPose& pose, const Vec3& translation,
                    const WorldConfig& cfg) {
  Vec3 p = pose.position + egocentric_to_world(pose.yaw, translation);
  const double lim = cfg.half_size() + cfg.flight_margin;
  p.x() = std::clamp(p.x(), -lim, lim);
  p.y() = std::clamp(p.y(), -lim, lim);
  p.z() = std::clamp(p.z(), cfg.z_min, cfg.z_max);
  return p;
}

std::array<double, 2> look_at_rates(const CameraPose& pose, const Vec3& aim,
                                    double max_rate) {
  const Vec3 d = aim - pose.position;
  const double horizontal = d.head<2>().norm();
  if (horizontal < 1e-9 && std::abs(d.z()) < 1e-9) return {0.0, 0.0};
  const double want_yaw = horizontal < 1e-9 ? pose.yaw : std::atan2(d.y(), d.x());
  const double want_pitch = std::atan2(d.z(), horizontal);
  const double dyaw = geometry::wrap_angle(want_yaw - pose.yaw);
  const double dpitch = want_pitch - pose.pitch;
  return {std::clamp(dpitch, -max_rate, max_rate), std::clamp(dyaw, -max_rate, max_rate)};
}

std::vector<HumanState> step_humans(const WorldState& state, const WorldConfig& cfg,
                                    std::mt19937_64& rng) {
  std::vector<HumanState> next = state.humans;
  for (size_t i = 0; i < next.size(); ++i) {
    HumanState& h = next[i];
    if ((h.waypoint - h.position.head<2>()).norm() < cfg.waypoint_tolerance) {
      h.waypoint = sample_waypoint(rng, cfg);
      h.speed = uniform(rng, cfg.speed_min, cfg.speed_max);
    }
    Vec2 desired = h.waypoint - h.position.head<2>();
    if (desired.norm() > 1e-9) desired.normalize();
    // Repulsion from neighbours closer than personal space.
    for (size_t j = 0; j < state.humans.size(); ++j) {
      if (j == i) continue;
      const Vec2 away = state.humans[i].position.head<2>() - state.humans[j].position.head<2>();
      const double gap = away.norm() - h.capsule_radius - state.humans[j].capsule_radius;
      if (gap < cfg.personal_space && away.norm() > 1e-9) {
        const double w = cfg.repulsion_gain * (1.0 - std::max(gap, 0.0) / cfg.personal_space);
        desired += w * away.normalized();
      }
    }
    const Vec2 current(std::cos(h.heading), std::sin(h.heading));
    Vec2 dir = (1.0 - cfg.steering_blend) * current + cfg.steering_blend *
               (desired.norm() > 1e-9 ? Vec2(desired.normalized()) : current);
    if (dir.norm() < 1e-9) dir = desired.norm() > 1e-9 ? Vec2(desired.normalized()) : current;
    dir.normalize();
    h.heading = std::atan2(dir.y(), dir.x());
    h.position.head<2>() += dir * h.speed * cfg.dt;
    h.gait_phase = std::fmod(h.gait_phase + 2.0 * kPi * h.speed * cfg.dt / kStrideLength,
                             2.0 * kPi);
    clamp_to_arena(h, cfg);
  }
  resolve_overlaps(next, cfg);
  return next;
}

WorldState step_world(const WorldState& state, std::span<const CameraCommand> commands,
                      const WorldConfig& cfg) {
  if (commands.size() != state.cameras.size())
    throw ActionCountMismatch("expected " + std::to_string(state.cameras.size()) +
                              " commands, got " + std::to_string(commands.size()));
  WorldState next = state;
  for (size_t i = 0; i < next.cameras.size(); ++i) {
    auto& pose = next.cameras[i].pose;
    const auto& c = commands[i];
    pose.position = moved_position(pose, Vec3(c[0], c[1], c[2]), cfg);
    pose.pitch += c[3];
    pose.yaw += c[4];
    pose = geometry::normalized(pose);
  }
  next.humans = step_humans(state, cfg, next.rng);
  next.step = state.step + 1;
  return next;
}

WorldState step_world(const WorldState& state, std::span<const AgentAction> actions,
                      const WorldConfig& cfg) {
  std::vector<CameraCommand> commands;
  commands.reserve(actions.size());
  for (const auto& a : actions) commands.push_back(to_command(a, cfg));
  return step_world(state, commands, cfg);
}

Skeleton3D skeleton_of(const HumanState& human) {
  // Body-frame offsets (forward, left, up) for a 1.70 m reference body.
  static constexpr std::array<std::array<double, 3>, geometry::kNumJoints> kRest{{
      {0.10, 0.00, 1.62},   // nose
      {0.08, 0.03, 1.65},   // left eye
      {0.08, -0.03, 1.65},  // right eye
      {0.00, 0.07, 1.63},   // left ear
      {0.00, -0.07, 1.63},  // right ear
      {0.00, 0.19, 1.42},   // left shoulder
      {0.00, -0.19, 1.42},  // right shoulder
      {0.00, 0.22, 1.12},   // left elbow
      {0.00, -0.22, 1.12},  // right elbow
      {0.00, 0.23, 0.85},   // left wrist
      {0.00, -0.23, 0.85},  // right wrist
      {0.00, 0.10, 0.93},   // left hip
      {0.00, -0.10, 0.93},  // right hip
      {0.00, 0.10, 0.50},   // left knee
      {0.00, -0.10, 0.50},  // right knee
      {0.00, 0.10, 0.08},   // left ankle
      {0.00, -0.10, 0.08},  // right ankle
  }};
  // Forward swing amplitudes; legs and opposite arms move in antiphase.
  constexpr double kKneeSwing = 0.12, kAnkleSwing = 0.25;
  constexpr double kElbowSwing = 0.06, kWristSwing = 0.15;

  std::array<double, geometry::kNumJoints> swing{};
  const double c = std::cos(human.gait_phase);
  swing[geometry::kLeftKnee] = kKneeSwing * c;
  swing[geometry::kRightKnee] = -kKneeSwing * c;
  swing[geometry::kLeftAnkle] = kAnkleSwing * c;
  swing[geometry::kRightAnkle] = -kAnkleSwing * c;
  swing[geometry::kLeftElbow] = -kElbowSwing * c;
  swing[geometry::kRightElbow] = kElbowSwing * c;
  swing[geometry::kLeftWrist] = -kWristSwing * c;
  swing[geometry::kRightWrist] = kWristSwing * c;

  const double scale = human.height / kReferenceHeight;
  const Vec3 fwd(std::cos(human.heading), std::sin(human.heading), 0.0);
  const Vec3 left(-std::sin(human.heading), std::cos(human.heading), 0.0);
  const Vec3 up(0.0, 0.0, 1.0);
  Skeleton3D s;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    const auto& r = kRest[j];
    s.joints[j] = human.position +
                  scale * ((r[0] + swing[j]) * fwd + r[1] * left + r[2] * up);
  }
  return s;
}

Vec3 closest_body_point(const HumanState& human, const Vec3& p) {
  const double z = std::clamp(p.z(), human.position.z(), human.position.z() + human.height);
  return {human.position.x(), human.position.y(), z};
}

double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  constexpr double kEps = 1e-15;
  double s = 0.0, t = 0.0;
  if (a <= kEps && e <= kEps) return r.norm();
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + d1 * s) - (q0 + d2 * t)).norm();
}

bool occluded(const CameraAgentState& camera, const Vec3& joint,
              std::span<const HumanState> humans, int exclude_id) {
  if (!geometry::project(camera.pose, camera.intrinsics, joint)) return true;
  for (const auto& h : humans) {
    if (h.id == exclude_id) continue;
    const Vec3 a = h.position + Vec3(0, 0, h.capsule_radius);
    const Vec3 b = h.position + Vec3(0, 0, std::max(h.height - h.capsule_radius, h.capsule_radius));
    if (segment_distance(camera.pose.position, joint, a, b) < h.capsule_radius) return true;
  }
  return false;
}

}  // namespace active_mocap::world
