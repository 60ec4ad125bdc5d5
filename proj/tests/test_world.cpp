#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "active_mocap/errors.hpp"
#include "active_mocap/world.hpp"

using namespace active_mocap;
using namespace active_mocap::world;

namespace {

std::vector<CameraPose> three_cameras() {
  return {{Vec3(-5, 0, 3), -0.6, 0.0},
          {Vec3(2.5, 4.3, 3), -0.6, -2.1},
          {Vec3(2.5, -4.3, 3), -0.6, 2.1}};
}

WorldConfig many_humans() {
  WorldConfig cfg;
  cfg.min_humans = 6;
  cfg.max_humans = 6;
  return cfg;
}

AgentAction random_action(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> lvl(-1, 1);
  AgentAction a;
  for (auto& t : a.translation) t = lvl(rng);
  for (auto& r : a.rotation) r = lvl(rng);
  return a;
}

}  // namespace

TEST(Reset, HumanCountAndTarget) {
  WorldConfig cfg;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto s = reset_world(cfg, three_cameras(), seed);
    EXPECT_GE(static_cast<int>(s.humans.size()), cfg.min_humans);
    EXPECT_LE(static_cast<int>(s.humans.size()), cfg.max_humans);
    int targets = 0;
    for (const auto& h : s.humans) targets += h.is_target;
    EXPECT_EQ(targets, 1);
    EXPECT_TRUE(s.humans[0].is_target);
    EXPECT_EQ(s.cameras.size(), 3u);
  }
}

TEST(StepWorld, NullActionKeepsCamerasAndMovesHumans) {
  auto cfg = many_humans();
  auto s = reset_world(cfg, three_cameras(), 7);
  std::vector<AgentAction> zero(3);
  auto n = step_world(s, zero, cfg);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(n.cameras[i].pose.position, s.cameras[i].pose.position);
    EXPECT_EQ(n.cameras[i].pose.yaw, s.cameras[i].pose.yaw);
    EXPECT_EQ(n.cameras[i].pose.pitch, s.cameras[i].pose.pitch);
  }
  double moved = 0;
  for (size_t i = 0; i < s.humans.size(); ++i)
    moved += (n.humans[i].position - s.humans[i].position).norm();
  EXPECT_GT(moved, 0.0);
  EXPECT_EQ(n.step, 1);
}

TEST(StepWorld, AltitudeClamp) {
  WorldConfig cfg;
  std::vector<CameraPose> poses{{Vec3(0, 0, cfg.z_max), 0, 0}};
  auto s = reset_world(cfg, poses, 1);
  AgentAction up;
  up.translation = {0, 0, 1};
  auto n = step_world(s, std::vector{up}, cfg);
  EXPECT_EQ(n.cameras[0].pose.position.z(), cfg.z_max);
}

TEST(StepWorld, ForwardStepFollowsYaw) {
  WorldConfig cfg;
  std::vector<CameraPose> poses{{Vec3(0, 0, 2), 0, 0}, {Vec3(1, 1, 2), -0.3, std::numbers::pi / 2}};
  auto s = reset_world(cfg, poses, 1);
  AgentAction fwd;
  fwd.translation = {1, 0, 0};
  AgentAction left;
  left.translation = {0, 1, 0};
  auto n = step_world(s, std::vector{fwd, left}, cfg);
  EXPECT_NEAR((n.cameras[0].pose.position - Vec3(0.25, 0, 2)).norm(), 0.0, 1e-12);
  // Facing +y, "left" is -x.
  EXPECT_NEAR((n.cameras[1].pose.position - Vec3(0.75, 1, 2)).norm(), 0.0, 1e-12);
}

TEST(StepWorld, RotationLevels) {
  WorldConfig cfg;
  std::vector<CameraPose> poses{{Vec3(0, 0, 2), 0, 0}};
  auto s = reset_world(cfg, poses, 1);
  AgentAction a;
  a.rotation = {-1, 1};
  auto n = step_world(s, std::vector{a}, cfg);
  EXPECT_NEAR(n.cameras[0].pose.pitch, -cfg.rotation_step, 1e-15);
  EXPECT_NEAR(n.cameras[0].pose.yaw, cfg.rotation_step, 1e-15);
}

TEST(StepWorld, ActionCountMismatch) {
  WorldConfig cfg;
  auto s = reset_world(cfg, three_cameras(), 1);
  std::vector<AgentAction> two(2);
  EXPECT_THROW(step_world(s, two, cfg), ActionCountMismatch);
}

TEST(StepWorld, DeterministicGivenSeedAndActions) {
  auto cfg = many_humans();
  auto a = reset_world(cfg, three_cameras(), 42);
  auto b = reset_world(cfg, three_cameras(), 42);
  std::mt19937_64 ra(9), rb(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<AgentAction> aa, ab;
    for (int i = 0; i < 3; ++i) {
      aa.push_back(random_action(ra));
      ab.push_back(random_action(rb));
    }
    a = step_world(a, aa, cfg);
    b = step_world(b, ab, cfg);
  }
  for (size_t i = 0; i < a.humans.size(); ++i) {
    EXPECT_EQ(a.humans[i].position, b.humans[i].position);
    EXPECT_EQ(a.humans[i].heading, b.humans[i].heading);
  }
  for (size_t i = 0; i < a.cameras.size(); ++i)
    EXPECT_EQ(a.cameras[i].pose.position, b.cameras[i].pose.position);
}

TEST(StepWorld, ContainmentSeparationAndTargetOverManySteps) {
  auto cfg = many_humans();
  auto s = reset_world(cfg, three_cameras(), 3);
  std::mt19937_64 rng(4);
  const double cam_lim = cfg.half_size() + cfg.flight_margin;
  for (int t = 0; t < 10000; ++t) {
    std::vector<AgentAction> acts;
    for (int i = 0; i < 3; ++i) acts.push_back(random_action(rng));
    s = step_world(s, acts, cfg);
    int targets = 0;
    for (size_t i = 0; i < s.humans.size(); ++i) {
      const auto& h = s.humans[i];
      targets += h.is_target;
      ASSERT_LE(std::abs(h.position.x()), cfg.half_size());
      ASSERT_LE(std::abs(h.position.y()), cfg.half_size());
      ASSERT_GE(h.speed, cfg.speed_min);
      ASSERT_LE(h.speed, cfg.speed_max);
      for (size_t j = i + 1; j < s.humans.size(); ++j)
        ASSERT_GE((h.position - s.humans[j].position).head<2>().norm(),
                  h.capsule_radius + s.humans[j].capsule_radius - 1e-9)
            << "step " << t;
    }
    ASSERT_EQ(targets, 1);
    for (const auto& c : s.cameras) {
      ASSERT_LE(std::abs(c.pose.position.x()), cam_lim);
      ASSERT_LE(std::abs(c.pose.position.y()), cam_lim);
      ASSERT_GE(c.pose.position.z(), cfg.z_min);
      ASSERT_LE(c.pose.position.z(), cfg.z_max);
    }
  }
}

TEST(StepWorld, EpisodeEndsAtMaxLength) {
  WorldConfig cfg;
  auto s = reset_world(cfg, three_cameras(), 3);
  std::vector<AgentAction> zero(3);
  int steps = 0;
  while (!s.done(cfg)) {
    s = step_world(s, zero, cfg);
    ++steps;
  }
  EXPECT_EQ(steps, 500);
}

TEST(StepHumans, WaypointResample) {
  WorldConfig cfg;
  auto s = reset_world(cfg, three_cameras(), 5);
  s.humans.resize(1);
  s.humans[0].waypoint = s.humans[0].position.head<2>();
  std::mt19937_64 rng(1);
  auto next = step_humans(s, cfg, rng);
  EXPECT_NE(next[0].waypoint, s.humans[0].waypoint);
  EXPECT_LE(std::abs(next[0].waypoint.x()), cfg.half_size());
  EXPECT_LE(std::abs(next[0].waypoint.y()), cfg.half_size());
  EXPECT_GE(next[0].speed, cfg.speed_min);
  EXPECT_LE(next[0].speed, cfg.speed_max);
}

TEST(StepHumans, HeadOnCollisionKeepsSeparation) {
  WorldConfig cfg;
  WorldState s;
  HumanState a, b;
  a.id = 0;
  a.is_target = true;
  a.position = Vec3(-0.4, 0, 0);
  a.heading = 0;
  a.speed = 1.5;
  a.waypoint = Vec2(4, 0);
  b.id = 1;
  b.position = Vec3(0.4, 0, 0);
  b.heading = std::numbers::pi;
  b.speed = 1.5;
  b.waypoint = Vec2(-4, 0);
  s.humans = {a, b};
  std::mt19937_64 rng(1);
  for (int t = 0; t < 40; ++t) {
    s.humans = step_humans(s, cfg, rng);
    EXPECT_GE((s.humans[0].position - s.humans[1].position).norm(), 2 * cfg.capsule_radius);
  }
}

TEST(Skeleton, HeadHeightGolden) {
  HumanState h;
  h.position = Vec3(1, 2, 0);
  auto s = skeleton_of(h);
  EXPECT_NEAR(s.joints[geometry::kNose].z(), 1.62, 1e-12);
  h.height = 1.87;
  EXPECT_NEAR(skeleton_of(h).joints[geometry::kNose].z(), 1.62 * 1.1, 1e-12);
}

TEST(Skeleton, PhaseMirrorSwapsAnkles) {
  HumanState h;
  h.heading = 0;
  h.gait_phase = 0;
  auto s0 = skeleton_of(h);
  h.gait_phase = std::numbers::pi;
  auto s1 = skeleton_of(h);
  EXPECT_NEAR(s0.joints[geometry::kLeftAnkle].x(), s1.joints[geometry::kRightAnkle].x(), 1e-12);
  EXPECT_NEAR(s0.joints[geometry::kRightAnkle].x(), s1.joints[geometry::kLeftAnkle].x(), 1e-12);
  EXPECT_GT(s0.joints[geometry::kLeftAnkle].x(), s0.joints[geometry::kRightAnkle].x());
}

TEST(Skeleton, HeadingRotationNegatesOffsets) {
  HumanState h;
  h.position = Vec3(1, -1, 0);
  h.heading = 0.4;
  h.gait_phase = 1.0;
  auto a = skeleton_of(h);
  h.heading += std::numbers::pi;
  auto b = skeleton_of(h);
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    const Vec3 da = a.joints[j] - h.position, db = b.joints[j] - h.position;
    EXPECT_NEAR(da.x(), -db.x(), 1e-12);
    EXPECT_NEAR(da.y(), -db.y(), 1e-12);
    EXPECT_NEAR(da.z(), db.z(), 1e-12);
  }
}

TEST(Occlusion, NoOccluders) {
  CameraAgentState cam;
  cam.pose = {Vec3(-4, 0, 1), 0, 0};
  std::vector<HumanState> humans(1);
  humans[0].id = 0;
  EXPECT_FALSE(occluded(cam, Vec3(0, 0, 1), humans, 0));
}

TEST(Occlusion, OccluderOnMidpoint) {
  CameraAgentState cam;
  cam.pose = {Vec3(-4, 0, 1), 0, 0};
  std::vector<HumanState> humans(2);
  humans[0].id = 0;
  humans[1].id = 1;
  humans[1].position = Vec3(-2, 0, 0);
  EXPECT_TRUE(occluded(cam, Vec3(0, 0, 1), humans, 0));
}

TEST(Occlusion, LateralOffsetJustBeyondRadius) {
  CameraAgentState cam;
  cam.pose = {Vec3(-4, 0, 1), 0, 0};
  std::vector<HumanState> humans(2);
  humans[0].id = 0;
  humans[1].id = 1;
  const double r = humans[1].capsule_radius;
  humans[1].position = Vec3(-2, r + 1e-3, 0);
  EXPECT_FALSE(occluded(cam, Vec3(0, 0, 1), humans, 0));
  humans[1].position = Vec3(-2, r - 1e-3, 0);
  EXPECT_TRUE(occluded(cam, Vec3(0, 0, 1), humans, 0));
}

TEST(Occlusion, OutsideFrustum) {
  CameraAgentState cam;
  cam.pose = {Vec3(-4, 0, 1), 0, 0};
  EXPECT_TRUE(occluded(cam, Vec3(-6, 0, 1), {}, 0));
}

TEST(SegmentDistance, MatchesClosedForms) {
  EXPECT_NEAR(segment_distance({0, 0, 0}, {1, 0, 0}, {0.5, 1, -1}, {0.5, 1, 1}), 1.0, 1e-12);
  EXPECT_NEAR(segment_distance({0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}), 1.0, 1e-12);
  EXPECT_NEAR(segment_distance({0, 0, 0}, {0, 0, 0}, {1, 1, 0}, {1, -1, 0}), 1.0, 1e-12);
}

TEST(LookAt, RatesAreClampedAndPointTowardAim) {
  CameraPose pose{Vec3(0, 0, 3), 0, 0};
  auto r = look_at_rates(pose, Vec3(0, 5, 0), 0.1);
  EXPECT_NEAR(r[1], 0.1, 1e-15);
  EXPECT_NEAR(r[0], -0.1, 1e-15);
  auto small = look_at_rates(pose, Vec3(5, 0.01, 3), 0.1);
  EXPECT_NEAR(small[1], std::atan2(0.01, 5), 1e-12);
  EXPECT_NEAR(small[0], 0.0, 1e-12);
}
