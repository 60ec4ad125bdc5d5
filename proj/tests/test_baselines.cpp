#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "active_mocap/baselines.hpp"
#include "active_mocap/errors.hpp"

using namespace active_mocap;
using namespace active_mocap::baselines;
using geometry::Vec3;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double angle_about(const Vec3& p, const Vec3& centre) {
  return std::atan2(p.y() - centre.y(), p.x() - centre.x());
}

double wrap_deg(double a) {
  a = std::fmod(a, 360.0);
  return a < 0 ? a + 360.0 : a;
}

// Sorted angular gaps (degrees) between cameras around `centre`.
std::vector<double> angular_gaps(const std::vector<Vec3>& pts, const Vec3& centre) {
  std::vector<double> a;
  for (const auto& p : pts) a.push_back(wrap_deg(angle_about(p, centre) / kDeg));
  std::sort(a.begin(), a.end());
  std::vector<double> gaps;
  for (size_t i = 0; i < a.size(); ++i)
    gaps.push_back(i + 1 < a.size() ? a[i + 1] - a[i] : a[0] + 360.0 - a[i]);
  std::sort(gaps.begin(), gaps.end());
  return gaps;
}

CameraPose aimed(const Vec3& pos, const Vec3& target) {
  const Vec3 d = target - pos;
  return {pos, std::atan2(d.z(), d.head<2>().norm()), std::atan2(d.y(), d.x())};
}

}  // namespace

TEST(FixedFormation, TriangleIsEquilateral) {
  const auto poses = fixed_formation(3);
  std::vector<Vec3> pts;
  for (const auto& p : poses) pts.push_back(p.position);
  for (double g : angular_gaps(pts, Vec3::Zero())) EXPECT_NEAR(g, 120.0, 1e-9);
  for (const auto& p : poses) EXPECT_NEAR(p.position.head<2>().norm(), 5.0, 1e-12);
}

TEST(FixedFormation, PentagonHeightPitchAndFacing) {
  const auto poses = fixed_formation(5);
  ASSERT_EQ(poses.size(), 5u);
  std::vector<Vec3> pts;
  for (const auto& p : poses) {
    pts.push_back(p.position);
    EXPECT_DOUBLE_EQ(p.position.z(), 3.0);
    EXPECT_NEAR(p.pitch, -35.0 * kDeg, 1e-12);
    // Horizontal forward axis points at the arena centre.
    const Vec3 fwd(std::cos(p.yaw), std::sin(p.yaw), 0.0);
    const Vec3 to_centre = -Vec3(p.position.x(), p.position.y(), 0.0).normalized();
    EXPECT_NEAR(fwd.dot(to_centre), 1.0, 1e-12);
  }
  for (double g : angular_gaps(pts, Vec3::Zero())) EXPECT_NEAR(g, 72.0, 1e-9);
}

TEST(FixedFormation, TwoCamerasAreOrthogonal) {
  const auto poses = fixed_formation(2);
  const double a = angle_about(poses[0].position, Vec3::Zero());
  const double b = angle_about(poses[1].position, Vec3::Zero());
  EXPECT_NEAR(std::abs(std::remainder(a - b, 2 * std::numbers::pi)), std::numbers::pi / 2, 1e-12);
}

TEST(FixedFormation, UnsupportedCounts) {
  EXPECT_THROW(fixed_formation(1), UnsupportedCount);
  EXPECT_THROW(fixed_formation(7), UnsupportedCount);
  for (int n = 2; n <= 6; ++n) EXPECT_EQ(fixed_formation(n).size(), static_cast<size_t>(n));
}

TEST(FixedFormation, FollowsArenaSize) {
  world::WorldConfig cfg;
  cfg.arena_size = 6.0;
  for (const auto& p : fixed_formation(4, cfg)) EXPECT_NEAR(p.position.head<2>().norm(), 3.0, 1e-12);
}

// Independent enumeration: world displacement from the heading, then the
// flight-volume clamp, then the closest candidate with fewest moves.
TEST(BestTranslation, MatchesEnumerationOracle) {
  world::WorldConfig cfg;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> xy(-5.5, 5.5), z(0.3, 3.7), ang(-3.1, 3.1);
  const double lim = cfg.half_size() + cfg.flight_margin;
  for (int trial = 0; trial < 500; ++trial) {
    const CameraPose pose{Vec3(xy(rng), xy(rng), std::clamp(z(rng), cfg.z_min, cfg.z_max)), 0.0, ang(rng)};
    const Vec3 goal(xy(rng), xy(rng), z(rng));
    double best_d = 1e300;
    int best_moves = 9;
    std::array<int, 3> best{};
    for (int f = -1; f <= 1; ++f)
      for (int l = -1; l <= 1; ++l)
        for (int u = -1; u <= 1; ++u) {
          const double s = cfg.translation_step;
          Vec3 p = pose.position + Vec3(s * (f * std::cos(pose.yaw) - l * std::sin(pose.yaw)),
                                        s * (f * std::sin(pose.yaw) + l * std::cos(pose.yaw)), s * u);
          p.x() = std::clamp(p.x(), -lim, lim);
          p.y() = std::clamp(p.y(), -lim, lim);
          p.z() = std::clamp(p.z(), cfg.z_min, cfg.z_max);
          const double d = (p - goal).norm();
          const int moves = std::abs(f) + std::abs(l) + std::abs(u);
          if (d < best_d - 1e-9 || (d < best_d + 1e-9 && moves < best_moves)) {
            best_d = d;
            best_moves = moves;
            best = {f, l, u};
          }
        }
    EXPECT_EQ(best_translation(pose, goal, cfg), best) << "trial " << trial;
  }
}

TEST(RuleBased, IdleAtEquilibrium) {
  world::WorldConfig cfg;
  const RuleBasedConfig rb;
  const Vec3 target(0.7, -1.2, 1.0);
  std::vector<CameraPose> cams;
  for (int k = 0; k < 3; ++k) cams.push_back(aimed(formation_vertex(target, k, 3, rb), target));
  for (const auto& a : rule_based_formation(target, cams, cfg, rb)) EXPECT_EQ(a, world::AgentAction{});
}

TEST(RuleBased, TranslationEquivariant) {
  world::WorldConfig cfg;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 target(u(rng), u(rng), 1.0);
    std::vector<CameraPose> cams;
    for (int k = 0; k < 3; ++k) cams.push_back({Vec3(u(rng), u(rng), 2.0), -0.3, u(rng)});
    const Vec3 shift(0.75, -0.5, 0.0);
    auto moved = cams;
    for (auto& c : moved) c.position += shift;
    EXPECT_EQ(rule_based_formation(target, cams, cfg), rule_based_formation(target + shift, moved, cfg));
  }
}

TEST(RuleBased, ConvergesToEvenSpacingAroundStationaryTarget) {
  world::WorldConfig cfg;
  const RuleBasedConfig rb;
  const Vec3 target(0.5, 0.5, 1.0);
  std::vector<CameraPose> cams{{Vec3(-4, -4, 1.0), 0, 0}, {Vec3(-3.5, -4, 3.0), 0, 1.0}, {Vec3(4, -4, 2.0), 0, 2.0}};
  for (int t = 0; t < 50; ++t) {
    const auto acts = rule_based_formation(target, cams, cfg, rb);
    for (size_t k = 0; k < cams.size(); ++k) {
      const auto& lv = acts[k].translation;
      cams[k].position = world::moved_position(cams[k], Vec3(lv[0], lv[1], lv[2]) * cfg.translation_step, cfg);
    }
  }
  std::vector<Vec3> pts;
  for (const auto& c : cams) pts.push_back(c.position);
  for (double g : angular_gaps(pts, target)) EXPECT_NEAR(g, 120.0, 10.0);
  for (const auto& p : pts) EXPECT_NEAR((p - target).head<2>().norm(), rb.radius, 0.3);
}

TEST(Smoother, AlphaOneIsIdentityWithFillIn) {
  TemporalSmoother s(1.0);
  geometry::Skeleton3D a, b;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    a.joints[j] = Vec3(j, 1, 2);
    b.joints[j] = Vec3(-j, 5, 0.5);
  }
  std::array<bool, geometry::kNumJoints> all{};
  all.fill(true);
  const auto first = s.update(a, all);
  for (int j = 0; j < geometry::kNumJoints; ++j) EXPECT_EQ(first.joints[j], a.joints[j]);
  auto some = all;
  some[4] = false;
  const auto second = s.update(b, some);
  for (int j = 0; j < geometry::kNumJoints; ++j) EXPECT_EQ(second.joints[j], j == 4 ? a.joints[j] : b.joints[j]);
}

TEST(Smoother, LowPassResidual) {
  TemporalSmoother s(0.7);
  geometry::Skeleton3D prev, cur;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    prev.joints[j] = Vec3(1, 1, 1);
    cur.joints[j] = Vec3(2, 1, -1);
  }
  s.reset(prev);
  std::array<bool, geometry::kNumJoints> all{};
  all.fill(true);
  const auto out = s.update(cur, all);
  for (int j = 0; j < geometry::kNumJoints; ++j)
    EXPECT_TRUE(out.joints[j].isApprox(cur.joints[j] + 0.3 * (prev.joints[j] - cur.joints[j]), 1e-12));
  // A constant input is approached geometrically.
  geometry::Skeleton3D last = out;
  for (int t = 0; t < 5; ++t) last = s.update(cur, all);
  EXPECT_NEAR((last.joints[0] - cur.joints[0]).norm(), std::pow(0.3, 6) * (prev.joints[0] - cur.joints[0]).norm(), 1e-12);
}
