#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "active_mocap/perception.hpp"

using namespace active_mocap;
using namespace active_mocap::perception;
using world::CameraAgentState;
using world::HumanState;
using world::WorldState;

namespace {

CameraAgentState camera_at(int id, const Vec3& from, const Vec3& aim) {
  const Vec3 d = aim - from;
  CameraAgentState c;
  c.id = id;
  c.pose.position = from;
  c.pose.yaw = std::atan2(d.y(), d.x());
  c.pose.pitch = std::atan2(d.z(), d.head<2>().norm());
  return c;
}

HumanState human(int id, const Vec3& p, double heading = 0.0) {
  HumanState h;
  h.id = id;
  h.position = p;
  h.heading = heading;
  h.is_target = id == 0;
  return h;
}

WorldState scene(std::vector<HumanState> humans, std::vector<CameraAgentState> cams) {
  WorldState w;
  w.humans = std::move(humans);
  w.cameras = std::move(cams);
  return w;
}

std::vector<AgentPacket> packets_for(const WorldState& w, const PerceptionConfig& cfg,
                                     uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AgentPacket> out;
  for (const auto& c : w.cameras) out.push_back(make_packet(c, detect(c, w, cfg, rng)));
  return out;
}

const Vec3 kAim(0, 0, 1);

std::vector<CameraAgentState> triangle() {
  return {camera_at(0, {-4, 0, 2.5}, kAim), camera_at(1, {2, 3.5, 2.5}, kAim),
          camera_at(2, {2, -3.5, 2.5}, kAim)};
}

}  // namespace

TEST(Detect, ZeroNoiseGivesExactProjections) {
  auto w = scene({human(0, {0, 0, 0})}, triangle());
  PerceptionConfig cfg{0.0, 4};
  auto packets = packets_for(w, cfg, 1);
  const auto skel = world::skeleton_of(w.humans[0]);
  for (const auto& p : packets) {
    ASSERT_EQ(p.detections.size(), 1u);
    const auto& d = p.detections[0].detection;
    EXPECT_EQ(d.visible_count(), geometry::kNumJoints);
    for (int j = 0; j < geometry::kNumJoints; ++j) {
      auto px = geometry::project(p.pose, p.intrinsics, skel.joints[j]);
      EXPECT_NEAR((d.keypoints[j] - *px).norm(), 0.0, 1e-12);
    }
    EXPECT_GT(d.bbox[2], 0.0);
    EXPECT_GT(d.bbox[3], 0.0);
    EXPECT_LE(d.bbox[0], 1.0);
  }
}

TEST(Detect, FullyOccludedHumanIsAbsent) {
  // Camera at ground level looking along +x; a pedestrian stands right in
  // front of it and the target is directly behind.
  CameraAgentState cam = camera_at(0, {-4, 0, 1.0}, {0, 0, 1.0});
  auto w = scene({human(0, {0, 0, 0}), human(1, {-3.3, 0, 0})}, {cam});
  PerceptionConfig cfg{0.0, 4};
  auto packets = packets_for(w, cfg, 1);
  EXPECT_EQ(packets[0].find(0), nullptr);
}

TEST(Detect, NoiseMonteCarloMatchesRayleighMean) {
  auto w = scene({human(0, {0, 0, 0})}, {camera_at(0, {-4, 0, 2.5}, kAim)});
  PerceptionConfig noisy{2.0, 4}, clean{0.0, 4};
  const auto exact = packets_for(w, clean, 0)[0].detections[0].detection;
  std::mt19937_64 rng(123);
  double sum2d = 0.0, sum1d = 0.0;
  int n = 0;
  while (n < 10000) {
    const auto d = detect(w.cameras[0], w, noisy, rng)[0].detection;
    for (int j = 0; j < geometry::kNumJoints && n < 10000; ++j, ++n) {
      const geometry::Vec2 e = d.keypoints[j] - exact.keypoints[j];
      sum2d += e.norm();
      sum1d += 0.5 * (std::abs(e.x()) + std::abs(e.y()));
    }
  }
  // Rayleigh mean sigma*sqrt(pi/2) for the 2D deviation; half-normal mean
  // sigma*sqrt(2/pi) ~ 1.60 px per coordinate.
  const double rayleigh = 2.0 * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(sum2d / n, rayleigh, 0.03 * rayleigh);
  EXPECT_GE(sum1d / n, 1.5);
  EXPECT_LE(sum1d / n, 2.0);
}

TEST(Detect, VisibleKeypointsInsideImageAndBboxRule) {
  std::mt19937_64 rng(5);
  world::WorldConfig wc;
  wc.min_humans = 6;
  wc.max_humans = 6;
  std::vector<geometry::CameraPose> poses;
  for (const auto& c : triangle()) poses.push_back(c.pose);
  auto w = world::reset_world(wc, poses, 9);
  PerceptionConfig cfg{5.0, 4};
  for (int t = 0; t < 100; ++t) {
    for (const auto& c : w.cameras)
      for (const auto& hd : detect(c, w, cfg, rng)) {
        const auto& d = hd.detection;
        EXPECT_GE(d.visible_count(), 4);
        for (int j = 0; j < geometry::kNumJoints; ++j) {
          if (!d.visible[j]) continue;
          EXPECT_GE(d.keypoints[j].x(), 0.0);
          EXPECT_LT(d.keypoints[j].x(), c.intrinsics.width);
          EXPECT_GE(d.keypoints[j].y(), 0.0);
          EXPECT_LT(d.keypoints[j].y(), c.intrinsics.height);
        }
      }
    w = world::step_world(w, std::vector<world::AgentAction>(3), wc);
  }
}

TEST(Reconstruct, SingleCameraSubsetIsUnreconstructed) {
  auto w = scene({human(0, {0, 0, 0}), human(1, {1.5, 0.5, 0})}, triangle());
  auto packets = packets_for(w, {0.0, 4}, 1);
  auto r = reconstruct(packets, 0b001, {});
  for (const auto& h : r.humans) EXPECT_FALSE(h.reconstructed);
}

TEST(Reconstruct, NoiselessTripleRoundTrip) {
  auto w = scene({human(0, {0.2, -0.3, 0}, 0.7)}, triangle());
  auto packets = packets_for(w, {0.0, 4}, 1);
  auto r = reconstruct(packets, full_mask(3), {});
  const auto* est = r.find(0);
  ASSERT_TRUE(est && est->reconstructed);
  EXPECT_LT(geometry::mpjpe(est->skeleton, world::skeleton_of(w.humans[0])), 1.0);
  EXPECT_EQ(est->cameras.size(), 3u);
  ASSERT_TRUE(est->yaw);
  EXPECT_NEAR(*est->yaw, 0.7, 1e-6);
}

TEST(Reconstruct, OccludedCameraContributesNothing) {
  auto cams = triangle();
  cams[2] = camera_at(2, {-4, -0.05, 1.0}, {0, 0, 1.0});
  auto w = scene({human(0, {0, 0, 0}), human(1, {-3.3, -0.05, 0})}, cams);
  auto packets = packets_for(w, {0.0, 4}, 1);
  ASSERT_EQ(packets[2].find(0), nullptr);
  auto a = reconstruct_human(packets, 0b011, 0, {});
  auto b = reconstruct_human(packets, 0b111, 0, {});
  ASSERT_TRUE(a.reconstructed);
  for (int j = 0; j < geometry::kNumJoints; ++j) EXPECT_EQ(a.skeleton.joints[j], b.skeleton.joints[j]);
}

TEST(Reconstruct, PositionIsCoordinateMedian) {
  auto w = scene({human(0, {1, 1, 0})}, triangle());
  auto packets = packets_for(w, {1.0, 4}, 3);
  auto est = reconstruct_human(packets, full_mask(3), 0, {});
  ASSERT_TRUE(est.reconstructed);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> v;
    for (int j = 0; j < geometry::kNumJoints; ++j)
      if (est.joint_valid[j]) v.push_back(est.skeleton.joints[j](k));
    std::sort(v.begin(), v.end());
    const double med = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    EXPECT_EQ(est.position(k), med);
  }
}

TEST(Reconstruct, RandomSubsetsRoundTripProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    auto w = scene({human(0, {u(rng), u(rng), 0}, u(rng))}, {});
    const Vec3 c = w.humans[0].position + Vec3(0, 0, 1);
    for (int k = 0; k < 4; ++k) {
      const double a = u(rng) * std::numbers::pi / 2 + k * std::numbers::pi / 2;
      w.cameras.push_back(camera_at(k, c + Vec3(4 * std::cos(a), 4 * std::sin(a), 1.5), c));
    }
    auto packets = packets_for(w, {0.0, 4}, trial);
    for (CameraMask m : {0b0011u, 0b0101u, 0b1110u, 0b1111u}) {
      auto est = reconstruct_human(packets, m, 0, {});
      ASSERT_TRUE(est.reconstructed);
      int valid = 0;
      double err = 0.0;
      const auto truth = world::skeleton_of(w.humans[0]);
      for (int j = 0; j < geometry::kNumJoints; ++j)
        if (est.joint_valid[j]) {
          ++valid;
          err += (est.skeleton.joints[j] - truth.joints[j]).norm();
        }
      ASSERT_GT(valid, 0);
      EXPECT_LT(1000.0 * err / valid, 1.0);
    }
  }
}

TEST(Observation, LengthAndSelfSlot) {
  ObservationLayout layout;
  EXPECT_EQ(layout.size(), 3 * 9 + 7 * 18);
  auto w = scene({human(0, {0, 0, 0})}, triangle());
  auto packets = packets_for(w, {2.0, 4}, 1);
  auto recon = reconstruct(packets, full_mask(3), {});
  for (int agent = 0; agent < 3; ++agent) {
    auto obs = assemble_observation(agent, packets, recon, 0, layout);
    ASSERT_EQ(static_cast<int>(obs.size()), layout.size());
    EXPECT_EQ(obs[7], 1.0);
    EXPECT_EQ(obs[9 + 7], 0.0);
    EXPECT_EQ(obs[18 + 7], 0.0);
    EXPECT_NEAR(obs[0], packets[agent].pose.position.x() / 10.0, 1e-15);
    for (double v : obs) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Observation, NoPedestriansMeansZeroPedestrianSlots) {
  ObservationLayout layout;
  auto w = scene({human(0, {0, 0, 0})}, triangle());
  auto packets = packets_for(w, {2.0, 4}, 1);
  auto recon = reconstruct(packets, full_mask(3), {});
  auto obs = assemble_observation(0, packets, recon, 0, layout);
  for (int i = layout.human_offset(1); i < layout.size(); ++i) EXPECT_EQ(obs[i], 0.0);
  EXPECT_EQ(obs[layout.human_offset(0) + human_field::kIsTarget], 1.0);
}

TEST(Observation, LocalPositionGolden) {
  // Camera at (0,0,3) looking +x, target estimate at (2,3,0). Optical frame:
  // right = -y, down = -z, forward = +x, so local = (-3, 3, 2) / 10.
  ObservationLayout layout;
  AgentPacket self{0, {Vec3(0, 0, 3), 0.0, 0.0}, {}, {}};
  std::vector<AgentPacket> packets{self};
  ReconstructionResult recon;
  HumanEstimate est;
  est.human_id = 0;
  est.reconstructed = true;
  est.position = Vec3(2, 3, 0);
  est.yaw = std::numbers::pi / 2;
  recon.humans.push_back(est);
  auto obs = assemble_observation(0, packets, recon, 0, layout);
  const int h = layout.human_offset(0);
  EXPECT_NEAR(obs[h + human_field::kLocalPos + 0], -0.3, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kLocalPos + 1], 0.3, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kLocalPos + 2], 0.2, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kWorldPos + 0], 0.2, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kWorldPos + 1], 0.3, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kWorldYaw + 0], 1.0, 1e-15);
  EXPECT_NEAR(obs[h + human_field::kLocalYaw + 0], 1.0, 1e-15);
  EXPECT_EQ(obs[h + human_field::kVisible], 0.0);
}

TEST(Observation, PedestrianRelabelPermutesOnlyPedestrianSlots) {
  auto cams = triangle();
  auto base = scene({human(0, {0, 0, 0}), human(1, {1.5, 1.0, 0}), human(2, {-1.0, -1.5, 0})}, cams);
  auto swapped = base;
  swapped.humans[1].id = 2;
  swapped.humans[2].id = 1;
  ObservationLayout layout;
  auto pa = packets_for(base, {0.0, 4}, 1);
  auto pb = packets_for(swapped, {0.0, 4}, 1);
  auto oa = assemble_observation(0, pa, reconstruct(pa, full_mask(3), {}), 0, layout);
  auto ob = assemble_observation(0, pb, reconstruct(pb, full_mask(3), {}), 0, layout);
  const int ped = layout.human_offset(1);
  for (int i = 0; i < ped; ++i) EXPECT_EQ(oa[i], ob[i]);
  for (int k = 0; k < kHumanSlotSize; ++k) {
    EXPECT_EQ(oa[layout.human_offset(1) + k], ob[layout.human_offset(2) + k]);
    EXPECT_EQ(oa[layout.human_offset(2) + k], ob[layout.human_offset(1) + k]);
  }
}
