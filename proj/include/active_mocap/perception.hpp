#pragma once

// Synthetic perception: noisy 2D keypoints with geometric occlusion, oracle
// identities, lossless broadcast, per-joint triangulation and the fixed-layout
// observation vector consumed by the policy.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "active_mocap/geometry.hpp"
#include "active_mocap/world.hpp"

namespace active_mocap::perception {

using geometry::Detection2D;
using geometry::Skeleton3D;
using geometry::Vec3;

inline constexpr int kCameraSlotSize = 9;
inline constexpr int kHumanSlotSize = 18;

struct PerceptionConfig {
  double noise_sigma = 2.0;     // pixels
  int min_visible_joints = 4;   // fewer visible joints -> no detection
};

struct HumanDetection {
  int human_id = 0;
  Detection2D detection;
};

struct AgentPacket {
  int sender_id = 0;
  geometry::CameraPose pose;
  geometry::CameraIntrinsics intrinsics;
  std::vector<HumanDetection> detections;

  const HumanDetection* find(int human_id) const;
};

enum class TriangulationMethod { kDlt, kRansac };

struct ReconstructionOptions {
  TriangulationMethod method = TriangulationMethod::kDlt;
  geometry::RansacOptions ransac{};
  uint64_t ransac_seed = 0;
};

struct HumanEstimate {
  int human_id = 0;
  bool reconstructed = false;
  Skeleton3D skeleton;                       // missing joints left at zero
  std::array<bool, geometry::kNumJoints> joint_valid{};
  Vec3 position = Vec3::Zero();              // median of valid joints
  std::optional<double> yaw;                 // needs both shoulders and hips
  std::vector<int> cameras;                  // ids that contributed views
};

struct ReconstructionResult {
  std::vector<HumanEstimate> humans;  // sorted by id

  const HumanEstimate* find(int human_id) const;
};

// Camera subset as a bitmask over camera ids (bit i <-> id i).
using CameraMask = uint32_t;

inline CameraMask full_mask(int n) { return n >= 32 ? ~0u : ((1u << n) - 1u); }

std::vector<HumanDetection> detect(const world::CameraAgentState& camera,
                                   const world::WorldState& world,
                                   const PerceptionConfig& cfg, std::mt19937_64& rng);

AgentPacket make_packet(const world::CameraAgentState& camera,
                        std::vector<HumanDetection> detections);

// Triangulates every human seen by at least two cameras of `subset`.
ReconstructionResult reconstruct(std::span<const AgentPacket> packets, CameraMask subset,
                                 const ReconstructionOptions& opts);

// Reconstruction of a single human; cheaper when only the target matters.
HumanEstimate reconstruct_human(std::span<const AgentPacket> packets, CameraMask subset,
                                int human_id, const ReconstructionOptions& opts);

// Yaw of the body from the shoulder line crossed with the spine.
std::optional<double> body_yaw(const Skeleton3D& s,
                               const std::array<bool, geometry::kNumJoints>& valid);

struct ObservationLayout {
  int max_cameras = 3;
  int max_humans = 7;
  double arena_size = 10.0;

  int size() const { return max_cameras * kCameraSlotSize + max_humans * kHumanSlotSize; }
  int human_offset(int slot) const {
    return max_cameras * kCameraSlotSize + slot * kHumanSlotSize;
  }
};

// Offsets inside a human slot.
namespace human_field {
inline constexpr int kBbox = 0;         // 4
inline constexpr int kLocalPos = 4;     // 3
inline constexpr int kWorldPos = 7;     // 3
inline constexpr int kLocalYaw = 10;    // sin, cos
inline constexpr int kWorldYaw = 12;    // sin, cos
inline constexpr int kVisible = 14;
inline constexpr int kIsTarget = 15;
inline constexpr int kJointFraction = 16;
inline constexpr int kConfidence = 17;
}  // namespace human_field

// Human ids in slot order: target first, then pedestrians by id. Only humans
// that the team reconstructed or the agent itself detects are listed.
std::vector<int> human_slot_order(int agent_id, std::span<const AgentPacket> packets,
                                  const ReconstructionResult& recon, int target_id,
                                  int max_humans);

std::vector<double> assemble_observation(int agent_id, std::span<const AgentPacket> packets,
                                         const ReconstructionResult& recon, int target_id,
                                         const ObservationLayout& layout);

}  // namespace active_mocap::perception
