#pragma once

// Team reconstruction reward and its Shapley-value split across cameras
// (Collaborative Triangulation Contribution Reward).

#include <span>
#include <vector>

#include "active_mocap/perception.hpp"

namespace active_mocap::reward {

using perception::AgentPacket;
using perception::CameraMask;

inline constexpr int kMaxTeamSize = 12;

// r(S) for every subset S of an n-camera team; entry `mask` holds r of the
// cameras whose bits are set. Bit i refers to the i-th packet.
struct CoalitionRewardTable {
  int n = 0;
  std::vector<double> values;

  CoalitionRewardTable() = default;
  // Throws TeamTooLarge for n > kMaxTeamSize.
  explicit CoalitionRewardTable(int team_size);

  double& operator[](CameraMask m) { return values[m]; }
  double operator[](CameraMask m) const { return values[m]; }
  double full() const { return values.back(); }
};

struct TeamRewardOptions {
  double geman_mcclure_scale_mm = geometry::kGemanMcClureScaleMm;
  perception::ReconstructionOptions reconstruction{};
};

// 1 - GemanMcClure(MPJPE) of the target reconstructed from `subset`; 0 for
// |subset| <= 1 or when the subset reconstructs no target joint. Joints the
// subset cannot triangulate are taken from `fallback` when given, otherwise
// the error is averaged over the triangulated joints only.
double team_reward(CameraMask subset, std::span<const AgentPacket> packets,
                   int target_id, const geometry::Skeleton3D& truth,
                   const geometry::Skeleton3D* fallback, const TeamRewardOptions& opts);

// Evaluates team_reward on all 2^n subsets, with subset bit i mapped to
// packets[i].sender_id.
CoalitionRewardTable coalition_table(std::span<const AgentPacket> packets, int target_id,
                                     const geometry::Skeleton3D& truth,
                                     const geometry::Skeleton3D* fallback,
                                     const TeamRewardOptions& opts);

// Shapley value of each player.
std::vector<double> shapley(const CoalitionRewardTable& table);

// n * Shapley value, so that the mean over cameras equals r(full team).
std::vector<double> ctcr(const CoalitionRewardTable& table);

}  // namespace active_mocap::reward
