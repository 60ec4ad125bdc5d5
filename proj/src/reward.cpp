#include "active_mocap/reward.hpp"

#include <bit>

#include "active_mocap/errors.hpp"

namespace active_mocap::reward {

CoalitionRewardTable::CoalitionRewardTable(int team_size) : n(team_size) {
  if (team_size > kMaxTeamSize)
    throw TeamTooLarge("team of " + std::to_string(team_size) +
                       " exceeds exact enumeration cap of " + std::to_string(kMaxTeamSize));
  if (team_size < 0) throw Error("negative team size");
  values.assign(size_t{1} << team_size, 0.0);
}

double team_reward(CameraMask subset, std::span<const AgentPacket> packets,
                   int target_id, const geometry::Skeleton3D& truth,
                   const geometry::Skeleton3D* fallback, const TeamRewardOptions& opts) {
  if (std::popcount(subset) <= 1) return 0.0;
  const auto est = perception::reconstruct_human(packets, subset, target_id, opts.reconstruction);
  if (!est.reconstructed) return 0.0;
  double err_mm;
  if (fallback) {
    geometry::Skeleton3D filled = est.skeleton;
    for (int j = 0; j < geometry::kNumJoints; ++j)
      if (!est.joint_valid[j]) filled.joints[j] = fallback->joints[j];
    err_mm = geometry::mpjpe(filled, truth);
  } else {
    double sum = 0.0;
    int count = 0;
    for (int j = 0; j < geometry::kNumJoints; ++j) {
      if (!est.joint_valid[j]) continue;
      sum += (est.skeleton.joints[j] - truth.joints[j]).norm();
      ++count;
    }
    err_mm = 1000.0 * sum / count;
  }
  return 1.0 - geometry::geman_mcclure(err_mm, opts.geman_mcclure_scale_mm);
}

CoalitionRewardTable coalition_table(std::span<const AgentPacket> packets, int target_id,
                                     const geometry::Skeleton3D& truth,
                                     const geometry::Skeleton3D* fallback,
                                     const TeamRewardOptions& opts) {
  const int n = static_cast<int>(packets.size());
  CoalitionRewardTable table(n);
  for (CameraMask m = 0; m < table.values.size(); ++m) {
    if (std::popcount(m) <= 1) continue;
    CameraMask ids = 0;
    for (int i = 0; i < n; ++i)
      if (m & (1u << i)) ids |= 1u << packets[i].sender_id;
    table[m] = team_reward(ids, packets, target_id, truth, fallback, opts);
  }
  return table;
}

std::vector<double> shapley(const CoalitionRewardTable& table) {
  const int n = table.n;
  if (n > kMaxTeamSize) throw TeamTooLarge("team of " + std::to_string(n));
  if (table.values.size() != (size_t{1} << n))
    throw Error("coalition table does not cover all subsets");
  // weight[s] = s! (n - s - 1)! / n!
  // Factorials up to 12! are exact in double, so each weight is one rounding.
  std::vector<double> fact(n + 1, 1.0);
  for (int k = 1; k <= n; ++k) fact[k] = fact[k - 1] * k;
  std::vector<double> weight(n > 0 ? n : 1, 0.0);
  for (int s = 0; s < n; ++s) weight[s] = fact[s] * fact[n - s - 1] / fact[n];
  std::vector<double> phi(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const CameraMask bit = 1u << i;
    double acc = 0.0;
    for (CameraMask s = 0; s < table.values.size(); ++s) {
      if (s & bit) continue;
      acc += weight[std::popcount(s)] * (table[s | bit] - table[s]);
    }
    phi[i] = acc;
  }
  return phi;
}

std::vector<double> ctcr(const CoalitionRewardTable& table) {
  auto phi = shapley(table);
  for (auto& v : phi) v *= table.n;
  return phi;
}

}  // namespace active_mocap::reward
