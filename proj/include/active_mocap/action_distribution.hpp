#pragma once

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "active_mocap/world.hpp"

namespace active_mocap::neural {

// Factored categorical over the per-dimension levels {-1, 0, +1}. Factor k
// index 0/1/2 corresponds to level -1/0/+1. The first three factors are the
// translation axes; two more (pitch, yaw) exist when rotation is learned.
//
// When a translation mask has been applied the exact masked joint over the 27
// translation combinations is kept in `translation_joint` and sampling uses
// it; `factors` then hold its marginals.
struct ActionDistribution {
  std::vector<std::array<double, 3>> factors;
  std::optional<std::array<double, 27>> translation_joint;

  std::array<double, 27> translation_probs() const;
  double log_prob(const world::AgentAction& action) const;
  world::AgentAction sample(std::mt19937_64& rng) const;
  world::AgentAction mode() const;
};

inline int level_to_index(int level) { return level + 1; }
inline int index_to_level(int index) { return index - 1; }

}  // namespace active_mocap::neural
