#include "active_mocap/action_distribution.hpp"

#include <cmath>
#include <limits>

#include "active_mocap/safety.hpp"

namespace active_mocap::neural {

std::array<double, 27> ActionDistribution::translation_probs() const {
  if (translation_joint) return *translation_joint;
  std::array<double, 27> joint{};
  for (int c = 0; c < 27; ++c) {
    const auto lv = safety::combo_levels(c);
    joint[c] = factors[0][lv[0] + 1] * factors[1][lv[1] + 1] * factors[2][lv[2] + 1];
  }
  return joint;
}

double ActionDistribution::log_prob(const world::AgentAction& a) const {
  double lp = 0.0;
  if (translation_joint) {
    const double p = (*translation_joint)[safety::combo_index(
        a.translation[0], a.translation[1], a.translation[2])];
    lp += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  } else {
    for (int k = 0; k < 3; ++k) lp += std::log(factors[k][a.translation[k] + 1]);
  }
  for (size_t k = 3; k < factors.size(); ++k) lp += std::log(factors[k][a.rotation[k - 3] + 1]);
  return lp;
}

namespace {

template <size_t N>
int draw(const std::array<double, N>& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (size_t i = 0; i < N; ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

template <size_t N>
int argmax(const std::array<double, N>& p) {
  int best = 0;
  for (size_t i = 1; i < N; ++i)
    if (p[i] > p[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

world::AgentAction ActionDistribution::sample(std::mt19937_64& rng) const {
  world::AgentAction a;
  if (translation_joint) {
    const auto lv = safety::combo_levels(draw(*translation_joint, rng));
    for (int k = 0; k < 3; ++k) a.translation[k] = lv[k];
  } else {
    for (int k = 0; k < 3; ++k) a.translation[k] = index_to_level(draw(factors[k], rng));
  }
  for (size_t k = 3; k < factors.size(); ++k)
    a.rotation[k - 3] = index_to_level(draw(factors[k], rng));
  return a;
}

world::AgentAction ActionDistribution::mode() const {
  world::AgentAction a;
  if (translation_joint) {
    const auto lv = safety::combo_levels(argmax(*translation_joint));
    for (int k = 0; k < 3; ++k) a.translation[k] = lv[k];
  } else {
    for (int k = 0; k < 3; ++k) a.translation[k] = index_to_level(argmax(factors[k]));
  }
  for (size_t k = 3; k < factors.size(); ++k) a.rotation[k - 3] = index_to_level(argmax(factors[k]));
  return a;
}

}  // namespace active_mocap::neural
