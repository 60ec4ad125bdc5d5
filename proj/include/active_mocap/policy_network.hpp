#pragma once

// Shared-weight camera policy: observation encoder, recurrent cell, the five
// world-dynamics mixture heads, target-feature projector, factored actor and
// centralized critic.
//
// Batches are grouped by joint step: row g*num_agents + i holds agent i of
// group g. The critic of each row reads the encoder features of every agent
// in its group.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "active_mocap/neural.hpp"

namespace active_mocap::neural {

struct ModelConfig {
  int max_cameras = 3;
  int max_humans = 7;
  int num_agents = 3;
  int num_factors = 3;  // 3 translation factors, 5 when pitch/yaw are learned
  int hidden = 128;
  std::vector<int> encoder_layers{128, 128, 128};
  std::vector<int> mdn_layers{128, 128};
  int mdn_components = 16;
  std::vector<int> actor_layers{128};
  std::vector<int> critic_layers{128};
  int projector_size = 128;
  double actor_output_gain = 0.01;
  uint64_t init_seed = 0;

  int obs_size() const;
  int action_width() const { return 3 * num_factors; }
  // Stable textual form used for the checkpoint config hash.
  std::string canonical() const;
  uint64_t hash() const;
};

// FNV-1a, 64 bit.
uint64_t fnv1a(const std::string& s);

struct PolicyForward {
  Matrix z;          // B x H encoder features
  Matrix h;          // B x H new recurrent state
  Matrix tgt_raw;    // B x mixture size, target-position mixture
  Matrix logits;     // B x 3F
  Matrix probs;      // B x 3F, per-factor softmax
  Matrix value;      // B x 1
  // Filled only when world-dynamics heads are requested.
  Matrix self_raw;    // B x mixture size
  Matrix reward_raw;  // B x 1-D mixture size
  Matrix peer_raw;    // P x mixture size, one row per present peer
  Matrix pd_raw;      // Q x mixture size, one row per present pedestrian
  std::vector<std::pair<int, int>> peer_index;  // (row, camera slot) of each peer row
  std::vector<std::pair<int, int>> pd_index;    // (row, human slot) of each pedestrian row
};

// Upstream gradients; empty matrices mean "no loss on this output".
struct PolicyGrads {
  Matrix logits, value, tgt_raw, self_raw, reward_raw, peer_raw, pd_raw;
};

class PolicyNetwork {
 public:
  struct Cache;

  explicit PolicyNetwork(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  int64_t parameter_count() const { return store_.count(); }
  const MixtureSpec& planar_spec() const { return planar_; }
  const MixtureSpec& reward_spec() const { return scalar_; }

  // `actions` (B x 3F one-hot) is required when `with_wdl` is set.
  PolicyForward forward(const Matrix& obs, const Matrix& hidden, const Matrix* actions,
                        bool with_wdl, Cache* cache) const;

  // Accumulates parameter gradients. Returns d(loss)/d(hidden input).
  Matrix backward(const Cache& cache, const PolicyGrads& grads);

  void save(const std::string& path) const;
  // Throws CheckpointVersionMismatch, ConfigMismatch or CheckpointError.
  void load(const std::string& path);

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  MixtureSpec planar_, scalar_;
  Mlp encoder_;
  GruCell gru_;
  Mlp self_mdn_, reward_mdn_, peer_mdn_, tgt_mdn_, pd_mdn_;
  Mlp projector_;
  Mlp actor_;
  Mlp critic_;
};

struct PolicyNetwork::Cache {
  bool valid = false;
  bool with_wdl = false;
  int rows = 0;
  Mlp::Cache encoder, self_mdn, reward_mdn, peer_mdn, tgt_mdn, pd_mdn, projector, actor, critic;
  GruCell::Cache gru;
  Matrix tgt_processed;
  PolicyForward out;
};

inline constexpr uint32_t kCheckpointVersion = 1;

}  // namespace active_mocap::neural
