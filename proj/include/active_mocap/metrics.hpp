#pragma once

// Evaluation: success rate, behaviour histograms and the episode runner
// that writes per-frame logs and a summary.

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "active_mocap/baselines.hpp"
#include "active_mocap/environment.hpp"
#include "active_mocap/policy_network.hpp"

namespace active_mocap::metrics {

// Fraction of frames with MPJPE <= tau. Throws EmptySeries.
double success_rate(std::span<const double> mpjpe_mm, double tau_mm);

struct Histogram {
  std::vector<double> edges;  // ascending, size = bins + 1
  std::vector<int64_t> counts;

  // Values below the first edge land in the first bin, values at or above
  // the last edge in the last bin, so the mass equals the sample count.
  static Histogram build(std::span<const double> values, std::vector<double> edges);
  static std::vector<double> uniform_edges(double lo, double hi, double width);
  int64_t total() const;
  std::string to_csv() const;
};

// Unit optical axis of a camera.
geometry::Vec3 optical_axis(const geometry::CameraPose& pose);

// For each camera, the smallest angle (degrees) between its optical axis
// and any other camera's.
std::vector<double> min_camera_angles(std::span<const geometry::CameraPose> poses);

struct FrameRecord {
  int episode = 0;
  int step = 0;
  std::vector<geometry::CameraPose> cameras;
  std::vector<geometry::Vec3> humans;  // feet positions, by id
  int target_id = 0;
  double mpjpe_mm = 0.0;
  double team_reward = 0.0;
  std::vector<double> ctcr;
  double min_camera_human_distance = 0.0;

  std::string to_json() const;
  static FrameRecord from_json(const std::string& line);
};

// Parses a frames.jsonl file; errors name the line.
std::vector<FrameRecord> read_frames(const std::string& path);

struct BehaviorEdges {
  std::vector<double> distance = Histogram::uniform_edges(0.0, 12.0, 0.25);  // metres
  std::vector<double> pitch = Histogram::uniform_edges(-90.0, 90.0, 5.0);    // degrees
  std::vector<double> min_angle = Histogram::uniform_edges(0.0, 180.0, 5.0); // degrees
};

struct BehaviorStats {
  Histogram distance;   // every camera, every frame: distance to the target body
  Histogram pitch;      // every camera, every frame; positive looks up
  Histogram min_angle;  // one sample per frame: mean over cameras of min angle
};

BehaviorStats behavior_stats(std::span<const FrameRecord> frames, const BehaviorEdges& edges = {});

// Decides every camera's action for one step.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // Cameras of a static policy never move.
  virtual bool static_cameras() const { return false; }
  virtual void reset(const marl::Environment& env) { (void)env; }
  virtual std::vector<world::AgentAction> act(const marl::Environment& env, std::mt19937_64& rng) = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

class FixedPolicy : public Policy {
 public:
  std::string name() const override { return "fixed"; }
  bool static_cameras() const override { return true; }
  std::vector<world::AgentAction> act(const marl::Environment& env, std::mt19937_64& rng) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<FixedPolicy>(*this); }
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  std::vector<world::AgentAction> act(const marl::Environment& env, std::mt19937_64& rng) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomPolicy>(*this); }
};

class RuleBasedPolicy : public Policy {
 public:
  explicit RuleBasedPolicy(baselines::RuleBasedConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "rulebased"; }
  std::vector<world::AgentAction> act(const marl::Environment& env, std::mt19937_64& rng) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RuleBasedPolicy>(*this); }

 private:
  baselines::RuleBasedConfig cfg_;
};

// Shared-weight network policy with per-camera recurrent state. Samples from
// the (masked) action distribution unless `greedy`.
class LearnedPolicy : public Policy {
 public:
  LearnedPolicy(std::shared_ptr<const neural::PolicyNetwork> net, bool greedy = false);
  std::string name() const override { return "learned"; }
  void reset(const marl::Environment& env) override;
  std::vector<world::AgentAction> act(const marl::Environment& env, std::mt19937_64& rng) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<LearnedPolicy>(*this); }

 private:
  std::shared_ptr<const neural::PolicyNetwork> net_;
  bool greedy_;
  neural::Matrix hidden_;
};

struct EvalOptions {
  int episodes = 1;
  double tau_mm = 200.0;
  uint64_t seed = 0;
  int threads = 0;
  std::string frames_path;   // empty: no frame log
  std::string summary_path;  // empty: no summary file
};

struct EvalSummary {
  std::string policy;
  int episodes = 0;
  int64_t frames = 0;
  double tau_mm = 200.0;
  double mean_mpjpe_mm = 0.0;
  double success_rate = 0.0;
  double mean_team_reward = 0.0;
  double min_camera_human_distance = 0.0;   // over all frames
  double mean_min_camera_human_distance = 0.0;
  std::vector<double> episode_mpjpe_mm;

  std::string to_json() const;
};

// Runs `episodes` episodes, each in a fresh environment seeded from
// (seed, episode index). Throws ConfigMismatch when a learned policy's
// network does not fit the environment.
EvalSummary evaluate(const Policy& policy, const marl::EnvConfig& env, const EvalOptions& opts,
                     std::vector<FrameRecord>* frames_out = nullptr);

}  // namespace active_mocap::metrics
