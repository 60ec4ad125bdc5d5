#include "active_mocap/marl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "active_mocap/errors.hpp"
#include "active_mocap/seeding.hpp"
#include "json.hpp"

namespace active_mocap::marl {

using neural::RowVector;
using neural::Vector;

double LrSchedule::at(double step) const {
  if (points.empty()) throw ConfigError("empty learning-rate schedule");
  if (step < points.front().first) return points.front().second;
  // Last point at or before `step`; a duplicate step resolves to the later entry.
  size_t k = 0;
  for (size_t i = 0; i < points.size(); ++i)
    if (points[i].first <= step) k = i;
  if (k + 1 >= points.size()) return points.back().second;
  const auto [x0, y0] = points[k];
  const auto [x1, y1] = points[k + 1];
  if (x1 <= x0) return y1;
  return y0 + (y1 - y0) * (step - x0) / (x1 - x0);
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.rollouts = 28;
  c.batch = 700;
  c.minibatch = 350;
  c.total_steps = 700000;
  return c;
}

int TrainConfig::iterations() const {
  return batch > 0 ? static_cast<int>(total_steps / batch) : 0;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (fragment < 1 || rollouts < 1) fail("fragment and rollouts must be positive");
  if (batch != fragment * rollouts)
    fail("train batch " + std::to_string(batch) + " must equal rollouts * fragment = " +
         std::to_string(rollouts * fragment));
  if (minibatch < 1 || batch % minibatch != 0)
    fail("minibatch " + std::to_string(minibatch) + " must divide batch " + std::to_string(batch));
  if (sgd_iters < 1) fail("sgd_iters must be positive");
  for (double c : {gamma, gae_lambda, clip, ppo_coef, kl_coef, kl_target, entropy_coef, value_coef,
                   value_clip, grad_clip, wdl_coef, wdl.self, wdl.peer, wdl.reward, wdl.target,
                   wdl.pedestrian})
    if (!(c >= 0.0)) fail("coefficients must be non-negative");
  if (gamma > 1.0 || gae_lambda > 1.0) fail("gamma and lambda must lie in [0, 1]");
  if (lr.points.empty()) fail("learning-rate schedule is empty");
  for (size_t i = 1; i < lr.points.size(); ++i)
    if (lr.points[i].first < lr.points[i - 1].first) fail("learning-rate schedule must be sorted");
  if (total_steps < 0) fail("total_steps must be non-negative");
}

int worker_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ACTIVE_MOCAP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double bootstrap, double gamma, double lambda,
                        std::span<const uint8_t> dones) {
  const size_t T = rewards.size();
  if (values.size() != T || (!dones.empty() && dones.size() != T))
    throw ShapeMismatch("gae series lengths differ");
  std::vector<double> adv(T);
  double running = 0.0;
  for (size_t k = T; k-- > 0;) {
    const bool done = !dones.empty() && dones[k];
    const double next = done ? 0.0 : (k + 1 == T ? bootstrap : values[k + 1]);
    const double delta = rewards[k] + gamma * next - values[k];
    running = delta + (done ? 0.0 : gamma * lambda * running);
    adv[k] = running;
  }
  return adv;
}

TrainingBatch TrainingBatch::select(std::span<const int> group_ids) const {
  TrainingBatch b;
  b.num_agents = num_agents;
  b.groups = static_cast<int>(group_ids.size());
  const int R = b.rows();
  b.obs.resize(R, obs.cols());
  b.hidden.resize(R, hidden.cols());
  b.actions.resize(R, actions.cols());
  b.old_probs.resize(R, old_probs.cols());
  b.logp_old.resize(R);
  b.value_old.resize(R);
  b.advantages.resize(R);
  b.value_targets.resize(R);
  b.team_rewards.resize(R);
  for (int g = 0; g < b.groups; ++g)
    for (int i = 0; i < num_agents; ++i) {
      const int dst = g * num_agents + i, src = group_ids[g] * num_agents + i;
      b.obs.row(dst) = obs.row(src);
      b.hidden.row(dst) = hidden.row(src);
      b.actions.row(dst) = actions.row(src);
      b.old_probs.row(dst) = old_probs.row(src);
      b.logp_old(dst) = logp_old(src);
      b.value_old(dst) = value_old(src);
      b.advantages(dst) = advantages(src);
      b.value_targets(dst) = value_targets(src);
      b.team_rewards(dst) = team_rewards(src);
      b.masks.push_back(masks[src]);
      b.labels.push_back(labels[src]);
    }
  return b;
}

RolloutWorkers::RolloutWorkers(const EnvConfig& cfg, int count, uint64_t seed, int hidden_size) {
  for (int e = 0; e < count; ++e) {
    envs.emplace_back(cfg, mix_seed(seed, 100 + e));
    hidden.push_back(Matrix::Zero(envs.back().num_agents(), hidden_size));
    prev_actions.emplace_back(envs.back().num_agents());
    rngs.emplace_back(mix_seed(seed, 200 + e));
  }
}

neural::ActionDistribution policy_distribution(const Matrix& probs, int row, int num_factors) {
  neural::ActionDistribution d;
  d.factors.resize(num_factors);
  for (int f = 0; f < num_factors; ++f)
    for (int k = 0; k < 3; ++k) d.factors[f][k] = probs(row, 3 * f + k);
  return d;
}

namespace {

std::vector<double> state_summary(const world::WorldState& s) {
  std::vector<double> out;
  for (const auto& c : s.cameras)
    out.insert(out.end(), {c.pose.position.x(), c.pose.position.y(), c.pose.position.z(),
                           c.pose.pitch, c.pose.yaw});
  for (const auto& h : s.humans) out.insert(out.end(), {h.position.x(), h.position.y()});
  return out;
}

}  // namespace

Rollout collect_rollouts(RolloutWorkers& workers, const neural::PolicyNetwork& net,
                         const TrainConfig& cfg) {
  const int E = static_cast<int>(workers.envs.size());
  if (E == 0) throw ConfigError("no rollout workers");
  const int n = workers.envs[0].num_agents();
  const int T = cfg.fragment;
  const int F = net.config().num_factors;
  const int H = net.config().hidden;
  const int threads = worker_threads(cfg.threads);
  const bool masking = workers.envs[0].config().safety.mode == safety::SafetyMode::kMask;

  Rollout out;
  out.transitions.resize(static_cast<size_t>(E) * T * n);
  auto at = [&](int e, int t, int i) -> Transition& { return out.transitions[(e * T + t) * n + i]; };
  std::vector<double> mpjpe_sum(E, 0.0), team_sum(E, 0.0), agent_sum(E, 0.0), dist_sum(E, 0.0);
  std::vector<int> finished(E, 0);

  for (int t = 0; t < T; ++t) {
    Matrix obs(E * n, net.config().obs_size()), hidden(E * n, H);
    for (int e = 0; e < E; ++e) {
      const auto& o = workers.envs[e].observations();
      for (int i = 0; i < n; ++i) {
        for (size_t c = 0; c < o[i].size(); ++c) obs(e * n + i, c) = o[i][c];
        hidden.row(e * n + i) = workers.hidden[e].row(i);
      }
    }
    const auto fwd = net.forward(obs, hidden, nullptr, false, nullptr);

    std::vector<std::vector<world::AgentAction>> executed(E, std::vector<world::AgentAction>(n));
    for (int e = 0; e < E; ++e) {
      auto& env = workers.envs[e];
      for (int i = 0; i < n; ++i) {
        const int row = e * n + i;
        auto dist = policy_distribution(fwd.probs, row, F);
        Transition& tr = at(e, t, i);
        tr.old_probs.resize(3 * F);
        for (int k = 0; k < 3 * F; ++k) tr.old_probs[k] = fwd.probs(row, k);
        bool unsafe_everywhere = false;
        if (masking) {
          const auto safe = env.safe_translations(i);
          if (std::any_of(safe.begin(), safe.end(), [](bool b) { return b; })) {
            dist = safety::action_mask(dist, safe);
            tr.mask = safe;
          } else {
            unsafe_everywhere = true;
          }
        }
        tr.action = dist.sample(workers.rngs[e]);
        tr.logp = dist.log_prob(tr.action);
        tr.value = fwd.value(row, 0);
        tr.obs = env.observations()[i];
        tr.hidden_prev.assign(H, 0.0);
        for (int k = 0; k < H; ++k) tr.hidden_prev[k] = hidden(row, k);
        tr.prev_joint_action = workers.prev_actions[e];
        tr.state_summary = state_summary(env.state());
        executed[e][i] = tr.action;
        if (unsafe_everywhere) {
          const auto obstacles = safety::obstacles_for(env.state(), i);
          const auto& sc = env.config().safety;
          executed[e][i] = safety::oca_filter(tr.action, env.state().cameras[i].pose, obstacles,
                                              sc.range, sc.reverse_magnitude);
        }
      }
    }

    std::vector<StepResult> results(E);
    parallel_for(E, threads, [&](int e) {
      results[e] = workers.envs[e].step(executed[e]);
      if (results[e].done) workers.envs[e].reset();
    });

    for (int e = 0; e < E; ++e) {
      const auto& r = results[e];
      for (int i = 0; i < n; ++i) {
        Transition& tr = at(e, t, i);
        tr.next_obs = r.obs[i];
        tr.reward = r.rewards[i];
        tr.team_reward = r.team_reward;
        tr.labels = r.labels[i];
        tr.done = r.done;
        agent_sum[e] += r.rewards[i] / n;
      }
      mpjpe_sum[e] += r.mpjpe_mm;
      team_sum[e] += r.team_reward;
      dist_sum[e] += r.min_camera_human_distance;
      for (int i = 0; i < n; ++i) workers.hidden[e].row(i) = fwd.h.row(e * n + i);
      workers.prev_actions[e] = executed[e];
      if (r.done) {
        workers.hidden[e].setZero();
        workers.prev_actions[e].assign(n, world::AgentAction{});
        ++finished[e];
      }
    }
  }

  // Bootstrap values for fragments that did not end an episode.
  Matrix obs(E * n, net.config().obs_size()), hidden(E * n, H);
  for (int e = 0; e < E; ++e) {
    const auto& o = workers.envs[e].observations();
    for (int i = 0; i < n; ++i) {
      for (size_t c = 0; c < o[i].size(); ++c) obs(e * n + i, c) = o[i][c];
      hidden.row(e * n + i) = workers.hidden[e].row(i);
    }
  }
  const Matrix boot = net.forward(obs, hidden, nullptr, false, nullptr).value;

  auto& b = out.batch;
  b.num_agents = n;
  b.groups = E * T;
  const int R = b.rows();
  b.obs.resize(R, net.config().obs_size());
  b.hidden.resize(R, H);
  b.actions = Matrix::Zero(R, 3 * F);
  b.old_probs.resize(R, 3 * F);
  b.logp_old.resize(R);
  b.value_old.resize(R);
  b.advantages.resize(R);
  b.value_targets.resize(R);
  b.team_rewards.resize(R);
  b.masks.resize(R);
  b.labels.resize(R);
  for (int e = 0; e < E; ++e)
    for (int i = 0; i < n; ++i) {
      std::vector<double> rew(T), team(T), val(T);
      std::vector<uint8_t> dones(T);
      for (int t = 0; t < T; ++t) {
        const auto& tr = at(e, t, i);
        rew[t] = tr.reward;
        team[t] = tr.team_reward;
        val[t] = tr.value;
        dones[t] = tr.done;
      }
      const double bootstrap = boot(e * n + i, 0);
      const auto adv = gae(rew, val, bootstrap, cfg.gamma, cfg.gae_lambda, dones);
      const auto critic_adv =
          cfg.critic_team_reward ? gae(team, val, bootstrap, cfg.gamma, cfg.gae_lambda, dones) : adv;
      for (int t = 0; t < T; ++t) {
        const auto& tr = at(e, t, i);
        const int row = (e * T + t) * n + i;
        for (size_t c = 0; c < tr.obs.size(); ++c) b.obs(row, c) = tr.obs[c];
        for (int c = 0; c < H; ++c) b.hidden(row, c) = tr.hidden_prev[c];
        for (int k = 0; k < 3; ++k) b.actions(row, 3 * k + tr.action.translation[k] + 1) = 1.0;
        for (int k = 3; k < F; ++k) b.actions(row, 3 * k + tr.action.rotation[k - 3] + 1) = 1.0;
        for (int c = 0; c < 3 * F; ++c) b.old_probs(row, c) = tr.old_probs[c];
        b.logp_old(row) = tr.logp;
        b.value_old(row) = tr.value;
        b.advantages(row) = adv[t];
        b.value_targets(row) = critic_adv[t] + val[t];
        b.team_rewards(row) = tr.team_reward;
        b.masks[row] = tr.mask;
        b.labels[row] = tr.labels;
      }
    }

  const double steps = static_cast<double>(E) * T;
  for (int e = 0; e < E; ++e) {
    out.stats.mean_mpjpe_mm += mpjpe_sum[e] / steps;
    out.stats.mean_team_reward += team_sum[e] / steps;
    out.stats.mean_agent_reward += agent_sum[e] / steps;
    out.stats.mean_min_distance += dist_sum[e] / steps;
    out.stats.episodes_finished += finished[e];
  }
  return out;
}

double update_kl_coef(double coef, double measured_kl, double target) {
  if (measured_kl > 2.0 * target) return coef * 2.0;
  if (measured_kl < 0.5 * target) return coef * 0.5;
  return coef;
}

namespace {

std::array<double, 27> joint_of(const double* p) {
  std::array<double, 27> j{};
  for (int c = 0; c < 27; ++c) {
    const auto lv = safety::combo_levels(c);
    j[c] = p[lv[0] + 1] * p[3 + lv[1] + 1] * p[6 + lv[2] + 1];
  }
  return j;
}

// Masked, renormalized joint; uniform over the safe set if all mass vanished.
std::array<double, 27> masked(std::array<double, 27> j, const safety::TranslationMask& safe) {
  double z = 0.0;
  int count = 0;
  for (int c = 0; c < 27; ++c) {
    if (!safe[c]) j[c] = 0.0;
    z += j[c];
    count += safe[c];
  }
  for (int c = 0; c < 27; ++c) j[c] = z > 0.0 ? j[c] / z : (safe[c] ? 1.0 / count : 0.0);
  return j;
}

std::array<double, 9> marginals(const std::array<double, 27>& j) {
  std::array<double, 9> m{};
  for (int c = 0; c < 27; ++c) {
    const auto lv = safety::combo_levels(c);
    for (int k = 0; k < 3; ++k) m[3 * k + lv[k] + 1] += j[c];
  }
  return m;
}

}  // namespace

PolicyTerms policy_terms(const double* p_new, const double* p_old, const double* onehot, int F,
                         const std::optional<safety::TranslationMask>& mask) {
  PolicyTerms r;
  r.dlogp.assign(3 * F, 0.0);
  r.dkl.assign(3 * F, 0.0);
  r.dentropy.assign(3 * F, 0.0);
  int first_free = 0;
  if (mask) {
    const auto q_new = masked(joint_of(p_new), *mask);
    const auto q_old = masked(joint_of(p_old), *mask);
    int chosen = 0;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        if (onehot[3 * k + l] > 0.5) chosen += (k == 0 ? 9 : k == 1 ? 3 : 1) * l;
    r.logp += std::log(std::max(q_new[chosen], 1e-300));
    for (int c = 0; c < 27; ++c)
      if (q_old[c] > 0.0) r.kl += q_old[c] * (std::log(q_old[c]) - std::log(std::max(q_new[c], 1e-300)));
    const auto m_new = marginals(q_new), m_old = marginals(q_old);
    for (int k = 0; k < 9; ++k) {
      r.dlogp[k] = onehot[k] - m_new[k];
      r.dkl[k] = m_new[k] - m_old[k];
    }
    first_free = 3;
  }
  for (int f = first_free; f < F; ++f) {
    for (int k = 0; k < 3; ++k) {
      const int c = 3 * f + k;
      if (onehot[c] > 0.5) r.logp += std::log(std::max(p_new[c], 1e-300));
      r.dlogp[c] = onehot[c] - p_new[c];
      if (p_old[c] > 0.0) r.kl += p_old[c] * (std::log(p_old[c]) - std::log(std::max(p_new[c], 1e-300)));
      r.dkl[c] = p_new[c] - p_old[c];
    }
  }
  // Entropy of the unmasked factors.
  for (int f = 0; f < F; ++f) {
    double h = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double p = p_new[3 * f + k];
      if (p > 0.0) h -= p * std::log(p);
    }
    r.entropy += h;
    for (int k = 0; k < 3; ++k) {
      const double p = p_new[3 * f + k];
      r.dentropy[3 * f + k] = p > 0.0 ? -p * (std::log(p) + h) : 0.0;
    }
  }
  return r;
}

EpochStats train_epoch(const TrainingBatch& full, neural::PolicyNetwork& net, neural::Adam& opt,
                       TrainerState& state, const TrainConfig& cfg) {
  const int F = net.config().num_factors;
  const int groups_per_mb = cfg.minibatch;
  if (full.groups % groups_per_mb != 0)
    throw ShapeMismatch("minibatch " + std::to_string(groups_per_mb) + " does not divide " +
                        std::to_string(full.groups) + " joint steps");
  TrainingBatch batch = full;
  if (cfg.standardize_advantages && batch.rows() > 1) {
    const double mean = batch.advantages.mean();
    const double var = (batch.advantages.array() - mean).square().mean();
    batch.advantages = (batch.advantages.array() - mean) / (std::sqrt(var) + 1e-8);
  }
  const double lr = cfg.lr.at(static_cast<double>(state.env_steps));
  const auto& planar = net.planar_spec();
  const bool wdl = cfg.use_wdl && cfg.wdl_coef > 0.0;

  EpochStats s;
  int updates = 0;
  std::vector<int> order(batch.groups);
  for (int g = 0; g < batch.groups; ++g) order[g] = g;
  neural::PolicyNetwork::Cache cache;
  for (int it = 0; it < cfg.sgd_iters; ++it) {
    for (int g = batch.groups - 1; g > 0; --g) {
      const int j = static_cast<int>(state.rng() % static_cast<uint64_t>(g + 1));
      std::swap(order[g], order[j]);
    }
    for (int start = 0; start < batch.groups; start += groups_per_mb) {
      const auto mb = batch.select(std::span<const int>(order).subspan(start, groups_per_mb));
      const int B = mb.rows();
      const auto out = net.forward(mb.obs, mb.hidden, &mb.actions, wdl, &cache);

      neural::PolicyGrads g;
      g.logits = Matrix::Zero(B, 3 * F);
      g.value = Matrix::Zero(B, 1);
      double ppo = 0.0, kl = 0.0, ent = 0.0, vloss = 0.0;
      for (int r = 0; r < B; ++r) {
        const RowVector p_new = out.probs.row(r), p_old = mb.old_probs.row(r), a = mb.actions.row(r);
        const auto rp = policy_terms(p_new.data(), p_old.data(), a.data(), F, mb.masks[r]);
        const double ratio = std::exp(rp.logp - mb.logp_old(r));
        const double A = mb.advantages(r);
        const double s1 = ratio * A;
        const double s2 = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * A;
        ppo += std::min(s1, s2);
        const double dsurr = s1 <= s2 ? A * ratio : 0.0;  // d surrogate / d logp
        kl += rp.kl;
        ent += rp.entropy;
        for (int c = 0; c < 3 * F; ++c)
          g.logits(r, c) = (-cfg.ppo_coef * dsurr * rp.dlogp[c] + state.kl_coef * rp.dkl[c] -
                            cfg.entropy_coef * rp.dentropy[c]) / B;

        const double v = out.value(r, 0), R = mb.value_targets(r), v_old = mb.value_old(r);
        const double l1 = (v - R) * (v - R);
        const double vc = v_old + std::clamp(v - v_old, -cfg.value_clip, cfg.value_clip);
        const double l2 = (vc - R) * (vc - R);
        vloss += std::max(l1, l2);
        g.value(r, 0) = l1 >= l2 ? cfg.value_coef * 2.0 * (v - R) / B : 0.0;
      }
      ppo = -ppo / B;
      kl /= B;
      ent /= B;
      vloss /= B;
      double total = cfg.ppo_coef * ppo + cfg.value_coef * vloss + state.kl_coef * kl - cfg.entropy_coef * ent;

      double l_self = 0.0, l_rew = 0.0, l_peer = 0.0, l_tgt = 0.0, l_pd = 0.0;
      if (wdl) {
        const double w = cfg.wdl_coef;
        Matrix grad, labels(B, 2), rew(B, 1);
        for (int r = 0; r < B; ++r) labels.row(r) = mb.labels[r].self.transpose();
        l_self = neural::mdn_nll_batch(out.self_raw, labels, planar, &grad).mean();
        g.self_raw = grad * (w * cfg.wdl.self / B);
        for (int r = 0; r < B; ++r) labels.row(r) = mb.labels[r].target.transpose();
        l_tgt = neural::mdn_nll_batch(out.tgt_raw, labels, planar, &grad).mean();
        g.tgt_raw = grad * (w * cfg.wdl.target / B);
        rew.col(0) = mb.team_rewards;
        l_rew = neural::mdn_nll_batch(out.reward_raw, rew, net.reward_spec(), &grad).mean();
        g.reward_raw = grad * (w * cfg.wdl.reward / B);

        auto entity = [&](const Matrix& raw, const std::vector<std::pair<int, int>>& index,
                          bool cameras, double coef, Matrix& dst) {
          if (raw.rows() == 0) return 0.0;
          Matrix lab(raw.rows(), 2);
          std::vector<bool> keep(raw.rows());
          for (size_t k = 0; k < index.size(); ++k) {
            const auto& L = mb.labels[index[k].first];
            const int slot = index[k].second;
            const auto& present = cameras ? L.camera_present : L.human_present;
            const auto& xy = cameras ? L.cameras : L.humans;
            keep[k] = slot < static_cast<int>(present.size()) && present[slot];
            lab.row(k) = keep[k] ? Eigen::RowVector2d(xy[slot].transpose()) : Eigen::RowVector2d::Zero();
          }
          Matrix gr;
          const Vector nll = neural::mdn_nll_batch(raw, lab, planar, &gr);
          double sum = 0.0;
          int count = 0;
          for (Eigen::Index k = 0; k < raw.rows(); ++k) {
            if (keep[k]) {
              sum += nll(k);
              ++count;
            } else {
              gr.row(k).setZero();
            }
          }
          if (count == 0) return 0.0;
          dst = gr * (w * coef / count);
          return sum / count;
        };
        l_peer = entity(out.peer_raw, out.peer_index, true, cfg.wdl.peer, g.peer_raw);
        l_pd = entity(out.pd_raw, out.pd_index, false, cfg.wdl.pedestrian, g.pd_raw);
        total += w * (cfg.wdl.self * l_self + cfg.wdl.target * l_tgt + cfg.wdl.reward * l_rew +
                      cfg.wdl.peer * l_peer + cfg.wdl.pedestrian * l_pd);
      }

      if (!std::isfinite(total))
        throw NonFiniteLoss("sgd pass " + std::to_string(it) + ", minibatch " +
                            std::to_string(start / groups_per_mb) + ": ppo=" + std::to_string(ppo) +
                            " value=" + std::to_string(vloss) + " kl=" + std::to_string(kl) +
                            " self=" + std::to_string(l_self) + " reward=" + std::to_string(l_rew) +
                            " peer=" + std::to_string(l_peer) + " target=" + std::to_string(l_tgt) +
                            " pedestrian=" + std::to_string(l_pd));

      net.params().zero_grad();
      net.backward(cache, g);
      s.grad_norm += net.params().clip_grad_norm(cfg.grad_clip);
      opt.step(net.params(), lr);

      s.policy_loss += ppo;
      s.value_loss += vloss;
      s.kl += kl;
      s.entropy += ent;
      s.loss_self += l_self;
      s.loss_reward += l_rew;
      s.loss_peer += l_peer;
      s.loss_target += l_tgt;
      s.loss_pedestrian += l_pd;
      s.total_loss += total;
      ++updates;
    }
  }
  for (double* v : {&s.policy_loss, &s.value_loss, &s.kl, &s.entropy, &s.loss_self, &s.loss_reward,
                    &s.loss_peer, &s.loss_target, &s.loss_pedestrian, &s.total_loss, &s.grad_norm})
    *v /= updates;
  s.lr = lr;
  state.kl_coef = update_kl_coef(state.kl_coef, s.kl, cfg.kl_target);
  s.kl_coef = state.kl_coef;
  return s;
}

void RunConfig::resolve() {
  model.num_agents = env.world.num_cameras;
  model.max_cameras = env.max_cameras_observed;
  model.max_humans = env.max_humans_observed;
  model.num_factors = env.world.pitch_yaw_mode == world::PitchYawMode::kLearned ? 5 : 3;
  if (env.world.num_cameras < 1) throw ConfigError("need at least one camera");
  if (env.max_cameras_observed < 1 || env.max_humans_observed < 1)
    throw ConfigError("observation needs at least one camera and one human slot");
  train.validate();
}

TrainResult train(const RunConfig& input, const std::string& out_dir,
                  const std::function<void(const std::string&)>& progress) {
  RunConfig run = input;
  run.resolve();
  const auto& cfg = run.train;
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  neural::ModelConfig mc = run.model;
  mc.init_seed = mix_seed(run.seed, 1);
  neural::PolicyNetwork net(mc);
  neural::Adam opt(net.params());
  RolloutWorkers workers(run.env, cfg.rollouts, mix_seed(run.seed, 2), mc.hidden);
  TrainerState state;
  state.kl_coef = cfg.kl_coef;
  state.rng.seed(mix_seed(run.seed, 3));

  TrainResult result;
  result.metrics_path = (dir / "metrics.jsonl").string();
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw Error("cannot write " + result.metrics_path);
  auto save = [&](const std::string& name) {
    const auto path = (dir / name).string();
    net.save(path);
    result.checkpoints.push_back(path);
    result.final_checkpoint = path;
  };
  save("ckpt_0.bin");

  const int iterations = cfg.iterations();
  for (int it = 1; it <= iterations; ++it) {
    try {
      auto rollout = collect_rollouts(workers, net, cfg);
      const auto es = train_epoch(rollout.batch, net, opt, state, cfg);
      state.env_steps += cfg.batch;
      state.iteration = it;
      nlohmann::ordered_json row;
      row["iteration"] = it;
      row["env_steps"] = state.env_steps;
      row["mpjpe_mm"] = rollout.stats.mean_mpjpe_mm;
      row["team_reward"] = rollout.stats.mean_team_reward;
      row["agent_reward"] = rollout.stats.mean_agent_reward;
      row["min_camera_human_distance"] = rollout.stats.mean_min_distance;
      row["episodes"] = rollout.stats.episodes_finished;
      row["policy_loss"] = es.policy_loss;
      row["value_loss"] = es.value_loss;
      row["kl"] = es.kl;
      row["kl_coef"] = es.kl_coef;
      row["entropy"] = es.entropy;
      row["loss_self"] = es.loss_self;
      row["loss_reward"] = es.loss_reward;
      row["loss_peer"] = es.loss_peer;
      row["loss_target"] = es.loss_target;
      row["loss_pedestrian"] = es.loss_pedestrian;
      row["total_loss"] = es.total_loss;
      row["grad_norm"] = es.grad_norm;
      row["lr"] = es.lr;
      metrics << row.dump() << '\n';
      metrics.flush();
      if (progress) progress(row.dump());
      if ((cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) || it == iterations)
        save("ckpt_" + std::to_string(it) + ".bin");
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("iteration " + std::to_string(it) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  if (iterations > 0) {
    net.save((dir / "final.bin").string());
    result.final_checkpoint = (dir / "final.bin").string();
  }
  return result;
}

}  // namespace active_mocap::marl
