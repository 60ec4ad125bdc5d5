#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "active_mocap/errors.hpp"
#include "active_mocap/policy_network.hpp"
#include "gradient_check.hpp"

using namespace active_mocap;
using namespace active_mocap::neural;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.hidden = 16;
  cfg.encoder_layers = {16, 16};
  cfg.mdn_layers = {12};
  cfg.mdn_components = 3;
  cfg.actor_layers = {12};
  cfg.critic_layers = {12};
  cfg.projector_size = 8;
  cfg.num_agents = 2;
  cfg.actor_output_gain = 1.0;
  cfg.init_seed = 3;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Mdn, SingleComponentAtMeanIsLogTwoPi) {
  MixtureSpec spec{1, 2};
  RowVector raw(5);
  const double s = inverse_softplus(1.0 - kSigmaFloor);
  raw << 0.0, 0.3, s, -0.7, s;
  auto m = decode_mixture(raw, spec);
  EXPECT_NEAR(m.stddevs(0, 0), 1.0, 1e-12);
  Vector target(2);
  target << 0.3, -0.7;
  EXPECT_NEAR(mdn_nll(m, target), std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Mdn, ShrinkingSigmaAtMeanDecreasesNll) {
  MixtureSpec spec{1, 2};
  Vector target(2);
  target << 1.0, 2.0;
  double prev = 1e300;
  for (double sigma : {2.0, 1.0, 0.5, 0.1, 0.01}) {
    RowVector raw(5);
    raw << 0.0, 1.0, inverse_softplus(sigma - kSigmaFloor), 2.0, inverse_softplus(sigma - kSigmaFloor);
    const double nll = mdn_nll(decode_mixture(raw, spec), target);
    EXPECT_LT(nll, prev);
    prev = nll;
  }
}

TEST(Mdn, MixtureBoundedByEachComponent) {
  std::mt19937_64 rng(4);
  MixtureSpec spec{16, 2};
  for (int trial = 0; trial < 200; ++trial) {
    RowVector raw = random_matrix(1, spec.size(), rng);
    auto m = decode_mixture(raw, spec);
    EXPECT_NEAR(m.weights.sum(), 1.0, 1e-6);
    EXPECT_TRUE((m.weights.array() > 0).all());
    EXPECT_TRUE((m.stddevs.array() >= kSigmaFloor).all());
    Vector t = random_matrix(2, 1, rng);
    const double nll = mdn_nll(m, t);
    for (int k = 0; k < spec.components; ++k) {
      MixtureDensityOutput single;
      single.weights = Vector::Ones(1);
      single.means = m.means.row(k);
      single.stddevs = m.stddevs.row(k);
      EXPECT_LE(nll, mdn_nll(single, t) - std::log(m.weights(k)) + 1e-9);
    }
  }
}

TEST(Mdn, BatchMatchesDecodedAndFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int dims : {1, 2}) {
    MixtureSpec spec{4, dims};
    Matrix raw = random_matrix(3, spec.size(), rng);
    Matrix tgt = random_matrix(3, dims, rng);
    Matrix grad;
    Vector nll = mdn_nll_batch(raw, tgt, spec, &grad);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(nll(i), mdn_nll(decode_mixture(raw.row(i), spec), tgt.row(i).transpose()), 1e-12);
      for (int j = 0; j < spec.size(); ++j) {
        Matrix p = raw, q = raw;
        p(i, j) += 1e-6;
        q(i, j) -= 1e-6;
        const double fd = (mdn_nll_batch(p, tgt, spec, nullptr)(i) -
                           mdn_nll_batch(q, tgt, spec, nullptr)(i)) / 2e-6;
        EXPECT_NEAR(grad(i, j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(Mdn, ProcessBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  MixtureSpec spec{3, 2};
  Matrix raw = random_matrix(2, spec.size(), rng);
  Matrix w = random_matrix(2, spec.size(), rng);
  auto f = [&](const Matrix& r) { return process_mixture(r, spec).cwiseProduct(w).sum(); };
  Matrix d = process_mixture_backward(raw, process_mixture(raw, spec), w, spec);
  for (Eigen::Index k = 0; k < raw.size(); ++k) {
    Matrix p = raw, q = raw;
    p.data()[k] += 1e-6;
    q.data()[k] -= 1e-6;
    EXPECT_NEAR(d.data()[k], (f(p) - f(q)) / 2e-6, 1e-7);
  }
}

TEST(Dense, QuadraticLossClosedForm) {
  std::mt19937_64 rng(7);
  ParameterStore store;
  Mlp layer(store, "fc", 4, {3}, false, rng);
  store[1].value = random_matrix(1, 3, rng);
  Matrix x = random_matrix(5, 4, rng), y = random_matrix(5, 3, rng);
  Mlp::Cache cache;
  Matrix out = layer.forward(store, x, &cache);
  Matrix resid = out - y;
  store.zero_grad();
  Matrix dx = layer.backward(store, cache, resid);
  EXPECT_LT((store[0].grad - x.transpose() * resid).norm(), 1e-12);
  EXPECT_LT((store[1].grad - resid.colwise().sum()).norm(), 1e-12);
  EXPECT_LT((dx - resid * store[0].value.transpose()).norm(), 1e-12);
}

TEST(Dense, ConstantLossGivesZeroGradients) {
  std::mt19937_64 rng(8);
  ParameterStore store;
  Mlp mlp(store, "m", 4, {6, 3}, true, rng);
  Mlp::Cache cache;
  Matrix x = random_matrix(5, 4, rng);
  mlp.forward(store, x, &cache);
  store.zero_grad();
  mlp.backward(store, cache, Matrix::Zero(5, 3));
  EXPECT_EQ(store.grad_norm(), 0.0);
}

TEST(Dense, BackwardWithoutForwardThrows) {
  std::mt19937_64 rng(8);
  ParameterStore store;
  Mlp mlp(store, "m", 4, {3}, false, rng);
  EXPECT_THROW(mlp.backward(store, Mlp::Cache{}, Matrix::Zero(1, 3)), NoRecordedGraph);
  GruCell gru(store, "g", 3, 4, rng);
  EXPECT_THROW(gru.backward(store, GruCell::Cache{}, Matrix::Zero(1, 4)), NoRecordedGraph);
}

TEST(Gru, TwoStepBackpropThroughTime) {
  std::mt19937_64 rng(9);
  ParameterStore store;
  GruCell gru(store, "g", 3, 4, rng);
  for (auto& p : store.all()) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.5);
  Matrix x1 = random_matrix(2, 3, rng), x2 = random_matrix(2, 3, rng);
  Matrix h0 = random_matrix(2, 4, rng, 0.3), w = random_matrix(2, 4, rng);
  auto loss = [&] {
    Matrix h1 = gru.forward(store, x1, h0, nullptr);
    Matrix h2 = gru.forward(store, x2, h1, nullptr);
    return h2.cwiseProduct(w).sum() + 0.5 * h1.squaredNorm();
  };
  GruCell::Cache c1, c2;
  Matrix h1 = gru.forward(store, x1, h0, &c1);
  gru.forward(store, x2, h1, &c2);
  store.zero_grad();
  auto [dx2, dh1] = gru.backward(store, c2, w);
  dh1 += h1;
  auto [dx1, dh0] = gru.backward(store, c1, dh1);
  double worst = 0.0;
  for (auto& p : store.all())
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double keep = p.value.data()[k];
      p.value.data()[k] = keep + 1e-5;
      const double a = loss();
      p.value.data()[k] = keep - 1e-5;
      const double b = loss();
      p.value.data()[k] = keep;
      worst = std::max(worst, testing_support::relative_error(p.grad.data()[k], (a - b) / 2e-5));
    }
  EXPECT_LT(worst, 1e-3);
  for (Eigen::Index k = 0; k < h0.size(); ++k) {
    const double keep = h0.data()[k];
    h0.data()[k] = keep + 1e-5;
    const double a = loss();
    h0.data()[k] = keep - 1e-5;
    const double b = loss();
    h0.data()[k] = keep;
    EXPECT_LT(testing_support::relative_error(dh0.data()[k], (a - b) / 2e-5), 1e-3);
  }
}

TEST(Softmax, FactorsSumToOne) {
  std::mt19937_64 rng(10);
  Matrix logits = random_matrix(4, 15, rng, 3.0);
  Matrix p = factor_softmax(logits);
  for (int i = 0; i < 4; ++i)
    for (int f = 0; f < 5; ++f) EXPECT_NEAR(p.row(i).segment(3 * f, 3).sum(), 1.0, 1e-12);
}

TEST(Policy, ParameterCountAndShapes) {
  ModelConfig cfg;
  PolicyNetwork net(cfg);
  EXPECT_GT(net.parameter_count(), 0);
  EXPECT_EQ(cfg.obs_size(), 153);
  Matrix obs = Matrix::Zero(3, cfg.obs_size());
  auto out = net.forward(obs, Matrix::Zero(3, 128), nullptr, false, nullptr);
  EXPECT_EQ(out.z.cols(), 128);
  EXPECT_EQ(out.h.cols(), 128);
  EXPECT_EQ(out.logits.cols(), 9);
  EXPECT_EQ(out.tgt_raw.cols(), 80);
  EXPECT_EQ(out.value.rows(), 3);
  EXPECT_THROW(net.forward(Matrix::Zero(3, 10), Matrix::Zero(3, 128), nullptr, false, nullptr),
               ShapeMismatch);
  EXPECT_THROW(net.forward(Matrix::Zero(2, 153), Matrix::Zero(2, 128), nullptr, false, nullptr),
               ShapeMismatch);
}

TEST(Policy, ZeroInputIsDeterministic) {
  ModelConfig cfg;
  PolicyNetwork net(cfg);
  Matrix obs = Matrix::Zero(3, cfg.obs_size());
  auto a = net.forward(obs, Matrix::Zero(3, 128), nullptr, false, nullptr);
  auto b = net.forward(obs, Matrix::Zero(3, 128), nullptr, false, nullptr);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.h, b.h);
}

TEST(Policy, IdenticalRowsGiveIdenticalOutputs) {
  ModelConfig cfg;
  cfg.num_agents = 1;
  PolicyNetwork net(cfg);
  std::mt19937_64 rng(1);
  Matrix row = random_matrix(1, cfg.obs_size(), rng, 0.3);
  Matrix obs(2, cfg.obs_size());
  obs << row, row;
  Matrix h = Matrix::Zero(2, 128);
  auto out = net.forward(obs, h, nullptr, false, nullptr);
  EXPECT_EQ(out.logits.row(0), out.logits.row(1));
  EXPECT_EQ(out.value.row(0), out.value.row(1));
  EXPECT_EQ(out.h.row(0), out.h.row(1));
}

TEST(Policy, BackwardWithoutRecordingThrows) {
  PolicyNetwork net(small_config());
  PolicyNetwork::Cache cache;
  EXPECT_THROW(net.backward(cache, {}), NoRecordedGraph);
}

TEST(Policy, FullNetworkGradientCheck) {
  PolicyNetwork net(small_config());
  std::mt19937_64 rng(12);
  auto batch = testing_support::random_policy_batch(net.config(), 3, rng);
  const double worst = testing_support::policy_gradient_check(net, batch, 200, 1e-4, rng);
  EXPECT_LT(worst, 1e-4);
}

TEST(Policy, ZeroLearningRateLeavesOutputsBitwiseUnchanged) {
  PolicyNetwork net(small_config());
  std::mt19937_64 rng(13);
  auto batch = testing_support::random_policy_batch(net.config(), 2, rng);
  const auto before = net.forward(batch.obs, batch.hidden, &batch.actions, true, nullptr);
  PolicyNetwork::Cache cache;
  net.params().zero_grad();
  testing_support::policy_loss(net, batch, &cache, true);
  Adam adam(net.params());
  adam.step(net.params(), 0.0);
  const auto after = net.forward(batch.obs, batch.hidden, &batch.actions, true, nullptr);
  EXPECT_EQ(before.logits, after.logits);
  EXPECT_EQ(before.value, after.value);
  EXPECT_EQ(before.pd_raw, after.pd_raw);
}

TEST(Adam, DescendsQuadratic) {
  ParameterStore store;
  const int w = store.add("w", 1, 2);
  store[w].value << 3.0, -2.0;
  Adam adam(store);
  for (int t = 0; t < 2000; ++t) {
    store.zero_grad();
    store[w].grad = store[w].value;  // grad of 0.5 |w|^2
    adam.step(store, 0.01);
  }
  EXPECT_LT(store[w].value.norm(), 1e-2);
  EXPECT_EQ(adam.steps(), 2000);
}

TEST(ParameterStore, ClipGradNorm) {
  ParameterStore store;
  store.add("a", 1, 2);
  store.add("b", 1, 1);
  store[0].grad << 3.0, 0.0;
  store[1].grad << 4.0;
  EXPECT_DOUBLE_EQ(store.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(store.grad_norm(), 1.0, 1e-12);
  EXPECT_NEAR(store[0].grad(0, 0), 0.6, 1e-12);
}

TEST(Checkpoint, RoundTripAndErrors) {
  auto cfg = small_config();
  PolicyNetwork net(cfg);
  const auto path = temp_path("am_ckpt_roundtrip.bin");
  net.save(path);
  auto cfg2 = cfg;
  cfg2.init_seed = 99;  // different weights, same architecture
  PolicyNetwork other(cfg2);
  other.load(path);
  for (int i = 0; i < net.params().size(); ++i)
    EXPECT_EQ(other.params()[i].value, net.params()[i].value.cast<float>().cast<double>());

  auto cfg3 = cfg;
  cfg3.hidden = 8;
  PolicyNetwork mismatched(cfg3);
  EXPECT_THROW(mismatched.load(path), ConfigMismatch);

  // Bump the schema version field.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const uint32_t v = kCheckpointVersion + 1;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  EXPECT_THROW(other.load(path), CheckpointVersionMismatch);
  EXPECT_THROW(other.load(temp_path("am_no_such_file.bin")), CheckpointError);
  std::remove(path.c_str());
}

TEST(Checkpoint, ConfigHashIgnoresSeed) {
  auto a = small_config(), b = small_config();
  b.init_seed = 1234;
  EXPECT_EQ(a.hash(), b.hash());
  b.mdn_components = 4;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Policy, GoldenForward) {
  // Frozen regression values for the default architecture, init seed 0, and
  // the observation obs[k] = sin(0.1 k).
  ModelConfig cfg;
  PolicyNetwork net(cfg);
  Matrix obs(3, cfg.obs_size());
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < cfg.obs_size(); ++k) obs(r, k) = std::sin(0.1 * (k + r));
  auto out = net.forward(obs, Matrix::Zero(3, 128), nullptr, false, nullptr);
  const double expected_logits[3] = {-0.0050610598029159643, 0.0020244582497417635,
                                     -0.005145684225734767};
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.logits(0, k), expected_logits[k], 1e-10);
  EXPECT_NEAR(out.value(0, 0), -0.040578463680547919, 1e-10);
  EXPECT_NEAR(out.h(1, 5), -0.11327596231149625, 1e-10);
  EXPECT_EQ(net.parameter_count(), 566138);
}
