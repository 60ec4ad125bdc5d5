#include "active_mocap/policy_network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "active_mocap/errors.hpp"
#include "active_mocap/perception.hpp"

namespace active_mocap::neural {

namespace {

using perception::kCameraSlotSize;
using perception::kHumanSlotSize;

constexpr char kMagic[4] = {'A', 'M', 'C', 'K'};

std::string join(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw CheckpointError("truncated checkpoint " + path);
  return v;
}

bool slot_present(const Matrix& obs, int row, int offset, int width) {
  for (int k = 0; k < width; ++k)
    if (obs(row, offset + k) != 0.0) return true;
  return false;
}

}  // namespace

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int ModelConfig::obs_size() const {
  return max_cameras * kCameraSlotSize + max_humans * kHumanSlotSize;
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "max_cameras=" << max_cameras << ";max_humans=" << max_humans
     << ";num_agents=" << num_agents << ";num_factors=" << num_factors << ";hidden=" << hidden
     << ";encoder=" << join(encoder_layers) << ";mdn=" << join(mdn_layers)
     << ";components=" << mdn_components << ";actor=" << join(actor_layers)
     << ";critic=" << join(critic_layers) << ";projector=" << projector_size;
  return os.str();
}

uint64_t ModelConfig::hash() const { return fnv1a(canonical()); }

PolicyNetwork::PolicyNetwork(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.num_factors != 3 && cfg.num_factors != 5)
    throw ConfigError("num_factors must be 3 or 5");
  if (cfg.num_agents < 1 || cfg.max_cameras < 1 || cfg.max_humans < 1)
    throw ConfigError("model needs at least one agent, camera slot and human slot");
  planar_ = MixtureSpec{cfg.mdn_components, 2};
  scalar_ = MixtureSpec{cfg.mdn_components, 1};
  std::mt19937_64 rng(cfg.init_seed);
  const int H = cfg.hidden;
  const int A = cfg.action_width();
  auto mdn = [&](const std::string& name, int in, int out) {
    auto sizes = cfg.mdn_layers;
    sizes.push_back(out);
    return Mlp(store_, name, in, sizes, false, rng);
  };
  encoder_ = Mlp(store_, "encoder", cfg.obs_size(), cfg.encoder_layers, true, rng);
  const int z = encoder_.out_size();
  gru_ = GruCell(store_, "gru", z, H, rng);
  self_mdn_ = mdn("mdn_self", z + H + A, planar_.size());
  reward_mdn_ = mdn("mdn_reward", z + H + A, scalar_.size());
  peer_mdn_ = mdn("mdn_peer", z + H + A + kCameraSlotSize, planar_.size());
  tgt_mdn_ = mdn("mdn_tgt", z + H + kHumanSlotSize, planar_.size());
  pd_mdn_ = mdn("mdn_pd", z + H + kHumanSlotSize, planar_.size());
  projector_ = Mlp(store_, "tgt_projector", planar_.size(), {cfg.projector_size}, true, rng);
  auto actor_sizes = cfg.actor_layers;
  actor_sizes.push_back(A);
  actor_ = Mlp(store_, "actor", z + H + cfg.projector_size, actor_sizes, false, rng,
               cfg.actor_output_gain);
  auto critic_sizes = cfg.critic_layers;
  critic_sizes.push_back(1);
  critic_ = Mlp(store_, "critic", cfg.num_agents * z + cfg.num_agents, critic_sizes, false, rng);
}

PolicyForward PolicyNetwork::forward(const Matrix& obs, const Matrix& hidden,
                                     const Matrix* actions, bool with_wdl,
                                     Cache* cache) const {
  const int B = static_cast<int>(obs.rows());
  const int n = cfg_.num_agents;
  const int H = cfg_.hidden;
  if (obs.cols() != cfg_.obs_size())
    throw ShapeMismatch("observation width " + std::to_string(obs.cols()) + ", expected " +
                        std::to_string(cfg_.obs_size()));
  if (hidden.rows() != B || hidden.cols() != H) throw ShapeMismatch("hidden state shape");
  if (B % n != 0) throw ShapeMismatch("batch rows must be a multiple of num_agents");
  if (with_wdl && (!actions || actions->rows() != B || actions->cols() != cfg_.action_width()))
    throw ShapeMismatch("world-dynamics heads need a one-hot action per row");

  Cache local;
  Cache& c = cache ? *cache : local;
  const bool record = cache != nullptr;
  c = Cache{};
  c.rows = B;
  c.with_wdl = with_wdl;

  PolicyForward out;
  out.z = encoder_.forward(store_, obs, record ? &c.encoder : nullptr);
  out.h = gru_.forward(store_, out.z, hidden, record ? &c.gru : nullptr);
  const Matrix zh = hcat(out.z, out.h);

  const int tgt_off = cfg_.max_cameras * kCameraSlotSize;
  out.tgt_raw = tgt_mdn_.forward(store_, hcat(zh, obs.middleCols(tgt_off, kHumanSlotSize)),
                                 record ? &c.tgt_mdn : nullptr);
  c.tgt_processed = process_mixture(out.tgt_raw, planar_);
  const Matrix m = projector_.forward(store_, c.tgt_processed, record ? &c.projector : nullptr);
  out.logits = actor_.forward(store_, hcat(zh, m), record ? &c.actor : nullptr);
  out.probs = factor_softmax(out.logits);

  const int zw = static_cast<int>(out.z.cols());
  Matrix critic_in = Matrix::Zero(B, n * zw + n);
  for (int r = 0; r < B; ++r) {
    const int g = r / n, i = r % n;
    for (int j = 0; j < n; ++j) critic_in.row(r).segment(j * zw, zw) = out.z.row(g * n + j);
    critic_in(r, n * zw + i) = 1.0;
  }
  out.value = critic_.forward(store_, critic_in, record ? &c.critic : nullptr);

  if (with_wdl) {
    const Matrix za = hcat(zh, *actions);
    out.self_raw = self_mdn_.forward(store_, za, record ? &c.self_mdn : nullptr);
    out.reward_raw = reward_mdn_.forward(store_, za, record ? &c.reward_mdn : nullptr);

    for (int r = 0; r < B; ++r)
      for (int s = 1; s < cfg_.max_cameras; ++s)
        if (obs(r, s * kCameraSlotSize + kCameraSlotSize - 1) > 0.5) out.peer_index.push_back({r, s});
    if (!out.peer_index.empty()) {
      Matrix in(out.peer_index.size(), za.cols() + kCameraSlotSize);
      for (size_t k = 0; k < out.peer_index.size(); ++k) {
        const auto [r, s] = out.peer_index[k];
        in.row(k) << za.row(r), obs.row(r).segment(s * kCameraSlotSize, kCameraSlotSize);
      }
      out.peer_raw = peer_mdn_.forward(store_, in, record ? &c.peer_mdn : nullptr);
    }

    for (int r = 0; r < B; ++r)
      for (int s = 1; s < cfg_.max_humans; ++s)
        if (slot_present(obs, r, tgt_off + s * kHumanSlotSize, kHumanSlotSize))
          out.pd_index.push_back({r, s});
    if (!out.pd_index.empty()) {
      Matrix in(out.pd_index.size(), zh.cols() + kHumanSlotSize);
      for (size_t k = 0; k < out.pd_index.size(); ++k) {
        const auto [r, s] = out.pd_index[k];
        in.row(k) << zh.row(r), obs.row(r).segment(tgt_off + s * kHumanSlotSize, kHumanSlotSize);
      }
      out.pd_raw = pd_mdn_.forward(store_, in, record ? &c.pd_mdn : nullptr);
    }
  }

  if (record) {
    c.valid = true;
    c.out = out;
  }
  return out;
}

Matrix PolicyNetwork::backward(const Cache& c, const PolicyGrads& g) {
  if (!c.valid) throw NoRecordedGraph("policy forward was not recorded");
  const int B = c.rows;
  const int n = cfg_.num_agents;
  const int H = cfg_.hidden;
  const int zw = encoder_.out_size();
  const auto& out = c.out;

  auto check = [&](const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (m.size() && (m.rows() != rows || m.cols() != cols))
      throw ShapeMismatch(std::string("gradient shape for ") + what);
  };
  check(g.logits, B, cfg_.action_width(), "logits");
  check(g.value, B, 1, "value");
  check(g.tgt_raw, B, planar_.size(), "tgt");
  check(g.self_raw, B, planar_.size(), "self");
  check(g.reward_raw, B, scalar_.size(), "reward");
  check(g.peer_raw, out.peer_raw.rows(), planar_.size(), "peer");
  check(g.pd_raw, out.pd_raw.rows(), planar_.size(), "pd");
  if (!c.with_wdl && (g.self_raw.size() || g.reward_raw.size() || g.peer_raw.size() || g.pd_raw.size()))
    throw NoRecordedGraph("world-dynamics heads were not run");

  Matrix dzh = Matrix::Zero(B, zw + H);
  Matrix dz = Matrix::Zero(B, zw);
  Matrix dtgt = g.tgt_raw.size() ? g.tgt_raw : Matrix::Zero(B, planar_.size());
  bool tgt_used = g.tgt_raw.size() > 0;

  if (g.logits.size()) {
    const Matrix de = actor_.backward(store_, c.actor, g.logits);
    dzh += de.leftCols(zw + H);
    const Matrix dproc = projector_.backward(store_, c.projector, de.rightCols(cfg_.projector_size));
    dtgt += process_mixture_backward(out.tgt_raw, c.tgt_processed, dproc, planar_);
    tgt_used = true;
  }
  if (tgt_used) dzh += tgt_mdn_.backward(store_, c.tgt_mdn, dtgt).leftCols(zw + H);

  if (g.value.size()) {
    const Matrix dcin = critic_.backward(store_, c.critic, g.value);
    for (int r = 0; r < B; ++r) {
      const int grp = r / n;
      for (int j = 0; j < n; ++j) dz.row(grp * n + j) += dcin.row(r).segment(j * zw, zw);
    }
  }

  if (g.self_raw.size()) dzh += self_mdn_.backward(store_, c.self_mdn, g.self_raw).leftCols(zw + H);
  if (g.reward_raw.size())
    dzh += reward_mdn_.backward(store_, c.reward_mdn, g.reward_raw).leftCols(zw + H);
  if (g.peer_raw.size()) {
    const Matrix din = peer_mdn_.backward(store_, c.peer_mdn, g.peer_raw);
    for (size_t k = 0; k < out.peer_index.size(); ++k)
      dzh.row(out.peer_index[k].first) += din.row(k).leftCols(zw + H);
  }
  if (g.pd_raw.size()) {
    const Matrix din = pd_mdn_.backward(store_, c.pd_mdn, g.pd_raw);
    for (size_t k = 0; k < out.pd_index.size(); ++k)
      dzh.row(out.pd_index[k].first) += din.row(k).leftCols(zw + H);
  }

  dz += dzh.leftCols(zw);
  auto [dx, dh_prev] = gru_.backward(store_, c.gru, dzh.rightCols(H));
  dz += dx;
  encoder_.backward(store_, c.encoder, dz);
  return dh_prev;
}

void PolicyNetwork::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write " + path);
  os.write(kMagic, 4);
  write_le<uint32_t>(os, kCheckpointVersion);
  write_le<uint64_t>(os, cfg_.hash());
  write_le<uint32_t>(os, static_cast<uint32_t>(store_.size()));
  for (const auto& p : store_.all()) {
    write_le<uint32_t>(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.value.rows()));
    write_le<uint32_t>(os, static_cast<uint32_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j)
        write_le<float>(os, static_cast<float>(p.value(i, j)));
  }
  if (!os) throw CheckpointError("failed writing " + path);
}

void PolicyNetwork::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path + " is not a checkpoint");
  const auto version = read_le<uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointVersionMismatch(path + " has schema version " + std::to_string(version) +
                                    ", supported " + std::to_string(kCheckpointVersion));
  const auto hash = read_le<uint64_t>(is, path);
  if (hash != cfg_.hash())
    throw ConfigMismatch(path + " was written for a different model configuration");
  const auto count = read_le<uint32_t>(is, path);
  if (count != static_cast<uint32_t>(store_.size()))
    throw CheckpointError(path + " holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(store_.size()));
  std::vector<Matrix> values;
  for (uint32_t t = 0; t < count; ++t) {
    const auto len = read_le<uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated checkpoint " + path);
    const auto rows = read_le<uint32_t>(is, path);
    const auto cols = read_le<uint32_t>(is, path);
    const auto& p = store_[static_cast<int>(t)];
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw CheckpointError(path + ": tensor " + name + " does not match " + p.name);
    Matrix v(rows, cols);
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) v(i, j) = read_le<float>(is, path);
    values.push_back(std::move(v));
  }
  for (int t = 0; t < store_.size(); ++t) store_[t].value = std::move(values[t]);
}

}  // namespace active_mocap::neural
