#include "active_mocap/neural.hpp"

#include <cmath>
#include <numbers>

#include "active_mocap/errors.hpp"

namespace active_mocap::neural {

int ParameterStore::add(std::string name, int rows, int cols) {
  params_.push_back({std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return static_cast<int>(params_.size()) - 1;
}

int64_t ParameterStore::count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

double ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params_) p.grad *= scale;
  }
  return norm;
}

void xavier_init(Matrix& w, std::mt19937_64& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = limit * (2.0 * unit_uniform(rng) - 1.0);
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(ParameterStore& store, const std::string& prefix, int in, std::vector<int> sizes,
         bool activate_output, std::mt19937_64& rng, double output_gain)
    : in_(in), sizes_(std::move(sizes)), activate_output_(activate_output) {
  int fan_in = in;
  for (size_t l = 0; l < sizes_.size(); ++l) {
    const std::string tag = prefix + "." + std::to_string(l);
    const int w = store.add(tag + ".weight", fan_in, sizes_[l]);
    const int b = store.add(tag + ".bias", 1, sizes_[l]);
    xavier_init(store[w].value, rng, l + 1 == sizes_.size() ? output_gain : 1.0);
    weights_.push_back(w);
    biases_.push_back(b);
    fan_in = sizes_[l];
  }
}

Matrix Mlp::forward(const ParameterStore& store, const Matrix& x, Cache* cache) const {
  if (x.cols() != in_)
    throw ShapeMismatch("mlp expects " + std::to_string(in_) + " inputs, got " +
                        std::to_string(x.cols()));
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Matrix a = x;
  for (size_t l = 0; l < weights_.size(); ++l) {
    Matrix y = a * store[weights_[l]].value;
    y.rowwise() += store[biases_[l]].value.row(0);
    const bool act = l + 1 < weights_.size() || activate_output_;
    if (act) y = y.array().tanh().matrix();
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->outputs.push_back(y);
    }
    a = std::move(y);
  }
  return a;
}

Matrix Mlp::backward(ParameterStore& store, const Cache& cache, const Matrix& dy) const {
  if (cache.inputs.size() != weights_.size()) throw NoRecordedGraph("mlp cache is empty");
  Matrix d = dy;
  for (size_t k = weights_.size(); k-- > 0;) {
    const bool act = k + 1 < weights_.size() || activate_output_;
    if (act) d = (d.array() * (1.0 - cache.outputs[k].array().square())).matrix();
    store[weights_[k]].grad.noalias() += cache.inputs[k].transpose() * d;
    store[biases_[k]].grad.row(0) += d.colwise().sum();
    d = d * store[weights_[k]].value.transpose();
  }
  return d;
}

// ---------------------------------------------------------------------------
// GruCell

GruCell::GruCell(ParameterStore& store, const std::string& prefix, int in, int hidden,
                 std::mt19937_64& rng)
    : in_(in), hidden_(hidden) {
  w_ = store.add(prefix + ".input_weight", in, 3 * hidden);
  u_ = store.add(prefix + ".hidden_weight", hidden, 3 * hidden);
  bw_ = store.add(prefix + ".input_bias", 1, 3 * hidden);
  bu_ = store.add(prefix + ".hidden_bias", 1, 3 * hidden);
  xavier_init(store[w_].value, rng);
  xavier_init(store[u_].value, rng);
}

namespace {

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

Matrix GruCell::forward(const ParameterStore& store, const Matrix& x, const Matrix& h,
                        Cache* cache) const {
  if (x.cols() != in_ || h.cols() != hidden_ || x.rows() != h.rows())
    throw ShapeMismatch("gru input shape mismatch");
  const int H = hidden_;
  Matrix a = x * store[w_].value;
  a.rowwise() += store[bw_].value.row(0);
  Matrix c = h * store[u_].value;
  c.rowwise() += store[bu_].value.row(0);
  Matrix r = sigmoid(a.leftCols(H) + c.leftCols(H));
  Matrix u = sigmoid(a.middleCols(H, H) + c.middleCols(H, H));
  Matrix hn = c.rightCols(H);
  Matrix n = (a.rightCols(H).array() + r.array() * hn.array()).tanh().matrix();
  Matrix out = ((1.0 - u.array()) * n.array() + u.array() * h.array()).matrix();
  if (cache) *cache = Cache{x, h, std::move(r), std::move(u), std::move(n), std::move(hn)};
  return out;
}

std::pair<Matrix, Matrix> GruCell::backward(ParameterStore& store, const Cache& cache,
                                            const Matrix& dh_next) const {
  if (cache.x.size() == 0) throw NoRecordedGraph("gru cache is empty");
  const int H = hidden_;
  const auto& r = cache.r.array();
  const auto& u = cache.u.array();
  const auto& n = cache.n.array();
  const auto& dout = dh_next.array();
  const Eigen::ArrayXXd dn_pre = dout * (1.0 - u) * (1.0 - n.square());
  const Eigen::ArrayXXd du_pre = dout * (cache.h.array() - n) * u * (1.0 - u);
  const Eigen::ArrayXXd dr_pre = dn_pre * cache.hn.array() * r * (1.0 - r);

  Matrix da(cache.x.rows(), 3 * H), dc(cache.x.rows(), 3 * H);
  da.leftCols(H) = dr_pre.matrix();
  da.middleCols(H, H) = du_pre.matrix();
  da.rightCols(H) = dn_pre.matrix();
  dc.leftCols(H) = dr_pre.matrix();
  dc.middleCols(H, H) = du_pre.matrix();
  dc.rightCols(H) = (dn_pre * r).matrix();

  store[w_].grad.noalias() += cache.x.transpose() * da;
  store[bw_].grad.row(0) += da.colwise().sum();
  store[u_].grad.noalias() += cache.h.transpose() * dc;
  store[bu_].grad.row(0) += dc.colwise().sum();

  Matrix dx = da * store[w_].value.transpose();
  Matrix dh = dc * store[u_].value.transpose();
  dh.array() += dout * u;
  return {std::move(dx), std::move(dh)};
}

// ---------------------------------------------------------------------------
// Mixture density outputs

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

}  // namespace

Vector MixtureDensityOutput::mean() const { return means.transpose() * weights; }

MixtureDensityOutput decode_mixture(const RowVector& raw, const MixtureSpec& spec) {
  if (raw.size() != spec.size()) throw ShapeMismatch("mixture output has wrong length");
  const int K = spec.components, d = spec.dims, s = spec.stride();
  MixtureDensityOutput out;
  out.weights.resize(K);
  out.means.resize(K, d);
  out.stddevs.resize(K, d);
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) mx = std::max(mx, raw(k * s));
  double z = 0.0;
  for (int k = 0; k < K; ++k) z += std::exp(raw(k * s) - mx);
  for (int k = 0; k < K; ++k) {
    out.weights(k) = std::exp(raw(k * s) - mx) / z;
    for (int j = 0; j < d; ++j) {
      out.means(k, j) = raw(k * s + 1 + 2 * j);
      out.stddevs(k, j) = softplus(raw(k * s + 2 + 2 * j)) + kSigmaFloor;
    }
  }
  return out;
}

Matrix process_mixture(const Matrix& raw, const MixtureSpec& spec) {
  Matrix out = raw;
  const int K = spec.components, d = spec.dims, s = spec.stride();
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) mx = std::max(mx, raw(i, k * s));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(raw(i, k * s) - mx);
    for (int k = 0; k < K; ++k) {
      out(i, k * s) = std::exp(raw(i, k * s) - mx) / z;
      for (int j = 0; j < d; ++j)
        out(i, k * s + 2 + 2 * j) = softplus(raw(i, k * s + 2 + 2 * j)) + kSigmaFloor;
    }
  }
  return out;
}

Matrix process_mixture_backward(const Matrix& raw, const Matrix& processed,
                                const Matrix& dprocessed, const MixtureSpec& spec) {
  Matrix draw = dprocessed;
  const int K = spec.components, d = spec.dims, s = spec.stride();
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    // Softmax adjoint: dl_k = w_k (g_k - sum_j w_j g_j).
    double dot = 0.0;
    for (int k = 0; k < K; ++k) dot += processed(i, k * s) * dprocessed(i, k * s);
    for (int k = 0; k < K; ++k) {
      draw(i, k * s) = processed(i, k * s) * (dprocessed(i, k * s) - dot);
      for (int j = 0; j < d; ++j) {
        const int c = k * s + 2 + 2 * j;
        draw(i, c) = dprocessed(i, c) * logistic(raw(i, c));
      }
    }
  }
  return draw;
}

double mdn_nll(const MixtureDensityOutput& m, const Vector& target) {
  const int K = static_cast<int>(m.weights.size());
  std::vector<double> terms(K);
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    double lp = std::log(m.weights(k));
    for (Eigen::Index j = 0; j < target.size(); ++j) {
      const double zj = (target(j) - m.means(k, j)) / m.stddevs(k, j);
      lp += -0.5 * zj * zj - std::log(m.stddevs(k, j)) - 0.5 * kLogTwoPi;
    }
    terms[k] = lp;
    mx = std::max(mx, lp);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - mx);
  return -(mx + std::log(sum));
}

Vector mdn_nll_batch(const Matrix& raw, const Matrix& targets, const MixtureSpec& spec,
                     Matrix* grad) {
  if (raw.cols() != spec.size() || targets.cols() != spec.dims || raw.rows() != targets.rows())
    throw ShapeMismatch("mdn_nll_batch shape mismatch");
  const int K = spec.components, d = spec.dims, s = spec.stride();
  Vector nll(raw.rows());
  if (grad) grad->setZero(raw.rows(), raw.cols());
  std::vector<double> logw(K), logn(K), sig(K * d);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) mx = std::max(mx, raw(i, k * s));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(raw(i, k * s) - mx);
    const double lse_w = mx + std::log(z);
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      logw[k] = raw(i, k * s) - lse_w;
      double ln = 0.0;
      for (int j = 0; j < d; ++j) {
        const double sg = softplus(raw(i, k * s + 2 + 2 * j)) + kSigmaFloor;
        sig[k * d + j] = sg;
        const double zj = (targets(i, j) - raw(i, k * s + 1 + 2 * j)) / sg;
        ln += -0.5 * zj * zj - std::log(sg) - 0.5 * kLogTwoPi;
      }
      logn[k] = ln;
      best = std::max(best, logw[k] + ln);
    }
    double acc = 0.0;
    for (int k = 0; k < K; ++k) acc += std::exp(logw[k] + logn[k] - best);
    const double log_lik = best + std::log(acc);
    nll(i) = -log_lik;
    if (!grad) continue;
    for (int k = 0; k < K; ++k) {
      const double resp = std::exp(logw[k] + logn[k] - log_lik);
      (*grad)(i, k * s) = std::exp(logw[k]) - resp;
      for (int j = 0; j < d; ++j) {
        const double sg = sig[k * d + j];
        const double diff = targets(i, j) - raw(i, k * s + 1 + 2 * j);
        (*grad)(i, k * s + 1 + 2 * j) = -resp * diff / (sg * sg);
        const double dsig = -resp * (diff * diff / (sg * sg * sg) - 1.0 / sg);
        (*grad)(i, k * s + 2 + 2 * j) = dsig * logistic(raw(i, k * s + 2 + 2 * j));
      }
    }
  }
  return nll;
}

Matrix factor_softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    for (Eigen::Index f = 0; f + 2 < logits.cols(); f += 3) {
      const double mx = logits.row(i).segment(f, 3).maxCoeff();
      double z = 0.0;
      for (int k = 0; k < 3; ++k) z += std::exp(logits(i, f + k) - mx);
      for (int k = 0; k < 3; ++k) p(i, f + k) = std::exp(logits(i, f + k) - mx) / z;
    }
  return p;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ParameterStore& store, AdamOptions opts) : opts_(opts) {
  for (const auto& p : store.all()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParameterStore& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (int i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / bc1) /
                       ((v_[i].array() / bc2).sqrt() + opts_.epsilon);
  }
}

}  // namespace active_mocap::neural
