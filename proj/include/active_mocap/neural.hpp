#pragma once

// Small dense-network building blocks with hand-derived adjoints: parameter
// storage, tanh MLPs, a gated recurrent cell, Gaussian mixture outputs and
// the Adam optimizer. Matrices are batch-major (one row per sample).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace active_mocap::neural {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class ParameterStore {
 public:
  // Returns the index of the new zero-initialized tensor.
  int add(std::string name, int rows, int cols);

  Parameter& operator[](int i) { return params_[i]; }
  const Parameter& operator[](int i) const { return params_[i]; }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  int size() const { return static_cast<int>(params_.size()); }

  // Total number of scalars.
  int64_t count() const;
  void zero_grad();
  // Global L2 norm of all gradients.
  double grad_norm() const;
  // Rescales gradients so the global norm is at most `max_norm`; returns the
  // norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<Parameter> params_;
};

// Portable uniform in [0, 1) from the top 53 bits of the engine output.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Xavier-uniform fill scaled by `gain`.
void xavier_init(Matrix& w, std::mt19937_64& rng, double gain = 1.0);

// Dense layers with tanh on every hidden layer and optionally on the output.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;   // input to each layer
    std::vector<Matrix> outputs;  // post-activation output of each layer
  };

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, int in, std::vector<int> sizes,
      bool activate_output, std::mt19937_64& rng, double output_gain = 1.0);

  Matrix forward(const ParameterStore& store, const Matrix& x, Cache* cache) const;
  // Accumulates parameter gradients and returns d(input).
  Matrix backward(ParameterStore& store, const Cache& cache, const Matrix& dy) const;

  int in_size() const { return in_; }
  int out_size() const { return sizes_.empty() ? in_ : sizes_.back(); }

 private:
  int in_ = 0;
  std::vector<int> sizes_;
  std::vector<int> weights_, biases_;
  bool activate_output_ = false;
};

// Gated recurrent cell:
//   r = sig(x Wr + br + h Ur + cr), u = sig(x Wu + bu + h Uu + cu)
//   n = tanh(x Wn + bn + r * (h Un + cn)),  h' = (1 - u) * n + u * h
class GruCell {
 public:
  struct Cache {
    Matrix x, h, r, u, n, hn;  // hn = h Un + cn
  };

  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& prefix, int in, int hidden,
          std::mt19937_64& rng);

  Matrix forward(const ParameterStore& store, const Matrix& x, const Matrix& h,
                 Cache* cache) const;
  // Returns (dx, dh).
  std::pair<Matrix, Matrix> backward(ParameterStore& store, const Cache& cache,
                                     const Matrix& dh_next) const;

  int hidden_size() const { return hidden_; }

 private:
  int in_ = 0, hidden_ = 0;
  int w_ = -1, u_ = -1, bw_ = -1, bu_ = -1;
};

// Diagonal Gaussian mixture over `dims` dimensions. Raw network output holds,
// per component, [weight logit, mu_1, sigma_1, ..., mu_d, sigma_d] where the
// sigma entries are pre-softplus.
struct MixtureSpec {
  int components = 16;
  int dims = 2;

  int stride() const { return 1 + 2 * dims; }
  int size() const { return components * stride(); }
};

inline constexpr double kSigmaFloor = 1e-3;

struct MixtureDensityOutput {
  Vector weights;  // K, positive, sums to 1
  Matrix means;    // K x d
  Matrix stddevs;  // K x d, >= kSigmaFloor

  // Weighted mean of the component means.
  Vector mean() const;
};

MixtureDensityOutput decode_mixture(const RowVector& raw, const MixtureSpec& spec);

// Same layout as raw, with logits replaced by softmax weights and sigma
// entries by softplus(raw) + floor.
Matrix process_mixture(const Matrix& raw, const MixtureSpec& spec);
Matrix process_mixture_backward(const Matrix& raw, const Matrix& processed,
                                const Matrix& dprocessed, const MixtureSpec& spec);

// Negative log-likelihood of `target` under a decoded mixture (log-sum-exp
// stabilized).
double mdn_nll(const MixtureDensityOutput& mixture, const Vector& target);

// Row-wise NLL of raw outputs; when `grad` is non-null it receives
// d(nll_row)/d(raw_row) for every row.
Vector mdn_nll_batch(const Matrix& raw, const Matrix& targets, const MixtureSpec& spec,
                     Matrix* grad);

// Row-wise softmax over consecutive groups of three logits.
Matrix factor_softmax(const Matrix& logits);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(const ParameterStore& store, AdamOptions opts = {});
  void step(ParameterStore& store, double lr);
  int64_t steps() const { return t_; }

 private:
  AdamOptions opts_;
  std::vector<Matrix> m_, v_;
  int64_t t_ = 0;
};

}  // namespace active_mocap::neural
