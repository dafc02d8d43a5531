#pragma once

// Small dense numerical kernel shared by the learning modules: layers, MLP
// blocks, softmax cross-entropy, Adam and a finite-difference gradient checker.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace plantrec::num {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Flat, named view over one parameter tensor. Models hand these out so the
/// optimizer, the checkpoint writer and the gradient checker can walk every
/// tensor without knowing the model layout.
struct ParamView {
  std::string name;
  std::span<double> values;
  std::vector<std::size_t> dims;
};

/// Uniform Xavier initialization. Returns a fan_out x fan_in matrix so it can
/// be used directly as `W` in `W * x`.
DenseMatrix xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class Activation { Tanh, Identity };

/// y = act(W x + b)
struct DenseLayer {
  DenseMatrix w;
  Vector b;
  Activation activation = Activation::Tanh;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act = Activation::Tanh);

  std::size_t in_dim() const { return static_cast<std::size_t>(w.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(w.rows()); }

  void init(Rng& rng);
  void set_zero();
  Vector forward(const Vector& x) const;
  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  /// `x` and `y` must be the input and output of the matching forward call.
  Vector backward(const Vector& x, const Vector& y, const Vector& dy, DenseLayer& grad) const;
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct MlpCache {
  Vector x;
  Vector h;
  Vector y;
};

/// Two fully connected layers; hidden layer is tanh, the output layer is tanh
/// by default (identity for classifier heads that emit logits).
struct MlpBlock {
  DenseLayer l1;
  DenseLayer l2;

  MlpBlock() = default;
  MlpBlock(std::size_t in, std::size_t hidden, std::size_t out,
           Activation out_act = Activation::Tanh);

  std::size_t in_dim() const { return l1.in_dim(); }
  std::size_t hidden_dim() const { return l1.out_dim(); }
  std::size_t out_dim() const { return l2.out_dim(); }

  void init(Rng& rng);
  void set_zero();
  Vector forward(const Vector& x, MlpCache* cache = nullptr) const;
  Vector backward(const MlpCache& cache, const Vector& dy, MlpBlock& grad) const;
  void append_params(const std::string& prefix, std::vector<ParamView>& out);
};

struct CrossEntropy {
  double loss;
  Vector dlogits;
};

CrossEntropy softmax_cross_entropy(const Vector& logits, std::size_t target);
std::size_t argmax(const Vector& v);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_factor = 0.5;
  int decay_every = 50;
};

/// Learning rate in effect during `epoch` under step decay.
double scheduled_lr(const AdamConfig& cfg, int epoch);

class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One bias-corrected update with learning rate `lr`. `params` and `grads`
  /// must list tensors in the same order and shapes on every call.
  void step(std::span<const ParamView> params, std::span<const ParamView> grads, double lr);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Max over sampled coordinates of |analytic - central difference| / max(1, |analytic|).
/// `loss` is re-evaluated after perturbing entries of `params` in place; every
/// touched entry is restored before returning. `max_coords` limits the number of
/// coordinates probed per tensor (0 = all).
double grad_check(const std::function<double()>& loss, std::span<const ParamView> params,
                  std::span<const ParamView> analytic, double h, std::size_t max_coords,
                  Rng& rng);

bool all_finite(const Vector& v);

}  // namespace plantrec::num
