#include "plantrec/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace plantrec::num {

DenseMatrix xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) {
    throw std::invalid_argument("xavier_init: fan dimensions must be >= 1");
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseMatrix w(fan_out, fan_in);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

namespace {

void apply_activation(Activation act, Vector& v) {
  if (act == Activation::Tanh) v = v.array().tanh().matrix();
}

Vector activation_grad(Activation act, const Vector& y, const Vector& dy) {
  if (act == Activation::Tanh) return (dy.array() * (1.0 - y.array().square())).matrix();
  return dy;
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : w(DenseMatrix::Zero(out, in)), b(Vector::Zero(out)), activation(act) {}

void DenseLayer::init(Rng& rng) {
  w = xavier_init(in_dim(), out_dim(), rng);
  b.setZero();
}

void DenseLayer::set_zero() {
  w.setZero();
  b.setZero();
}

Vector DenseLayer::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != in_dim()) {
    std::ostringstream msg;
    msg << "dense layer expects input of size " << in_dim() << ", got " << x.size();
    throw ShapeError(msg.str());
  }
  Vector y = w * x + b;
  apply_activation(activation, y);
  return y;
}

Vector DenseLayer::backward(const Vector& x, const Vector& y, const Vector& dy,
                            DenseLayer& grad) const {
  if (static_cast<std::size_t>(x.size()) != in_dim() ||
      static_cast<std::size_t>(y.size()) != out_dim() || dy.size() != y.size()) {
    throw std::logic_error("dense layer backward: cache does not match layer shape");
  }
  const Vector dz = activation_grad(activation, y, dy);
  grad.w.noalias() += dz * x.transpose();
  grad.b += dz;
  return w.transpose() * dz;
}

void DenseLayer::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".w", std::span<double>(w.data(), static_cast<std::size_t>(w.size())),
                 {out_dim(), in_dim()}});
  out.push_back({prefix + ".b", std::span<double>(b.data(), static_cast<std::size_t>(b.size())),
                 {out_dim()}});
}

MlpBlock::MlpBlock(std::size_t in, std::size_t hidden, std::size_t out, Activation out_act)
    : l1(in, hidden, Activation::Tanh), l2(hidden, out, out_act) {}

void MlpBlock::init(Rng& rng) {
  l1.init(rng);
  l2.init(rng);
}

void MlpBlock::set_zero() {
  l1.set_zero();
  l2.set_zero();
}

Vector MlpBlock::forward(const Vector& x, MlpCache* cache) const {
  Vector h = l1.forward(x);
  Vector y = l2.forward(h);
  if (cache != nullptr) {
    cache->x = x;
    cache->h = std::move(h);
    cache->y = y;
  }
  return y;
}

Vector MlpBlock::backward(const MlpCache& cache, const Vector& dy, MlpBlock& grad) const {
  const Vector dh = l2.backward(cache.h, cache.y, dy, grad.l2);
  return l1.backward(cache.x, cache.h, dh, grad.l1);
}

void MlpBlock::append_params(const std::string& prefix, std::vector<ParamView>& out) {
  l1.append_params(prefix + ".l1", out);
  l2.append_params(prefix + ".l2", out);
}

CrossEntropy softmax_cross_entropy(const Vector& logits, std::size_t target) {
  if (target >= static_cast<std::size_t>(logits.size())) {
    throw std::invalid_argument("softmax_cross_entropy: target class out of range");
  }
  const double mx = logits.maxCoeff();
  const Vector e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  CrossEntropy out;
  out.loss = std::log(z) - (logits[static_cast<Eigen::Index>(target)] - mx);
  out.dlogits = e / z;
  out.dlogits[static_cast<Eigen::Index>(target)] -= 1.0;
  return out;
}

std::size_t argmax(const Vector& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<std::size_t>(idx);
}

double scheduled_lr(const AdamConfig& cfg, int epoch) {
  if (cfg.decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

void Adam::step(std::span<const ParamView> params, std::span<const ParamView> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam: parameter and gradient lists differ in length");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].values.size() != params[i].values.size() ||
        m_[i].size() != params[i].values.size()) {
      throw std::invalid_argument("adam: shape mismatch for " + params[i].name);
    }
    for (std::size_t j = 0; j < grads[i].values.size(); ++j) {
      if (!std::isfinite(grads[i].values[j])) {
        std::ostringstream msg;
        msg << "adam: non-finite gradient in " << grads[i].name << "[" << j << "] at step "
            << t_ + 1;
        throw std::runtime_error(msg.str());
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    const auto g = grads[i].values;
    const auto p = params[i].values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

double grad_check(const std::function<double()>& loss, std::span<const ParamView> params,
                  std::span<const ParamView> analytic, double h, std::size_t max_coords,
                  Rng& rng) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: parameter and gradient lists differ in length");
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto values = params[t].values;
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords != 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + h;
      const double up = loss();
      values[c] = saved - h;
      const double down = loss();
      values[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("grad_check: non-finite loss while probing " + params[t].name);
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t].values[c];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace plantrec::num
