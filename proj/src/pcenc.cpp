#include "plantrec/pcenc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "plantrec/procgen.hpp"

namespace plantrec {

using num::DenseMatrix;
using num::Vector;

NormalizationTransform fit_normalization(const std::vector<Vec3>& bases, const std::vector<double>& heights) {
  if (bases.empty() || heights.empty()) throw std::invalid_argument("fit_normalization: no training plants");
  Vec3 mean_base = Vec3::Zero();
  for (const auto& b : bases) mean_base += b;
  mean_base /= static_cast<double>(bases.size());
  double mean_height = 0.0;
  for (double h : heights) mean_height += h;
  mean_height /= static_cast<double>(heights.size());
  if (!(mean_height > 0.0)) throw std::invalid_argument("fit_normalization: plant heights must be positive");
  return {-mean_base, 1.0 / mean_height};
}

PcEncoder::PcEncoder(PcEncConfig cfg)
    : config(cfg),
      p1(3, cfg.h1),
      p2(cfg.h1, cfg.h2),
      p3(cfg.h2, cfg.width),
      r1(cfg.width, cfg.head),
      r2(cfg.head, cfg.latent) {}

void PcEncoder::init(num::Rng& rng) {
  for (auto* l : {&p1, &p2, &p3, &r1, &r2}) l->init(rng);
}

void PcEncoder::set_zero() {
  for (auto* l : {&p1, &p2, &p3, &r1, &r2}) l->set_zero();
}

std::vector<num::ParamView> PcEncoder::param_views() {
  std::vector<num::ParamView> v;
  p1.append_params("point.l1", v);
  p2.append_params("point.l2", v);
  p3.append_params("point.l3", v);
  r1.append_params("head.l1", v);
  r2.append_params("head.l2", v);
  return v;
}

DenseMatrix canonical_input(const PointCloud& p, const NormalizationTransform& norm, std::size_t budget,
                            std::uint64_t seed) {
  if (p.empty()) throw std::invalid_argument("cannot encode an empty point cloud");
  if (budget == 0) throw std::invalid_argument("point budget must be >= 1");
  std::vector<Vec3> pts;
  pts.reserve(p.size());
  for (const auto& q : p.points) pts.push_back(norm.apply(q));
  auto less = [](const Vec3& a, const Vec3& b) {
    return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
  };
  std::sort(pts.begin(), pts.end(), less);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<std::size_t> keep(pts.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (keep.size() > budget) {
    num::Rng rng(seed);
    for (std::size_t i = 0; i < budget; ++i) std::swap(keep[i], keep[i + rng() % (keep.size() - i)]);
    keep.resize(budget);
    std::sort(keep.begin(), keep.end());
  }
  DenseMatrix x(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t i = 0; i < keep.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = pts[keep[i]].transpose();
  return x;
}

namespace {

DenseMatrix dense_tanh(const DenseMatrix& in, const num::DenseLayer& l) {
  DenseMatrix a = in * l.w.transpose();
  a.rowwise() += l.b.transpose();
  return a.array().tanh().matrix();
}

}  // namespace

Vector pcenc_forward(const PcEncoder& e, const DenseMatrix& x, PcEncCache* cache) {
  if (x.rows() == 0 || x.cols() != 3) throw num::ShapeError("point encoder expects an N x 3 input with N >= 1");
  DenseMatrix h1 = dense_tanh(x, e.p1);
  DenseMatrix h2 = dense_tanh(h1, e.p2);
  DenseMatrix h3 = dense_tanh(h2, e.p3);
  const Eigen::Index w = h3.cols();
  Vector pooled(w);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(w), 0);
  for (Eigen::Index j = 0; j < w; ++j) {
    double best = h3(0, j);
    for (Eigen::Index i = 1; i < h3.rows(); ++i) {
      if (h3(i, j) > best) {
        best = h3(i, j);
        arg[static_cast<std::size_t>(j)] = i;
      }
    }
    pooled[j] = best;
  }
  Vector head = e.r1.forward(pooled);
  Vector out = e.r2.forward(head);
  if (cache != nullptr) {
    cache->x = x;
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->h3 = std::move(h3);
    cache->argmax = std::move(arg);
    cache->pooled = std::move(pooled);
    cache->head = std::move(head);
    cache->out = out;
  }
  return out;
}

void pcenc_backward(const PcEncoder& e, const PcEncCache& c, const Vector& dout, PcEncoder& grad) {
  const Vector dhead = e.r2.backward(c.head, c.out, dout, grad.r2);
  const Vector dpool = e.r1.backward(c.pooled, c.head, dhead, grad.r1);

  // Only the points that won a max receive gradient; work on those rows alone.
  std::vector<Eigen::Index> rows(c.argmax);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const auto r = static_cast<Eigen::Index>(rows.size());
  auto local = [&](Eigen::Index row) {
    return static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), row) - rows.begin());
  };
  DenseMatrix x(r, c.x.cols()), h1(r, c.h1.cols()), h2(r, c.h2.cols());
  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::Index src = rows[static_cast<std::size_t>(i)];
    x.row(i) = c.x.row(src);
    h1.row(i) = c.h1.row(src);
    h2.row(i) = c.h2.row(src);
  }
  DenseMatrix da3 = DenseMatrix::Zero(r, c.h3.cols());
  for (Eigen::Index j = 0; j < c.h3.cols(); ++j) {
    const Eigen::Index src = c.argmax[static_cast<std::size_t>(j)];
    const double h = c.h3(src, j);
    da3(local(src), j) = dpool[j] * (1.0 - h * h);
  }
  grad.p3.w.noalias() += da3.transpose() * h2;
  grad.p3.b += da3.colwise().sum().transpose();
  DenseMatrix da2 = ((da3 * e.p3.w).array() * (1.0 - h2.array().square())).matrix();
  grad.p2.w.noalias() += da2.transpose() * h1;
  grad.p2.b += da2.colwise().sum().transpose();
  DenseMatrix da1 = ((da2 * e.p2.w).array() * (1.0 - h1.array().square())).matrix();
  grad.p1.w.noalias() += da1.transpose() * x;
  grad.p1.b += da1.colwise().sum().transpose();
}

Vector encode_cloud(const PcEncoder& e, const PointCloud& p) {
  return pcenc_forward(e, canonical_input(p, e.norm, e.config.budget, e.config.eval_seed));
}

// ---------------------------------------------------------------------------
// Training

namespace {

DenseMatrix training_input(const PointCloud& p, const NormalizationTransform& norm, std::size_t budget,
                           num::Rng& rng) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(budget, idx.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
  DenseMatrix x(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = norm.apply(p.points[idx[i]]).transpose();
  return x;
}

double cloud_height(const PointCloud& p) {
  const Bounds b = bounds_of(p.points);
  return b.max.z() - b.min.z();
}

double validation_loss(const PcEncoder& e, const std::vector<PcEncSample>& val) {
  double loss = 0.0;
  for (const auto& s : val) loss += (encode_cloud(e, s.clean) - s.target).squaredNorm();
  return loss / static_cast<double>(val.size());
}

}  // namespace

PcEncTrainResult train_pcenc(const std::vector<PcEncSample>& train, const std::vector<PcEncSample>& val,
                             const NormalizationTransform& norm, std::uint64_t rvnn_hash,
                             const PcEncTrainConfig& cfg,
                             const std::function<void(const PcEncEpochLog&, const PcEncoder&)>& on_epoch) {
  if (train.empty()) throw std::invalid_argument("train_pcenc: empty training set");
  if (cfg.batch == 0) throw std::invalid_argument("train_pcenc: batch size must be >= 1");
  for (const auto& s : train) {
    if (static_cast<std::size_t>(s.target.size()) != cfg.encoder.latent) {
      throw std::invalid_argument("train_pcenc: target latent size differs from the encoder output");
    }
  }
  num::Rng rng(cfg.seed);
  PcEncoder model(cfg.encoder);
  model.init(rng);
  model.norm = norm;
  model.rvnn_hash = rvnn_hash;
  PcEncoder grad(cfg.encoder);
  auto params = model.param_views();
  auto grads = grad.param_views();
  num::Adam adam(cfg.adam);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& selection = val.empty() ? train : val;

  PcEncTrainResult result{model, {}, -1};
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  PcEncCache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double lr = num::scheduled_lr(cfg.adam, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const PcEncSample& s = train[idx[i]];
        const double u = unit(rng);
        DenseMatrix x;
        if (u < cfg.p_depth && !s.depth.empty()) {
          x = training_input(s.depth[rng() % s.depth.size()], norm, cfg.encoder.budget, rng);
        } else if (u < cfg.p_depth + cfg.p_noisy) {
          x = training_input(add_noise(s.clean, cfg.noise_sigma * cloud_height(s.clean), rng), norm,
                             cfg.encoder.budget, rng);
        } else {
          x = training_input(s.clean, norm, cfg.encoder.budget, rng);
        }
        const Vector y = pcenc_forward(model, x, &cache);
        const Vector diff = y - s.target;
        epoch_loss += diff.squaredNorm();
        pcenc_backward(model, cache, 2.0 * diff, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (double& v : g.values) v *= inv;
      }
      adam.step(params, grads, lr);
    }
    PcEncEpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    log.val_loss = validation_loss(model, selection);
    if (!std::isfinite(log.val_loss)) throw std::runtime_error("point encoder training diverged");
    if (log.val_loss < best_loss) {
      best_loss = log.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      log.best = true;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, result.model);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<Tensor> pcenc_tensors(const PcEncoder& e) {
  auto& ee = const_cast<PcEncoder&>(e);
  const auto& c = e.config;
  std::vector<Tensor> out;
  for (auto [name, v] : {std::pair<const char*, std::size_t>{"config.h1", c.h1},
                         {"config.h2", c.h2},
                         {"config.width", c.width},
                         {"config.head", c.head},
                         {"config.latent", c.latent},
                         {"config.budget", c.budget}}) {
    out.push_back(scalar_tensor(name, static_cast<double>(v)));
  }
  out.push_back(scalar_tensor("config.eval_seed_hi", static_cast<double>(c.eval_seed >> 32)));
  out.push_back(scalar_tensor("config.eval_seed_lo", static_cast<double>(c.eval_seed & 0xffffffffu)));
  out.push_back({"norm.translation", {3}, {e.norm.translation.x(), e.norm.translation.y(), e.norm.translation.z()}});
  out.push_back(scalar_tensor("norm.scale", e.norm.scale));
  out.push_back(scalar_tensor("rvnn_hash.hi", static_cast<double>(e.rvnn_hash >> 32)));
  out.push_back(scalar_tensor("rvnn_hash.lo", static_cast<double>(e.rvnn_hash & 0xffffffffu)));
  for (const auto& v : ee.param_views()) out.push_back(tensor_from_view(v));
  return out;
}

PcEncoder pcenc_from_tensors(const std::vector<Tensor>& tensors) {
  auto scalar = [&](std::string_view name) {
    const Tensor& t = require_tensor(tensors, name);
    if (t.data.size() != 1) throw CheckpointError("tensor '" + std::string(name) + "' is not a scalar");
    return t.data[0];
  };
  auto count = [&](std::string_view name) { return static_cast<std::size_t>(scalar(name)); };
  auto u64 = [&](std::string_view hi, std::string_view lo) {
    return (static_cast<std::uint64_t>(scalar(hi)) << 32) | static_cast<std::uint64_t>(scalar(lo));
  };
  PcEncConfig cfg;
  cfg.h1 = count("config.h1");
  cfg.h2 = count("config.h2");
  cfg.width = count("config.width");
  cfg.head = count("config.head");
  cfg.latent = count("config.latent");
  cfg.budget = count("config.budget");
  cfg.eval_seed = u64("config.eval_seed_hi", "config.eval_seed_lo");
  PcEncoder e(cfg);
  const Tensor& t = require_tensor(tensors, "norm.translation");
  if (t.data.size() != 3) throw CheckpointError("norm.translation must have 3 entries");
  e.norm.translation = Vec3(t.data[0], t.data[1], t.data[2]);
  e.norm.scale = scalar("norm.scale");
  if (!(e.norm.scale > 0.0)) throw CheckpointError("normalization scale must be positive");
  e.rvnn_hash = u64("rvnn_hash.hi", "rvnn_hash.lo");
  load_into_views(tensors, e.param_views());
  return e;
}

void save_pcenc(const std::filesystem::path& path, const PcEncoder& e) { write_checkpoint(path, pcenc_tensors(e)); }

PcEncoder load_pcenc(const std::filesystem::path& path) { return pcenc_from_tensors(read_checkpoint(path)); }

}  // namespace plantrec
