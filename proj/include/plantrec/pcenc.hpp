#pragma once

// Point-cloud encoder: shared per-point MLP, max-pool over points and a
// regression head onto the auto-encoder latent space.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "plantrec/checkpoint.hpp"
#include "plantrec/geometry.hpp"
#include "plantrec/numcore.hpp"

namespace plantrec {

struct PcEncConfig {
  std::size_t h1 = 64;
  std::size_t h2 = 128;
  std::size_t width = 1024;  ///< pooled feature size
  std::size_t head = 512;
  std::size_t latent = 100;
  std::size_t budget = 2048;  ///< points fed to the network
  std::uint64_t eval_seed = 0x5eed;
};

/// Maps world coordinates to network coordinates: (p + translation) * scale.
struct NormalizationTransform {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p + translation) * scale; }
  Vec3 invert(const Vec3& q) const { return q / scale - translation; }
};

/// Translation moves the mean plant base to the origin, scale is one over the
/// mean plant height.
NormalizationTransform fit_normalization(const std::vector<Vec3>& bases, const std::vector<double>& heights);

struct PcEncoder {
  PcEncConfig config;
  num::DenseLayer p1, p2, p3;  // per-point 3 -> h1 -> h2 -> width
  num::DenseLayer r1, r2;      // width -> head -> latent
  NormalizationTransform norm;
  std::uint64_t rvnn_hash = 0;  ///< checkpoint hash of the auto-encoder providing the targets

  explicit PcEncoder(PcEncConfig cfg = {});
  void init(num::Rng& rng);
  void set_zero();
  std::vector<num::ParamView> param_views();
};

/// Canonical network input: normalized, sorted, de-duplicated points, reduced
/// to the budget by a seeded subsample of that canonical order. Depends only on
/// the set of input points, not their order or multiplicity.
num::DenseMatrix canonical_input(const PointCloud& p, const NormalizationTransform& norm,
                                 std::size_t budget, std::uint64_t seed);

struct PcEncCache {
  num::DenseMatrix x, h1, h2, h3;
  std::vector<Eigen::Index> argmax;  ///< winning point per pooled feature
  num::Vector pooled, head, out;
};

/// Forward pass on prepared (normalized) points.
num::Vector pcenc_forward(const PcEncoder& e, const num::DenseMatrix& x, PcEncCache* cache = nullptr);
/// Accumulates gradients for dL/d(out) = `dout`.
void pcenc_backward(const PcEncoder& e, const PcEncCache& cache, const num::Vector& dout, PcEncoder& grad);

/// Latent of a cloud. Throws std::invalid_argument on an empty cloud.
num::Vector encode_cloud(const PcEncoder& e, const PointCloud& p);

struct PcEncSample {
  PointCloud clean;
  std::vector<PointCloud> depth;  ///< single-view captures of the same plant
  num::Vector target;             ///< auto-encoder latent of the plant's tree
};

struct PcEncTrainConfig {
  PcEncConfig encoder;
  num::AdamConfig adam;
  int epochs = 100;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  double noise_sigma = 0.005;  ///< relative to the cloud's height
  double p_noisy = 0.25;
  double p_depth = 0.25;
};

struct PcEncEpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool best = false;
};

struct PcEncTrainResult {
  PcEncoder model;
  std::vector<PcEncEpochLog> log;
  int best_epoch = -1;
};

PcEncTrainResult train_pcenc(const std::vector<PcEncSample>& train, const std::vector<PcEncSample>& val,
                             const NormalizationTransform& norm, std::uint64_t rvnn_hash,
                             const PcEncTrainConfig& cfg,
                             const std::function<void(const PcEncEpochLog&, const PcEncoder& best)>& on_epoch = {});

std::vector<Tensor> pcenc_tensors(const PcEncoder& e);
PcEncoder pcenc_from_tensors(const std::vector<Tensor>& tensors);
void save_pcenc(const std::filesystem::path& path, const PcEncoder& e);
PcEncoder load_pcenc(const std::filesystem::path& path);

}  // namespace plantrec
