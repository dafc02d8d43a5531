#pragma once

// Per-plant evaluation of the full pipeline and the helpers that turn
// generated records into training material.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "plantrec/dataset.hpp"
#include "plantrec/metrics.hpp"
#include "plantrec/pcenc.hpp"
#include "plantrec/pipeline.hpp"
#include "plantrec/rvnn.hpp"

namespace plantrec {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Base point (bottom center of the bounding box) and height of a cloud.
Vec3 cloud_base(const PointCloud& p);
double cloud_height(const PointCloud& p);
NormalizationTransform fit_cloud_normalization(const std::vector<const PointCloud*>& clouds);

PcEncSample make_pcenc_sample(const RvnnModel& m, const LString& l, PointCloud clean,
                              std::vector<PointCloud> depth);

struct EvalOptions {
  bool refine = true;
  RefineOptions refine_options;
  ReconOptions recon;
  SegmentOptions segment;
  double skeleton_step = 0.0005;  ///< spacing of skeleton points for the Chamfer comparison
};

struct PlantEval {
  std::size_t id = 0;
  CloudVariant variant = CloudVariant::Clean;
  bool topology_ok = false;
  std::size_t repairs = 0;
  bool refined = false;
  ReconReport recon;
  double skeleton_chamfer = 0.0;
  std::array<ClassScores, kOrganClasses> segmentation{};
  double label_agreement = 0.0;
  bool labels_total = false;
  bool skeleton_leaf_free = false;
  LString predicted;
};

/// Infers a plant from `input`, optionally refines it against the same cloud,
/// and scores reconstruction, skeleton and segmentation against the ground
/// truth L-String. `input` must carry ground-truth labels.
PlantEval evaluate_plant(const LString& truth, const PointCloud& input, const PcEncoder& e,
                         const RvnnModel& m, const EvalOptions& options);

/// Scores an already predicted L-String (no inference).
PlantEval evaluate_prediction(const LString& truth, const LString& predicted, const PointCloud& input,
                              const EvalOptions& options);

/// One header line plus one row per plant.
std::string eval_csv(const std::vector<PlantEval>& rows);
/// Mean and standard deviation of every metric per cloud variant.
std::string eval_summary(const std::vector<PlantEval>& rows);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& v);

}  // namespace plantrec
