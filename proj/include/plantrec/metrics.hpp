#pragma once

// Evaluation measures: Chamfer accuracy/completeness, Hausdorff, multi-view
// silhouette error, connected components and per-class classification scores.

#include <cstdint>
#include <random>
#include <vector>

#include "plantrec/geometry.hpp"
#include "plantrec/nn_index.hpp"

namespace plantrec {

/// Mean over a in A of the distance to the nearest b in B.
double chamfer_one_sided(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double chamfer_one_sided(const std::vector<Vec3>& a, const NnIndex& b);
double chamfer_bidirectional(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

inline constexpr std::size_t kSilhouetteViews = 400;
inline constexpr int kSilhouetteResolution = 256;

/// Mean |maskA - maskB| over all pixels of `views` orthographic views placed
/// on a Fibonacci sphere and framing the union bounding sphere.
double silhouette_error(const TriangleMesh& a, const TriangleMesh& b,
                        std::size_t views = kSilhouetteViews,
                        int resolution = kSilhouetteResolution);
/// Same with explicit view directions.
double silhouette_error(const TriangleMesh& a, const TriangleMesh& b,
                        const std::vector<Vec3>& directions, int resolution);

inline constexpr double kWeldTolerance = 1e-7;

/// Components of the vertex graph after welding vertices closer than `weld`.
/// Vertices not used by any triangle are ignored.
std::size_t connected_components(const TriangleMesh& m, double weld = kWeldTolerance);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  bool absent = false;  ///< no ground truth and no prediction: all scores reported as 1
};

/// Per-class scores for classes 0..classes-1. Empty denominators give 0
/// except for the fully absent case.
std::vector<ClassScores> classification_metrics(const std::vector<std::uint8_t>& pred,
                                                const std::vector<std::uint8_t>& gt,
                                                std::size_t classes);

struct ReconReport {
  double accuracy = 0.0;      ///< reconstruction -> ground truth
  double completeness = 0.0;  ///< ground truth -> reconstruction
  double hausdorff = 0.0;
  double silhouette = 0.0;
  std::size_t components = 0;
};

struct ReconOptions {
  std::size_t samples = 20000;
  std::size_t views = kSilhouetteViews;
  int resolution = kSilhouetteResolution;
  std::uint64_t seed = 0;
};

ReconReport evaluate_reconstruction(const TriangleMesh& pred, const TriangleMesh& gt,
                                    const ReconOptions& opt = {});

}  // namespace plantrec
