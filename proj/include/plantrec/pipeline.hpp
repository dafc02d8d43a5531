#pragma once

// End-to-end inference from a point cloud, Chamfer-driven parameter
// refinement and the three downstream tasks.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "plantrec/geometry.hpp"
#include "plantrec/lstring.hpp"
#include "plantrec/pcenc.hpp"
#include "plantrec/rvnn.hpp"

namespace plantrec {

class CompatibilityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Throws CompatibilityError unless the encoder was trained against `m`.
void check_compatible(const PcEncoder& e, const RvnnModel& m);

struct InferResult {
  LString lstring;
  AxialBinaryTree tree;
  std::vector<std::string> repairs;
};

/// Decoded parameters are quantized like every generated L-String, so the
/// text form round-trips exactly.
InferResult infer(const PointCloud& p, const PcEncoder& e, const RvnnModel& m);

struct RefineOptions {
  bool stems = true;
  bool leaves = true;
  bool phyllotaxis = true;
  bool local_scope = true;  ///< fit each stem against the plant up to its own organs only
  int sweeps = 3;
  double rel_tol = 1e-3;
  double bracket = 0.35;  ///< search half-width relative to the current value
  double min_gain = 0.0;  ///< relative objective decrease a change must achieve
  std::size_t samples_per_part = 512;
  std::uint64_t seed = 0x5a3d;
};

struct RefineStep {
  int stage = 1;
  std::size_t item = 0;   ///< module index in the L-String
  std::size_t param = 0;  ///< parameter index inside the module
  double value_before = 0.0;
  double value_after = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct RefineReport {
  std::vector<RefineStep> accepted;
  std::size_t evaluations = 0;
  std::size_t failed_evaluations = 0;  ///< degenerate geometry, treated as rejected
  double stage1_initial = 0.0, stage1_final = 0.0;
  double stage2_initial = 0.0, stage2_final = 0.0;
};

/// Stage 1 fits length, growing angle and phyllotaxis of every stem module,
/// bottom-up, to the cloud with the one-sided Chamfer distance from the stem,
/// petiole and cotyledon surfaces to `p`. Stage 2 fits leaf length, width and
/// curvature with the bidirectional Chamfer distance between the whole plant and `p`.
/// Coordinate descent with golden-section line searches; a change is kept only
/// if it strictly lowers the stage objective. Topology never changes.
LString refine(const LString& l, const PointCloud& p, const RefineOptions& options = {},
               RefineReport* report = nullptr);

TriangleMesh reconstruct(const LString& l);
Skeleton extract_skeleton(const LString& l);

struct SegmentOptions {
  std::size_t k = 10;
  std::size_t reference_points = 131072;
  std::uint64_t seed = 0x5e6;
};

struct SegmentationResult {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint16_t> instances;
  std::size_t k = 0;
};

/// kNN label transfer from a labeled sample of the reconstruction. Ties go to
/// the class of the nearest reference point; instance ids are voted among
/// neighbors of the winning class.
SegmentationResult segment(const LString& l, const PointCloud& p, const SegmentOptions& options = {});

}  // namespace plantrec
