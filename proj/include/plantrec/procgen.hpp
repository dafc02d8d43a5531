#pragma once

// Procedural Chenopodium album generator: topology catalog, age-driven
// parameter growth, turtle interpretation into labeled geometry, point
// sampling and simulated acquisition corruptions.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "plantrec/geometry.hpp"
#include "plantrec/lstring.hpp"

namespace plantrec {

using Rng = std::mt19937_64;

class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BranchSpec {
  int at = 0;      ///< index of the main-axis stem unit bearing the branch
  int length = 1;  ///< number of units on the branch (Branch node + Stem successors)

  bool operator==(const BranchSpec&) const = default;
  auto operator<=>(const BranchSpec&) const = default;
};

/// Branching pattern of one plant structure.
struct Topology {
  int main_stems = 1;
  std::vector<BranchSpec> branches;

  std::size_t node_count() const;
  bool operator==(const Topology&) const = default;
  auto operator<=>(const Topology&) const = default;
};

/// Every topology the generator knows, in a fixed shuffled order; structure
/// seeds index into it, so distinct seeds below its size give distinct shapes.
const std::vector<Topology>& topology_catalog();
const Topology& topology_for(std::uint64_t structure_seed);

inline constexpr double kMinAgeDays = 12.0;
inline constexpr double kMaxAgeDays = 19.0;

struct GrowthConfig {
  std::uint64_t structure_seed = 0;
  double age_days = 15.0;
  std::uint64_t param_seed = 0;
};

/// Logistic growth factor in (0.2, 1] for an organ that emerged on
/// `emergence_day`; non-decreasing in age.
double growth_factor(double age_days, double emergence_day);

LString grow(const GrowthConfig& cfg);

struct Interpretation {
  PlantGeometry geometry;
  Skeleton skeleton;
};

inline constexpr double kSkeletonStep = 0.0005;  // m

/// Turtle interpretation of an L-String. Every organ module except Branch
/// emits one labeled part; Branch only re-orients the turtle.
Interpretation interpret_full(const LString& l, double skeleton_step = kSkeletonStep);
PlantGeometry interpret(const LString& l);
Skeleton skeleton_of(const LString& l, double step = kSkeletonStep);

/// Area-weighted uniform surface sampling; labels come from the source part.
PointCloud sample_points(const PlantGeometry& g, std::size_t total, Rng& rng);
PointCloud sample_points(const TriangleMesh& m, std::size_t total, Rng& rng);

PointCloud add_noise(const PointCloud& p, double sigma, Rng& rng);

/// Height of the plant (z extent of its geometry).
double plant_height(const PlantGeometry& g);

// Simulated monocular depth capture.
struct Camera {
  Vec3 eye = Vec3(0, -1, 1);
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
  double fov_y_deg = 40.0;
  int width = 256;
  int height = 256;
};

/// Camera at 45 degrees elevation, two plant heights from the plant center,
/// looking at the center from azimuth `azimuth_deg`.
Camera default_depth_camera(const PlantGeometry& g, double azimuth_deg, int resolution = 256);

/// Ray-cast depth buffer back-projected to 3D; each pixel contributes its
/// first hit, labeled by the part it hit. Throws GeometryError when nothing is
/// visible.
PointCloud render_depth_view(const PlantGeometry& g, const Camera& camera);

}  // namespace plantrec
