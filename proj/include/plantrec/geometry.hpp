#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace plantrec {

using Vec3 = Eigen::Vector3d;

enum class OrganClass : std::uint8_t { Stem = 0, Leaf = 1, Petiole = 2, Cotyledons = 3 };
inline constexpr std::size_t kOrganClasses = 4;

std::string_view organ_name(OrganClass c);

/// One interpreted organ surface. The surface is a `rows x cols` vertex grid
/// split into triangles; tubes wrap around in the column direction and are
/// closed by two fan caps around `cap_start` / `cap_end`.
struct Part {
  OrganClass organ = OrganClass::Stem;
  std::uint16_t instance = 0;
  std::size_t item = 0;  ///< index of the generating module in the L-String
  int rows = 0;
  int cols = 0;
  bool tube = false;
  std::vector<Vec3> grid;
  Vec3 cap_start = Vec3::Zero();
  Vec3 cap_end = Vec3::Zero();
  std::vector<Vec3> axis;  ///< center line (tubes) or nerve (blades)

  const Vec3& at(int r, int c) const { return grid[static_cast<std::size_t>(r * cols + c)]; }

  /// Point of the triangulated surface at parametric coordinates in [0,1)^2.
  /// Continuous in the grid vertices, so smooth under parameter changes.
  Vec3 surface_point(double s, double t) const;
};

struct PlantGeometry {
  std::vector<Part> parts;
};

struct PartLabel {
  OrganClass organ;
  std::uint16_t instance;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<std::uint32_t> triangle_part;  ///< index into `parts`
  std::vector<PartLabel> parts;

  bool empty() const { return triangles.empty(); }
  void append(const TriangleMesh& other);
};

TriangleMesh part_mesh(const Part& p);
TriangleMesh to_mesh(const PlantGeometry& g);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double mesh_area(const TriangleMesh& m);
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::uint8_t> labels;      ///< organ class per point, optional
  std::vector<std::uint16_t> instances;  ///< instance id per point, optional

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool labeled() const { return !labels.empty(); }
  /// Throws std::invalid_argument when label/instance arrays disagree in length
  /// or a coordinate is not finite.
  void check() const;
};

struct Skeleton {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 2>> edges;
};

/// Dense point set along all skeleton edges, spaced at most `step` apart;
/// used when comparing skeletons with Chamfer distances.
std::vector<Vec3> skeleton_points(const Skeleton& s, double step);

struct Bounds {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool valid() const { return (max.array() >= min.array()).all(); }
  Vec3 center() const { return 0.5 * (min + max); }
};

Bounds bounds_of(const std::vector<Vec3>& pts);
Bounds bounds_of(const TriangleMesh& m);

}  // namespace plantrec
