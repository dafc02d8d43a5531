#include "plantrec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plantrec {

std::string_view organ_name(OrganClass c) {
  switch (c) {
    case OrganClass::Stem: return "stem";
    case OrganClass::Leaf: return "leaf";
    case OrganClass::Petiole: return "petiole";
    case OrganClass::Cotyledons: return "cotyledons";
  }
  return "unknown";
}

Vec3 Part::surface_point(double s, double t) const {
  const int col_cells = tube ? cols : cols - 1;
  const double rf = std::clamp(s, 0.0, 1.0) * (rows - 1);
  const double cf = std::clamp(t, 0.0, 1.0) * col_cells;
  const int r0 = std::min(static_cast<int>(rf), rows - 2);
  const int c0 = std::min(static_cast<int>(cf), col_cells - 1);
  const double a = rf - r0;
  const double b = cf - c0;
  const int c1 = tube ? (c0 + 1) % cols : c0 + 1;
  const Vec3& p00 = at(r0, c0);
  const Vec3& p10 = at(r0 + 1, c0);
  const Vec3& p01 = at(r0, c1);
  const Vec3& p11 = at(r0 + 1, c1);
  // Same diagonal as part_mesh: (p00, p10, p01) and (p11, p01, p10).
  if (a + b <= 1.0) return p00 + a * (p10 - p00) + b * (p01 - p00);
  return p11 + (1.0 - a) * (p01 - p11) + (1.0 - b) * (p10 - p11);
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto voff = static_cast<std::uint32_t>(vertices.size());
  const auto poff = static_cast<std::uint32_t>(parts.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles) triangles.push_back({t[0] + voff, t[1] + voff, t[2] + voff});
  for (auto p : other.triangle_part) triangle_part.push_back(p + poff);
  parts.insert(parts.end(), other.parts.begin(), other.parts.end());
}

TriangleMesh part_mesh(const Part& p) {
  TriangleMesh m;
  m.vertices = p.grid;
  m.parts.push_back({p.organ, p.instance});
  auto idx = [&](int r, int c) { return static_cast<std::uint32_t>(r * p.cols + c); };
  const int col_cells = p.tube ? p.cols : p.cols - 1;
  for (int r = 0; r + 1 < p.rows; ++r) {
    for (int c = 0; c < col_cells; ++c) {
      const int c1 = p.tube ? (c + 1) % p.cols : c + 1;
      m.triangles.push_back({idx(r, c), idx(r + 1, c), idx(r, c1)});
      m.triangles.push_back({idx(r + 1, c1), idx(r, c1), idx(r + 1, c)});
    }
  }
  if (p.tube) {
    const auto s = static_cast<std::uint32_t>(m.vertices.size());
    m.vertices.push_back(p.cap_start);
    m.vertices.push_back(p.cap_end);
    const int last = p.rows - 1;
    for (int c = 0; c < p.cols; ++c) {
      const int c1 = (c + 1) % p.cols;
      m.triangles.push_back({s, idx(0, c1), idx(0, c)});
      m.triangles.push_back({s + 1, idx(last, c), idx(last, c1)});
    }
  }
  m.triangle_part.assign(m.triangles.size(), 0);
  return m;
}

TriangleMesh to_mesh(const PlantGeometry& g) {
  TriangleMesh m;
  for (const auto& p : g.parts) m.append(part_mesh(p));
  return m;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double mesh_area(const TriangleMesh& m) {
  double area = 0.0;
  for (const auto& t : m.triangles) {
    area += triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
  }
  return area;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double n2 = n.squaredNorm();
  if (n2 > 0.0) {
    const double d = (p - a).dot(n) / n2;
    const Vec3 q = p - d * n;
    // barycentric inside test on the projected point
    const Vec3 c0 = (b - a).cross(q - a);
    const Vec3 c1 = (c - b).cross(q - b);
    const Vec3 c2 = (a - c).cross(q - c);
    if (c0.dot(n) >= 0.0 && c1.dot(n) >= 0.0 && c2.dot(n) >= 0.0) return (p - q).norm();
  }
  return std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                   point_segment_distance(p, c, a)});
}

void PointCloud::check() const {
  if (!labels.empty() && labels.size() != points.size()) {
    throw std::invalid_argument("point cloud label array length differs from point count");
  }
  if (!instances.empty() && instances.size() != points.size()) {
    throw std::invalid_argument("point cloud instance array length differs from point count");
  }
  for (const auto& p : points) {
    if (!p.allFinite()) throw std::invalid_argument("point cloud contains a non-finite coordinate");
  }
}

std::vector<Vec3> skeleton_points(const Skeleton& s, double step) {
  std::vector<Vec3> out = s.vertices;
  for (const auto& e : s.edges) {
    const Vec3& a = s.vertices[e[0]];
    const Vec3& b = s.vertices[e[1]];
    const int n = static_cast<int>(std::ceil((b - a).norm() / step));
    for (int k = 1; k < n; ++k) out.push_back(a + (b - a) * (static_cast<double>(k) / n));
  }
  return out;
}

Bounds bounds_of(const std::vector<Vec3>& pts) {
  Bounds b;
  for (const auto& p : pts) b.extend(p);
  return b;
}

Bounds bounds_of(const TriangleMesh& m) {
  Bounds b;
  for (const auto& t : m.triangles) {
    for (auto i : t) b.extend(m.vertices[i]);
  }
  return b;
}

}  // namespace plantrec
