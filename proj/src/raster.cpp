#include "plantrec/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "plantrec/procgen.hpp"

namespace plantrec {

double Mask::coverage() const {
  if (pixels.empty()) return 0.0;
  std::size_t n = 0;
  for (auto p : pixels) n += p;
  return static_cast<double>(n) / static_cast<double>(pixels.size());
}

namespace {

// Orthonormal (right, up) pair perpendicular to `d`.
void view_basis(const Vec3& d, Vec3& right, Vec3& up) {
  const Vec3 helper = std::abs(d.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  right = helper.cross(d).normalized();
  up = d.cross(right);
}

}  // namespace

Mask rasterize(const TriangleMesh& m, const OrthoView& view) {
  Mask mask;
  const int res = view.resolution;
  mask.width = mask.height = res;
  mask.pixels.assign(static_cast<std::size_t>(res) * res, 0);
  const Vec3 d = view.direction.normalized();
  Vec3 right, up;
  view_basis(d, right, up);
  const double pixel = 2.0 * view.radius / res;

  std::vector<Eigen::Vector2d> proj(m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3 q = m.vertices[i] - view.center;
    // pixel-space coordinates; pixel centers sit at integer + 0.5
    proj[i] = {(q.dot(right) + view.radius) / pixel, (view.radius - q.dot(up)) / pixel};
  }
  for (const auto& t : m.triangles) {
    const auto& a = proj[t[0]];
    const auto& b = proj[t[1]];
    const auto& c = proj[t[2]];
    const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area == 0.0) continue;
    const double sgn = area > 0.0 ? 1.0 : -1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(res - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));
    auto edge = [sgn](const Eigen::Vector2d& p, const Eigen::Vector2d& q, double x, double y) {
      return sgn * ((q.x() - p.x()) * (y - p.y()) - (q.y() - p.y()) * (x - p.x()));
    };
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        if (edge(a, b, px, py) >= 0.0 && edge(b, c, px, py) >= 0.0 && edge(c, a, px, py) >= 0.0) {
          mask.pixels[static_cast<std::size_t>(y) * res + x] = 1;
        }
      }
    }
  }
  return mask;
}

std::vector<Vec3> fibonacci_directions(std::size_t n) {
  std::vector<Vec3> out;
  out.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return out;
}

bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                        const Vec3& c, double t_min, double& t) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  // Edges are widened slightly so rays through a shared edge cannot slip
  // between its two triangles.
  constexpr double kEdge = 1e-12;
  const double u = s.dot(p) * inv;
  if (u < -kEdge || u > 1.0 + kEdge) return false;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < -kEdge || u + v > 1.0 + kEdge) return false;
  const double hit = e2.dot(q) * inv;
  if (hit <= t_min) return false;
  t = hit;
  return true;
}

PointCloud render_depth_view(const PlantGeometry& g, const Camera& camera) {
  const TriangleMesh m = to_mesh(g);
  const int w = camera.width;
  const int h = camera.height;
  if (w <= 0 || h <= 0) throw GeometryError("depth camera needs a positive resolution");
  const Vec3 f = (camera.target - camera.eye).normalized();
  const Vec3 r = f.cross(camera.up).normalized();
  const Vec3 u = r.cross(f);
  const double tan_half = std::tan(0.5 * camera.fov_y_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(w) / h;

  std::vector<double> depth(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> hit_tri(depth.size(), 0);
  auto ray = [&](int x, int y) {
    const double nx = ((x + 0.5) / w * 2.0 - 1.0) * tan_half * aspect;
    const double ny = (1.0 - (y + 0.5) / h * 2.0) * tan_half;
    return Vec3((f + nx * r + ny * u).normalized());
  };
  constexpr double kNear = 1e-6;
  for (std::uint32_t ti = 0; ti < m.triangles.size(); ++ti) {
    const auto& t = m.triangles[ti];
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    bool behind = false;
    for (auto vi : t) {
      const Vec3 v = m.vertices[vi] - camera.eye;
      const double z = v.dot(f);
      if (z <= kNear) {
        behind = true;
        break;
      }
      const double px = (v.dot(r) / z / (tan_half * aspect) + 1.0) * 0.5 * w;
      const double py = (1.0 - v.dot(u) / z / tan_half) * 0.5 * h;
      xmin = std::min(xmin, px);
      xmax = std::max(xmax, px);
      ymin = std::min(ymin, py);
      ymax = std::max(ymax, py);
    }
    if (behind) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(xmin)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(xmax)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(ymin)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(ymax)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double hit = 0.0;
        if (!intersect_triangle(camera.eye, ray(x, y), m.vertices[t[0]], m.vertices[t[1]],
                                m.vertices[t[2]], kNear, hit)) {
          continue;
        }
        const std::size_t px = static_cast<std::size_t>(y) * w + x;
        if (hit < depth[px]) {
          depth[px] = hit;
          hit_tri[px] = ti;
        }
      }
    }
  }

  PointCloud out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t px = static_cast<std::size_t>(y) * w + x;
      if (!std::isfinite(depth[px])) continue;
      out.points.push_back(camera.eye + depth[px] * ray(x, y));
      const PartLabel& lab = m.parts[m.triangle_part[hit_tri[px]]];
      out.labels.push_back(static_cast<std::uint8_t>(lab.organ));
      out.instances.push_back(lab.instance);
    }
  }
  if (out.empty()) throw GeometryError("depth view is empty: the camera sees no geometry");
  return out;
}

}  // namespace plantrec
