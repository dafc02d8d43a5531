#pragma once

// Software rasterization: orthographic coverage masks for silhouette
// comparison and the perspective ray caster behind simulated depth views.

#include <cstdint>
#include <vector>

#include "plantrec/geometry.hpp"

namespace plantrec {

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 1 = covered

  double coverage() const;
};

/// Orthographic view looking along `direction` at a square window of
/// half-size `radius` around `center`.
struct OrthoView {
  Vec3 direction = -Vec3::UnitZ();
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  int resolution = 256;
};

/// Pixel (i, j) is covered when its center falls inside (or on the border of)
/// the projection of any triangle.
Mask rasterize(const TriangleMesh& m, const OrthoView& view);

/// `n` roughly uniform unit directions on the Fibonacci sphere.
std::vector<Vec3> fibonacci_directions(std::size_t n);

/// Exact ray/triangle intersection (Moller-Trumbore); `t` must exceed `t_min`.
bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                        const Vec3& c, double t_min, double& t);

}  // namespace plantrec
