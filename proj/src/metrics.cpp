#include "plantrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "plantrec/procgen.hpp"
#include "plantrec/raster.hpp"

namespace plantrec {

namespace {

void require_nonempty(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("distance between empty point sets");
}

std::vector<double> nearest_distances(const std::vector<Vec3>& a, const NnIndex& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b.nearest(a[i]).distance;
  return d;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double chamfer_one_sided(const std::vector<Vec3>& a, const NnIndex& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("distance between empty point sets");
  return mean(nearest_distances(a, b));
}

double chamfer_one_sided(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  require_nonempty(a, b);
  return chamfer_one_sided(a, NnIndex(b));
}

double chamfer_bidirectional(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  return chamfer_one_sided(a, b) + chamfer_one_sided(b, a);
}

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  require_nonempty(a, b);
  const auto ab = nearest_distances(a, NnIndex(b));
  const auto ba = nearest_distances(b, NnIndex(a));
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

double silhouette_error(const TriangleMesh& a, const TriangleMesh& b,
                        const std::vector<Vec3>& directions, int resolution) {
  if (a.empty() && b.empty()) throw std::invalid_argument("silhouette error of two empty meshes");
  if (directions.empty()) throw std::invalid_argument("silhouette error needs at least one view");
  Bounds box = bounds_of(a);
  const Bounds bb = bounds_of(b);
  if (bb.valid()) {
    box.extend(bb.min);
    box.extend(bb.max);
  }
  const Vec3 center = box.center();
  double radius = 0.0;
  for (const TriangleMesh* m : {&a, &b}) {
    for (const auto& t : m->triangles) {
      for (auto i : t) radius = std::max(radius, (m->vertices[i] - center).norm());
    }
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("silhouette error: degenerate bounding sphere");
  }
  radius *= 1.02;
  double total = 0.0;
  for (const auto& d : directions) {
    const OrthoView view{d, center, radius, resolution};
    const Mask ma = rasterize(a, view);
    const Mask mb = rasterize(b, view);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < ma.pixels.size(); ++i) diff += ma.pixels[i] != mb.pixels[i];
    total += static_cast<double>(diff) / static_cast<double>(ma.pixels.size());
  }
  return total / static_cast<double>(directions.size());
}

double silhouette_error(const TriangleMesh& a, const TriangleMesh& b, std::size_t views,
                        int resolution) {
  return silhouette_error(a, b, fibonacci_directions(views), resolution);
}

std::size_t connected_components(const TriangleMesh& m, double weld) {
  const std::size_t n = m.vertices.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](std::size_t x, std::size_t y) {
    x = find(x);
    y = find(y);
    if (x != y) parent[std::max(x, y)] = std::min(x, y);
  };

  std::vector<bool> used(n, false);
  for (const auto& t : m.triangles) {
    for (auto i : t) used[i] = true;
    unite(t[0], t[1]);
    unite(t[1], t[2]);
  }

  // Weld: hash vertices into cells of size `weld` and compare against the 27 neighbours.
  using Cell = std::tuple<long long, long long, long long>;
  std::map<Cell, std::vector<std::size_t>> grid;
  auto cell_of = [&](const Vec3& p) {
    return Cell{static_cast<long long>(std::floor(p.x() / weld)),
                static_cast<long long>(std::floor(p.y() / weld)),
                static_cast<long long>(std::floor(p.z() / weld))};
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) grid[cell_of(m.vertices[i])].push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) continue;
    const auto [cx, cy, cz] = cell_of(m.vertices[i]);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        for (long long dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find(Cell{cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (auto j : it->second) {
            if (j != i && (m.vertices[i] - m.vertices[j]).norm() <= weld) unite(i, j);
          }
        }
      }
    }
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += used[i] && find(i) == i;
  return count;
}

std::vector<ClassScores> classification_metrics(const std::vector<std::uint8_t>& pred,
                                                const std::vector<std::uint8_t>& gt,
                                                std::size_t classes) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("classification_metrics: prediction and ground truth lengths differ");
  }
  std::vector<ClassScores> out(classes);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (pred[i] == gt[i]) {
      if (gt[i] < classes) ++out[gt[i]].tp;
    } else {
      if (pred[i] < classes) ++out[pred[i]].fp;
      if (gt[i] < classes) ++out[gt[i]].fn;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  for (auto& c : out) {
    if (c.tp + c.fp + c.fn == 0) {
      c.absent = true;
      c.precision = c.recall = c.f1 = c.iou = 1.0;
      continue;
    }
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    c.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  }
  return out;
}

ReconReport evaluate_reconstruction(const TriangleMesh& pred, const TriangleMesh& gt,
                                    const ReconOptions& opt) {
  ReconReport r;
  Rng rng(opt.seed);
  const auto p = sample_points(pred, opt.samples, rng).points;
  const auto g = sample_points(gt, opt.samples, rng).points;
  r.accuracy = chamfer_one_sided(p, g);
  r.completeness = chamfer_one_sided(g, p);
  r.hausdorff = hausdorff(p, g);
  r.silhouette = silhouette_error(pred, gt, opt.views, opt.resolution);
  r.components = connected_components(pred);
  return r;
}

}  // namespace plantrec
