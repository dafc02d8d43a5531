#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "plantrec/metrics.hpp"
#include "plantrec/nn_index.hpp"
#include "plantrec/raster.hpp"

using namespace plantrec;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

double brute_nn(const Vec3& q, const std::vector<Vec3>& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : b) best = std::min(best, (q - p).norm());
  return best;
}

double brute_one_sided(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double s = 0.0;
  for (const auto& p : a) s += brute_nn(p, b);
  return s / static_cast<double>(a.size());
}

double brute_hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double h = 0.0;
  for (const auto& p : a) h = std::max(h, brute_nn(p, b));
  for (const auto& p : b) h = std::max(h, brute_nn(p, a));
  return h;
}

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  }
  const std::uint32_t f[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                  {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  for (const auto& t : f) {
    m.triangles.push_back({t[0], t[1], t[2]});
    m.triangle_part.push_back(0);
  }
  m.parts.push_back({OrganClass::Stem, 0});
  return m;
}

}  // namespace

TEST_CASE("chamfer and hausdorff on the hand example") {
  const std::vector<Vec3> a = {Vec3(0, 0, 0)};
  const std::vector<Vec3> b = {Vec3(1, 0, 0), Vec3(3, 0, 0)};
  CHECK(chamfer_one_sided(a, b) == 1.0);
  CHECK(chamfer_one_sided(b, a) == 2.0);
  CHECK(chamfer_bidirectional(a, b) == 3.0);
  CHECK(chamfer_bidirectional(b, a) == 3.0);
  CHECK(hausdorff(a, b) == 3.0);
  CHECK(chamfer_one_sided(a, a) == 0.0);
  CHECK(chamfer_bidirectional(b, b) == 0.0);
  CHECK(hausdorff(b, b) == 0.0);
}

TEST_CASE("distance metrics match brute force") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> size(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_points(size(rng), rng);
    const auto b = random_points(size(rng), rng);
    const double ab = brute_one_sided(a, b);
    const double ba = brute_one_sided(b, a);
    CHECK(std::abs(chamfer_one_sided(a, b) - ab) <= 1e-12);
    CHECK(std::abs(chamfer_bidirectional(a, b) - (ab + ba)) <= 1e-12);
    const double h = hausdorff(a, b);
    CHECK(std::abs(h - brute_hausdorff(a, b)) <= 1e-12);
    CHECK(h >= ab);
    CHECK(h >= ba);
  }
}

TEST_CASE("permuted copies are at distance zero") {
  std::mt19937_64 rng(3);
  auto a = random_points(300, rng);
  auto b = a;
  std::shuffle(b.begin(), b.end(), rng);
  CHECK(chamfer_bidirectional(a, b) == 0.0);
  CHECK(hausdorff(a, b) == 0.0);
  b[7] += Vec3(0, 0, 1e-3);
  CHECK(chamfer_bidirectional(a, b) > 0.0);
}

TEST_CASE("kd-tree equals brute force") {
  std::mt19937_64 rng(8);
  const auto pts = random_points(1000, rng);
  const NnIndex index(pts);
  const auto queries = random_points(1000, rng);
  for (const auto& q : queries) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if ((pts[i] - q).squaredNorm() < (pts[best] - q).squaredNorm()) best = i;
    }
    const auto nn = index.nearest(q);
    CHECK(nn.index == best);
    CHECK(nn.distance == (pts[best] - q).norm());

    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - q).norm(), i);
    std::sort(all.begin(), all.end());
    const auto k = index.knn(q, 10);
    REQUIRE(k.size() == 10);
    for (std::size_t j = 0; j < 10; ++j) CHECK(k[j].distance == all[j].first);
  }
}

TEST_CASE("classification metrics") {
  const std::vector<std::uint8_t> gt = {0, 0, 1, 1};
  const std::vector<std::uint8_t> pred = {0, 1, 1, 1};
  const auto s = classification_metrics(pred, gt, 4);
  CHECK(s[1].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s[1].recall == 1.0);
  CHECK(s[1].f1 == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(s[1].iou == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s[2].absent);
  CHECK(s[2].iou == 1.0);

  const auto same = classification_metrics(gt, gt, 4);
  CHECK(same[0].precision == 1.0);
  CHECK(same[1].iou == 1.0);
  CHECK(same[1].f1 == 1.0);

  const auto ghost = classification_metrics({2, 2}, {0, 0}, 4);
  CHECK(ghost[2].precision == 0.0);
  CHECK_FALSE(ghost[2].absent);
}

TEST_CASE("classification metrics match a confusion-table oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(0, 3);
  std::uniform_int_distribution<std::size_t> len(1, 50);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(rng);
    std::vector<std::uint8_t> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<std::uint8_t>(cls(rng));
      g[i] = static_cast<std::uint8_t>(cls(rng));
    }
    const auto s = classification_metrics(p, g, 4);
    for (std::uint8_t c = 0; c < 4; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == c && g[i] == c;
        fp += p[i] == c && g[i] != c;
        fn += p[i] != c && g[i] == c;
      }
      if (tp + fp + fn == 0) {
        CHECK(s[c].absent);
        continue;
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      CHECK(std::abs(s[c].precision - prec) <= 1e-12);
      CHECK(std::abs(s[c].recall - rec) <= 1e-12);
      CHECK(std::abs(s[c].f1 - f1) <= 1e-12);
      CHECK(std::abs(s[c].iou - tp / (tp + fp + fn)) <= 1e-12);
      CHECK(s[c].iou <= s[c].f1 + 1e-15);
    }
  }
}

TEST_CASE("connected components") {
  const TriangleMesh a = box(Vec3(0, 0, 0), Vec3(1, 1, 1));
  CHECK(connected_components(a) == 1);
  TriangleMesh two = a;
  two.append(box(Vec3(3, 0, 0), Vec3(4, 1, 1)));
  CHECK(connected_components(two) == 2);
  TriangleMesh touching = a;
  touching.append(box(Vec3(1, 0, 0), Vec3(2, 1, 1)));
  CHECK(connected_components(touching) == 1);
}

TEST_CASE("silhouette error") {
  const TriangleMesh a = box(Vec3(0, 0, 0), Vec3(1, 1, 1));
  CHECK(silhouette_error(a, a, 50, 128) == 0.0);

  const std::vector<Vec3> axes = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  const TriangleMesh empty;
  double coverage = 0.0;
  {
    const Vec3 c(0.5, 0.5, 0.5);
    const double r = 1.02 * std::sqrt(0.75);
    for (const auto& d : axes) coverage += rasterize(a, {d, c, r, 256}).coverage();
    coverage /= 3.0;
  }
  CHECK(silhouette_error(a, empty, axes, 256) == doctest::Approx(coverage).epsilon(1e-12));

  // Unit cubes half a width apart: the symmetric difference is a unit area in
  // the two views across the offset and empty along it.
  const TriangleMesh b = box(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1));
  const double r = 1.02 * std::sqrt(0.75 * 0.75 + 0.5);
  const double expected = 2.0 * (1.0 / (4.0 * r * r)) / 3.0;
  const double e = silhouette_error(a, b, axes, 1024);
  CHECK(e == doctest::Approx(expected).epsilon(0.01));
  CHECK(silhouette_error(b, a, axes, 1024) == e);
}

TEST_CASE("fibonacci directions are unit and distinct") {
  const auto d = fibonacci_directions(400);
  REQUIRE(d.size() == 400);
  for (const auto& v : d) CHECK(std::abs(v.norm() - 1.0) < 1e-12);
  CHECK((d[0] - d[1]).norm() > 1e-3);
}
