#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "plantrec/dataset.hpp"
#include "plantrec/io.hpp"
#include "plantrec/procgen.hpp"

using namespace plantrec;

namespace {

Part sheet(const Vec3& origin, const Vec3& du, const Vec3& dv, OrganClass organ, std::uint16_t instance) {
  Part p;
  p.organ = organ;
  p.instance = instance;
  p.rows = 2;
  p.cols = 2;
  p.grid = {origin, origin + dv, origin + du, origin + du + dv};
  p.axis = {origin, origin + du};
  return p;
}

double nearest_triangle(const Vec3& q, const TriangleMesh& m) {
  double best = 1e300;
  for (const auto& t : m.triangles) {
    best = std::min(best, point_triangle_distance(q, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]));
  }
  return best;
}

double azimuth(const Vec3& v) { return std::atan2(v.y(), v.x()) * 180.0 / std::numbers::pi; }

const char* kVertical =
    "S(0.002,0.01,0,0)C(45,0.008,0.3)C(45,0.008,0.3)"
    "S(0.0015,0.005,0,137.5)P(0.001,0.0005,50,0.012,0.3)L(0.2,0.013,0.01)"
    "S(0.0015,0.005,0,137.5)P(0.001,0.0005,50,0.012,0.3)L(0.2,0.013,0.01)";

}  // namespace

TEST_CASE("structure seeds and parameter seeds") {
  std::set<std::string> shapes;
  for (std::uint64_t s = 0; s < 33; ++s) {
    shapes.insert(topology_signature(to_binary_tree(grow({s, 15.0, 1}))));
  }
  CHECK(shapes.size() == 33);

  const std::string shape = topology_signature(to_binary_tree(grow({5, 15.0, 0})));
  std::set<std::string> texts;
  for (std::uint64_t p = 0; p < 100; ++p) {
    const LString l = grow({5, 15.0, p});
    CHECK(topology_signature(to_binary_tree(l)) == shape);
    texts.insert(serialize(l));
  }
  CHECK(texts.size() == 100);
}

TEST_CASE("lengths do not shrink with age") {
  for (std::uint64_t s = 0; s < 33; s += 4) {
    const AxialBinaryTree young = to_binary_tree(grow({s, 12.0, 77}));
    const AxialBinaryTree old = to_binary_tree(grow({s, 19.0, 77}));
    REQUIRE(same_topology(young, old));
    for (std::size_t i = 0; i < young.size(); ++i) {
      const auto& a = young[i].params;
      const auto& b = old[i].params;
      switch (young[i].kind) {
        case NodeKind::Root:
          CHECK(b[1] >= a[1]);
          break;
        case NodeKind::Cotyledons:
          CHECK(b[1] >= a[1]);
          break;
        case NodeKind::Stem:
        case NodeKind::Branch: {
          const std::size_t o = stem_offset(young[i].kind);
          for (std::size_t k : {o + 1, o + 4 + 3, o + 9 + 1, o + 9 + 2}) CHECK(b[k] >= a[k]);
          break;
        }
      }
    }
  }
}

TEST_CASE("turtle basics") {
  const PlantGeometry g = interpret(parse_lstring("S(0.002,0.01,0,0)C(45,0.008,0.3)C(45,0.008,0.3)"));
  const Part& root = g.parts.at(0);
  CHECK(root.organ == OrganClass::Stem);
  REQUIRE(root.axis.size() >= 2);
  const Vec3 span = root.axis.back() - root.axis.front();
  CHECK(span.norm() == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(span.normalized().z() == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& v : root.grid) {
    const double r = Vec3(v.x(), v.y(), 0.0).norm();
    CHECK(r == doctest::Approx(0.001).epsilon(1e-9));
  }

  const Skeleton sk = skeleton_of(parse_lstring("S(0.002,0.01,0,0)C(45,0.008,0.3)C(45,0.008,0.3)"));
  REQUIRE(sk.vertices.size() >= 2);
  CHECK((sk.vertices.back() - sk.vertices.front()).norm() == doctest::Approx(0.01).epsilon(1e-9));
  for (const auto& v : sk.vertices) CHECK(std::abs(v.x()) + std::abs(v.y()) < 1e-12);
}

TEST_CASE("phyllotaxis rotates successive petioles") {
  const LString l = parse_lstring(kVertical);
  const PlantGeometry g = interpret(l);
  std::vector<double> az;
  for (const auto& p : g.parts) {
    if (p.organ == OrganClass::Petiole) az.push_back(azimuth(p.axis[1] - p.axis[0]));
  }
  REQUIRE(az.size() == 2);
  const double d = std::fmod(az[1] - az[0] + 720.0, 360.0);
  CHECK(d == doctest::Approx(137.5).epsilon(1e-9));

  std::size_t modules = 0, branches = 0;
  const LString big = grow({17, 19.0, 3});
  for (const auto& it : big.items) {
    if (const auto* m = std::get_if<OrganModule>(&it)) {
      ++modules;
      branches += m->kind == ModuleKind::Branch;
    }
  }
  CHECK(interpret(big).parts.size() == modules - branches);
}

TEST_CASE("skeleton") {
  const LString l = grow({9, 17.0, 4});
  const Interpretation full = interpret_full(l);
  for (const auto& v : full.skeleton.vertices) {
    bool on_axis = false;
    for (const auto& p : full.geometry.parts) {
      if (p.organ != OrganClass::Stem && p.organ != OrganClass::Petiole) continue;
      for (std::size_t i = 0; i + 1 < p.axis.size() && !on_axis; ++i) {
        on_axis = point_segment_distance(v, p.axis[i], p.axis[i + 1]) < 1e-9;
      }
    }
    CHECK(on_axis);
  }
  const Skeleton s1 = skeleton_of(parse_lstring("S(0.002,0.01,0,0)C(45,0.008,0.3)C(45,0.008,0.3)"), 0.001);
  const Skeleton s2 = skeleton_of(parse_lstring("S(0.002,0.02,0,0)C(45,0.008,0.3)C(45,0.008,0.3)"), 0.001);
  CHECK(static_cast<double>(s2.vertices.size() - 1) == doctest::Approx(2.0 * (s1.vertices.size() - 1)));
}

TEST_CASE("surface sampling") {
  PlantGeometry g;
  g.parts.push_back(sheet(Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 1, 0), OrganClass::Leaf, 0));
  g.parts.push_back(sheet(Vec3(0, 0, 2), Vec3(1, 0, 0), Vec3(0, 1, 0), OrganClass::Stem, 0));
  Rng rng(5);
  const PointCloud p = sample_points(g, 4000, rng);
  REQUIRE(p.size() == 4000);
  REQUIRE(p.labeled());
  std::size_t leaf = 0;
  for (auto c : p.labels) leaf += c == static_cast<std::uint8_t>(OrganClass::Leaf);
  const double sigma = std::sqrt(4000.0 * 0.75 * 0.25);
  CHECK(std::abs(static_cast<double>(leaf) - 3000.0) < 3.0 * sigma);

  Rng again(5);
  const PointCloud q = sample_points(g, 4000, again);
  CHECK(q.points == p.points);

  const LString l = grow({3, 16.0, 9});
  const PlantGeometry pg = interpret(l);
  const TriangleMesh mesh = to_mesh(pg);
  Rng r2(1);
  const PointCloud c = sample_points(pg, 200, r2);
  for (const auto& v : c.points) CHECK(nearest_triangle(v, mesh) < 1e-9);
}

TEST_CASE("gaussian noise") {
  PointCloud p;
  p.points.assign(100000, Vec3(0.1, 0.2, 0.3));
  p.labels.assign(p.points.size(), 2);
  Rng rng(1);
  CHECK(add_noise(p, 0.0, rng).points == p.points);
  const PointCloud n = add_noise(p, 0.001, rng);
  CHECK(n.labels == p.labels);
  for (int axis = 0; axis < 3; ++axis) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double d = n.points[i][axis] - p.points[i][axis];
      s += d;
      s2 += d * d;
    }
    const double mean = s / n.size();
    const double sd = std::sqrt(s2 / n.size() - mean * mean);
    CHECK(sd == doctest::Approx(0.001).epsilon(0.05));
  }
}

TEST_CASE("depth views") {
  PlantGeometry g;
  g.parts.push_back(sheet(Vec3(-1, 0, -1), Vec3(2, 0, 0), Vec3(0, 0, 2), OrganClass::Leaf, 0));
  g.parts.push_back(sheet(Vec3(-0.2, 1, -0.2), Vec3(0.4, 0, 0), Vec3(0, 0, 0.4), OrganClass::Stem, 0));
  Camera cam;
  cam.eye = Vec3(0, -5, 0);
  cam.target = Vec3::Zero();
  cam.fov_y_deg = 20.0;
  cam.width = cam.height = 64;
  const PointCloud front = render_depth_view(g, cam);
  CHECK(front.size() > 0);
  for (auto c : front.labels) CHECK(c == static_cast<std::uint8_t>(OrganClass::Leaf));

  cam.eye = Vec3(0, 5, 0);
  const PointCloud back = render_depth_view(g, cam);
  std::size_t stem = 0;
  for (auto c : back.labels) stem += c == static_cast<std::uint8_t>(OrganClass::Stem);
  CHECK(stem > 0);

  const LString l = grow({11, 18.0, 2});
  const PlantGeometry pg = interpret(l);
  const TriangleMesh mesh = to_mesh(pg);
  const PointCloud v0 = render_depth_view(pg, default_depth_camera(pg, 0.0, 96));
  const PointCloud v1 = render_depth_view(pg, default_depth_camera(pg, 180.0, 96));
  REQUIRE(v0.size() > 0);
  for (std::size_t i = 0; i < v0.size(); i += 7) CHECK(nearest_triangle(v0.points[i], mesh) < 1e-9);

  // Union coverage: parts seen by either camera include those seen by one.
  std::set<std::pair<int, int>> seen0, both;
  for (std::size_t i = 0; i < v0.size(); ++i) seen0.insert({v0.labels[i], v0.instances[i]});
  both = seen0;
  for (std::size_t i = 0; i < v1.size(); ++i) both.insert({v1.labels[i], v1.instances[i]});
  CHECK(both.size() >= seen0.size());
}

TEST_CASE("dataset layout") {
  const DatasetConfig def;
  CHECK(def.structures * def.per_structure == 3300);
  std::size_t tr = 0, va = 0, te = 0;
  split_counts(100, tr, va, te);
  CHECK(tr == 80);
  CHECK(va == 10);
  CHECK(te == 10);
  split_counts(40, tr, va, te);
  CHECK(tr + va + te == 40);
  CHECK(tr == 32);

  const auto base = std::filesystem::temp_directory_path() / "plantrec_test_dataset";
  std::filesystem::remove_all(base);
  DatasetConfig cfg;
  cfg.structures = 2;
  cfg.per_structure = 3;
  cfg.points = 256;
  cfg.seed = 4;
  cfg.threads = 2;
  const Dataset a = build_dataset(cfg, base / "a");
  cfg.threads = 1;
  const Dataset b = build_dataset(cfg, base / "b");
  CHECK(a.records.size() == 6);
  CHECK(read_text(base / "a" / "manifest.json") == read_text(base / "b" / "manifest.json"));
  const Dataset loaded = load_dataset(base / "a");
  REQUIRE(loaded.records.size() == 6);
  const RecordInfo& r = loaded.records[4];
  CHECK(loaded.lstring(r) == generate_record(cfg, 4).lstring);
  CHECK(loaded.cloud(r, CloudVariant::Clean).points == generate_record(cfg, 4).clean.points);
  std::filesystem::remove_all(base);
}
