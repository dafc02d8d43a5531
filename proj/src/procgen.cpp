#include "plantrec/procgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace plantrec {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double deg(double d) { return d * kPi / 180.0; }

constexpr int kMaxMainStems = 6;
constexpr std::size_t kMaxCatalogNodes = 14;

}  // namespace

std::size_t Topology::node_count() const {
  std::size_t n = 2 + static_cast<std::size_t>(main_stems);
  for (const auto& b : branches) n += static_cast<std::size_t>(b.length);
  return n;
}

const std::vector<Topology>& topology_catalog() {
  static const std::vector<Topology> catalog = [] {
    std::vector<Topology> all;
    for (int m = 1; m <= kMaxMainStems; ++m) {
      all.push_back({m, {}});
      for (int p1 = 0; p1 + 1 < m; ++p1) {
        for (int l1 = 1; l1 <= 3; ++l1) {
          all.push_back({m, {{p1, l1}}});
          for (int p2 = p1 + 1; p2 + 1 < m; ++p2) {
            for (int l2 = 1; l2 <= 3; ++l2) all.push_back({m, {{p1, l1}, {p2, l2}}});
          }
        }
      }
    }
    std::erase_if(all, [](const Topology& t) { return t.node_count() > kMaxCatalogNodes; });
    std::sort(all.begin(), all.end());
    // Fisher-Yates with an explicit index draw so the order is library independent.
    Rng rng(0x43686e6f706f6469ull);
    for (std::size_t i = all.size() - 1; i > 0; --i) {
      std::swap(all[i], all[rng() % (i + 1)]);
    }
    return all;
  }();
  return catalog;
}

const Topology& topology_for(std::uint64_t structure_seed) {
  const auto& c = topology_catalog();
  return c[structure_seed % c.size()];
}

double growth_factor(double age_days, double emergence_day) {
  return 0.2 + 0.8 / (1.0 + std::exp(-(age_days - emergence_day - 1.5) / 1.2));
}

namespace {

class Draw {
public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double operator()(double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  }

private:
  Rng rng_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct LBuilder {
  LString l;
  void module(ModuleKind k, std::initializer_list<double> params) {
    OrganModule m{k, {}};
    for (double p : params) m.params.push_back(quantize(p));
    l.items.emplace_back(std::move(m));
  }
  void open() { l.items.emplace_back(OpenBracket{}); }
  void close() { l.items.emplace_back(CloseBracket{}); }
};

}  // namespace

LString grow(const GrowthConfig& cfg) {
  const Topology& topo = topology_for(cfg.structure_seed);
  Draw structure(mix_seed(cfg.structure_seed, 0x5157));
  const double size_scale = structure(0.85, 1.15);
  const double leaf_scale = structure(0.85, 1.15);
  const double tempo = structure(0.85, 1.1);  // days between successive units

  // Plant-level traits; organs follow them through growth and position trends
  // with a small individual jitter.
  Draw u(mix_seed(cfg.structure_seed, cfg.param_seed + 1));
  const double age = std::clamp(cfg.age_days, kMinAgeDays, kMaxAgeDays);
  const double root_d = u(1.8e-3, 2.4e-3) * size_scale;
  const double root_len = u(10e-3, 16e-3) * size_scale;
  const double root_phyllo = u(0.0, 360.0);
  const double cot_angle = u(55.0, 75.0);
  const double cot_len = u(9e-3, 13e-3);
  const double cot_elast = u(0.1, 0.4);
  const double internode = u(5e-3, 11e-3) * size_scale;
  const double grow_angle = u(3.0, 12.0);
  const double divergence = u(132.0, 143.0);
  const double petiole_base = u(0.45, 0.6);
  const double petiole_taper = u(0.55, 0.75);
  const double petiole_angle = u(35.0, 60.0);
  const double petiole_len = u(10e-3, 22e-3) * leaf_scale;
  const double petiole_elast = u(0.1, 0.5);
  const double leaf_curv = u(0.1, 0.5);
  const double leaf_len = u(14e-3, 32e-3) * leaf_scale;
  const double leaf_aspect = u(0.65, 0.9);
  const double branch_angle = u(30.0, 55.0);
  const double branch_elast = u(0.1, 0.4);
  const double branch_ratio = u(0.55, 0.8);
  auto rel = [&](double v) { return v * u(0.98, 1.02); };
  auto off = [&](double v, double spread) { return v + u(-spread, spread); };
  auto thickness = [](double g) { return 0.6 + 0.4 * g; };

  LBuilder b;
  const double g_root = growth_factor(age, 3.0);
  b.module(ModuleKind::Stem, {root_d * thickness(g_root), root_len * g_root, kRootGrowingAngle, root_phyllo});
  const double g_cot = growth_factor(age, 1.0);
  b.module(ModuleKind::Cotyledon, {cot_angle, cot_len * g_cot, cot_elast});
  b.module(ModuleKind::Cotyledon, {cot_angle, cot_len * g_cot, cot_elast});

  // One stem-petiole-leaf unit; returns the (unrounded) stem diameter.
  auto unit = [&](double emergence, double diameter_plateau, double organ_scale, int rank) {
    const double g = growth_factor(age, emergence);
    const double d = diameter_plateau * thickness(g);
    b.module(ModuleKind::Stem, {d, rel(internode * organ_scale * g), off(grow_angle + 0.5 * rank, 0.3),
                                off(divergence, 0.3)});
    const double d0 = d * petiole_base;
    b.module(ModuleKind::Petiole, {d0, d0 * petiole_taper, off(petiole_angle + 1.5 * rank, 0.5),
                                   rel(petiole_len * organ_scale * g), off(petiole_elast, 0.01)});
    const double len = rel(leaf_len * organ_scale * g);
    b.module(ModuleKind::Leaf, {off(leaf_curv, 0.01), len, len * off(leaf_aspect, 0.005)});
    return d;
  };

  for (int i = 0; i < topo.main_stems; ++i) {
    const double emergence = 8.0 + tempo * i;
    const double d = unit(emergence, root_d * (0.85 - 0.06 * i), 1.0, i);
    for (const auto& br : topo.branches) {
      if (br.at != i) continue;
      b.open();
      b.module(ModuleKind::Branch, {off(branch_angle, 0.5), off(branch_elast, 0.01)});
      const double branch_d = d * branch_ratio;
      for (int k = 0; k < br.length; ++k) {
        const double e = emergence + 1.5 + tempo * k;
        // Thickness is scaled relative to the bearing stem so the branch stays thinner.
        unit(e, branch_d * std::pow(0.9, k) / thickness(growth_factor(age, emergence)), 0.8, k);
      }
      b.close();
    }
  }
  return std::move(b.l);
}

// ---------------------------------------------------------------------------
// Turtle interpretation

namespace {

Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c);
}

struct Frame {
  Vec3 h = Vec3::UnitZ();  // heading
  Vec3 l = Vec3::UnitX();  // left
  Vec3 u = Vec3::UnitY();  // up, h x l

  void roll(double a) {
    l = rotate(l, h, a);
    u = rotate(u, h, a);
  }
  void pitch(double a) {
    h = rotate(h, l, a);
    u = rotate(u, l, a);
  }
  // Rotates the heading toward `l`.
  void turn(double a) {
    h = rotate(h, u, a);
    l = rotate(l, u, a);
  }
  void rotate_all(const Vec3& axis, double a) {
    h = rotate(h, axis, a);
    l = rotate(l, axis, a);
    u = rotate(u, axis, a);
  }
  // Bends the heading toward -Z by at most `a`.
  void droop(double a) {
    const Vec3 down = -Vec3::UnitZ();
    const Vec3 axis = h.cross(down);
    const double n = axis.norm();
    if (n < 1e-12) return;
    const double to_down = std::atan2(n, h.dot(down));
    rotate_all(axis / n, std::min(a, to_down));
  }
};

constexpr int kTubeSides = 10;
constexpr int kPetioleSegments = 8;
constexpr int kBladeRows = 13;
constexpr int kBladeCols = 9;

Part make_tube(const std::vector<Vec3>& centers, const std::vector<double>& radii,
               const Vec3& normal0) {
  Part p;
  p.tube = true;
  p.rows = static_cast<int>(centers.size());
  p.cols = kTubeSides;
  p.axis = centers;
  p.cap_start = centers.front();
  p.cap_end = centers.back();
  const std::size_t n = centers.size();
  Vec3 normal = normal0;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 t;
    if (i == 0) {
      t = centers[1] - centers[0];
    } else if (i + 1 == n) {
      t = centers[i] - centers[i - 1];
    } else {
      t = (centers[i] - centers[i - 1]).normalized() + (centers[i + 1] - centers[i]).normalized();
    }
    t.normalize();
    normal = (normal - normal.dot(t) * t).normalized();
    const Vec3 binormal = t.cross(normal);
    for (int j = 0; j < kTubeSides; ++j) {
      const double th = 2.0 * kPi * j / kTubeSides;
      p.grid.push_back(centers[i] + radii[i] * (std::cos(th) * normal + std::sin(th) * binormal));
    }
  }
  return p;
}

template <typename Outline>
Part make_blade(const Vec3& base, const Vec3& heading, const Vec3& fallback_side, double length,
                double width, double curvature, int rows, int cols, Outline outline) {
  Vec3 side = heading.cross(Vec3::UnitZ());
  if (side.norm() < 1e-6) side = fallback_side - fallback_side.dot(heading) * heading;
  side.normalize();
  const Vec3 normal = side.cross(heading);
  const double bend = curvature * kPi / 2.0;
  auto nerve = [&](double u) {
    const double s = u * length;
    if (bend < 1e-9) return Vec3(base + s * heading);
    const double r = length / bend;
    return Vec3(base + r * std::sin(s / r) * heading - r * (1.0 - std::cos(s / r)) * normal);
  };
  Part p;
  p.rows = rows;
  p.cols = cols;
  for (int i = 0; i < rows; ++i) {
    const double u = static_cast<double>(i) / (rows - 1);
    const Vec3 c = nerve(u);
    p.axis.push_back(c);
    const double half = 0.5 * width * outline(u);
    for (int j = 0; j < cols; ++j) {
      const double v = -1.0 + 2.0 * j / (cols - 1);
      // The base row collapses exactly onto the attachment point.
      p.grid.push_back(i == 0 ? base : Vec3(c + v * half * side));
    }
  }
  return p;
}

double leaf_outline(double u) { return 27.0 / 4.0 * u * (1.0 - u) * (1.0 - u); }
double cotyledon_outline(double u) { return std::sin(kPi * u); }

constexpr double kCotyledonWidthRatio = 0.4;

std::vector<Vec3> resample_polyline(const std::vector<Vec3>& pts, double step) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) total += (pts[i] - pts[i - 1]).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(total / step - 1e-9)));
  std::vector<Vec3> out;
  std::size_t seg = 1;
  double seg_start = 0.0;
  for (int k = 1; k <= n; ++k) {
    if (k == n) {
      out.push_back(pts.back());
      break;
    }
    const double s = total * k / n;
    while (seg + 1 < pts.size() && seg_start + (pts[seg] - pts[seg - 1]).norm() < s) {
      seg_start += (pts[seg] - pts[seg - 1]).norm();
      ++seg;
    }
    const double len = (pts[seg] - pts[seg - 1]).norm();
    const double t = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
    out.push_back(pts[seg - 1] + t * (pts[seg] - pts[seg - 1]));
  }
  return out;
}

struct TurtleState {
  Vec3 pos = Vec3::Zero();
  Frame frame;
  std::uint32_t skel_vertex = 0;
  int cotyledons_seen = 0;
  bool has_petiole = false;
  Vec3 petiole_tip = Vec3::Zero();
  Vec3 petiole_dir = Vec3::UnitZ();
  Vec3 petiole_side = Vec3::UnitX();
};

void require_positive(double v, const char* what, std::size_t item) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw GeometryError(std::string(what) + " must be positive (item " + std::to_string(item) +
                        ")");
  }
}

}  // namespace

Interpretation interpret_full(const LString& l, double skeleton_step) {
  Interpretation out;
  out.skeleton.vertices.push_back(Vec3::Zero());
  std::vector<TurtleState> stack;
  TurtleState st;
  std::uint16_t next_instance = 0;

  auto add_skeleton_polyline = [&](const std::vector<Vec3>& pts, std::uint32_t start) {
    std::uint32_t prev = start;
    for (const auto& q : resample_polyline(pts, skeleton_step)) {
      out.skeleton.vertices.push_back(q);
      const auto cur = static_cast<std::uint32_t>(out.skeleton.vertices.size() - 1);
      out.skeleton.edges.push_back({prev, cur});
      prev = cur;
    }
    return prev;
  };
  auto emit = [&](Part p, OrganClass organ, std::size_t item) {
    p.organ = organ;
    p.instance = next_instance++;
    p.item = item;
    out.geometry.parts.push_back(std::move(p));
  };

  for (std::size_t item = 0; item < l.items.size(); ++item) {
    const auto& it = l.items[item];
    if (std::holds_alternative<OpenBracket>(it)) {
      stack.push_back(st);
      continue;
    }
    if (std::holds_alternative<CloseBracket>(it)) {
      if (stack.empty()) throw GeometryError("unbalanced bracket during interpretation");
      st = stack.back();
      stack.pop_back();
      continue;
    }
    const auto& m = std::get<OrganModule>(it);
    const auto& p = m.params;
    switch (m.kind) {
      case ModuleKind::Stem: {
        require_positive(p[stem_p::diameter], "stem diameter", item);
        require_positive(p[stem_p::length], "stem length", item);
        st.frame.roll(deg(p[stem_p::phyllotaxis]));
        st.frame.pitch(deg(p[stem_p::growing_angle]));
        const Vec3 end = st.pos + p[stem_p::length] * st.frame.h;
        const double r = 0.5 * p[stem_p::diameter];
        emit(make_tube({st.pos, end}, {r, r}, st.frame.l), OrganClass::Stem, item);
        st.skel_vertex = add_skeleton_polyline({st.pos, end}, st.skel_vertex);
        st.pos = end;
        st.cotyledons_seen = 0;
        st.has_petiole = false;
        break;
      }
      case ModuleKind::Petiole: {
        require_positive(p[petiole_p::start_diameter], "petiole start diameter", item);
        require_positive(p[petiole_p::end_diameter], "petiole end diameter", item);
        require_positive(p[petiole_p::length], "petiole length", item);
        Frame f = st.frame;
        f.turn(deg(p[petiole_p::angle]));
        Vec3 dir = f.h;
        std::vector<Vec3> centers{st.pos};
        std::vector<double> radii{0.5 * p[petiole_p::start_diameter]};
        const double seg = p[petiole_p::length] / kPetioleSegments;
        const double bend = p[petiole_p::elasticity] * (kPi / 3.0) / kPetioleSegments;
        Vec3 last_dir = dir;
        for (int k = 1; k <= kPetioleSegments; ++k) {
          centers.push_back(centers.back() + seg * dir);
          const double t = static_cast<double>(k) / kPetioleSegments;
          radii.push_back(0.5 * ((1.0 - t) * p[petiole_p::start_diameter] +
                                 t * p[petiole_p::end_diameter]));
          last_dir = dir;
          Frame df{dir, f.l, f.u};
          df.droop(bend);
          dir = df.h;
        }
        emit(make_tube(centers, radii, f.u), OrganClass::Petiole, item);
        add_skeleton_polyline(centers, st.skel_vertex);
        st.has_petiole = true;
        st.petiole_tip = centers.back();
        st.petiole_dir = last_dir;
        st.petiole_side = f.l;
        break;
      }
      case ModuleKind::Leaf: {
        require_positive(p[leaf_p::length], "leaf length", item);
        require_positive(p[leaf_p::width], "leaf width", item);
        const Vec3 base = st.has_petiole ? st.petiole_tip : st.pos;
        const Vec3 heading = st.has_petiole ? st.petiole_dir : st.frame.h;
        const Vec3 side = st.has_petiole ? st.petiole_side : st.frame.l;
        emit(make_blade(base, heading, side, p[leaf_p::length], p[leaf_p::width],
                        p[leaf_p::curvature], kBladeRows, kBladeCols, leaf_outline),
             OrganClass::Leaf, item);
        break;
      }
      case ModuleKind::Cotyledon: {
        require_positive(p[cotyledon_p::length], "cotyledon length", item);
        Frame f = st.frame;
        f.roll(kPi * (st.cotyledons_seen % 2));
        f.turn(deg(p[cotyledon_p::angle]));
        const double len = p[cotyledon_p::length];
        emit(make_blade(st.pos, f.h, f.l, len, kCotyledonWidthRatio * len,
                        p[cotyledon_p::curvature], 9, 7, cotyledon_outline),
             OrganClass::Cotyledons, item);
        ++st.cotyledons_seen;
        break;
      }
      case ModuleKind::Branch: {
        st.frame.turn(deg(p[branch_p::angle]));
        st.frame.droop(p[branch_p::elasticity] * kPi / 9.0);
        st.has_petiole = false;
        break;
      }
    }
  }
  return out;
}

PlantGeometry interpret(const LString& l) { return interpret_full(l).geometry; }

Skeleton skeleton_of(const LString& l, double step) { return interpret_full(l, step).skeleton; }

PointCloud sample_points(const TriangleMesh& m, std::size_t total, Rng& rng) {
  if (total == 0) throw std::invalid_argument("sample_points: total must be >= 1");
  std::vector<double> cdf;
  cdf.reserve(m.triangles.size());
  double acc = 0.0;
  for (const auto& t : m.triangles) {
    acc += triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
    cdf.push_back(acc);
  }
  if (!(acc > 0.0)) throw GeometryError("cannot sample points from zero-area geometry");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud out;
  out.points.reserve(total);
  out.labels.reserve(total);
  out.instances.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double x = unit(rng) * acc;
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
    idx = std::min(idx, cdf.size() - 1);
    // skip zero-area triangles that upper_bound can land on at the boundary
    while (idx > 0 && cdf[idx] == cdf[idx - 1]) --idx;
    const auto& t = m.triangles[idx];
    const double s = std::sqrt(unit(rng));
    const double r = unit(rng);
    const Vec3 p = (1.0 - s) * m.vertices[t[0]] + s * (1.0 - r) * m.vertices[t[1]] +
                   s * r * m.vertices[t[2]];
    const PartLabel& lab = m.parts[m.triangle_part[idx]];
    out.points.push_back(p);
    out.labels.push_back(static_cast<std::uint8_t>(lab.organ));
    out.instances.push_back(lab.instance);
  }
  return out;
}

PointCloud sample_points(const PlantGeometry& g, std::size_t total, Rng& rng) {
  return sample_points(to_mesh(g), total, rng);
}

PointCloud add_noise(const PointCloud& p, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
  PointCloud out = p;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& q : out.points) {
    q.x() += n(rng);
    q.y() += n(rng);
    q.z() += n(rng);
  }
  return out;
}

double plant_height(const PlantGeometry& g) {
  Bounds b;
  for (const auto& p : g.parts) {
    for (const auto& v : p.grid) b.extend(v);
  }
  return b.valid() ? b.max.z() - b.min.z() : 0.0;
}

Camera default_depth_camera(const PlantGeometry& g, double azimuth_deg, int resolution) {
  Bounds b;
  for (const auto& p : g.parts) {
    for (const auto& v : p.grid) b.extend(v);
  }
  if (!b.valid()) throw GeometryError("cannot place a camera around empty geometry");
  const double height = std::max(b.max.z() - b.min.z(), 1e-6);
  const double radius = std::max(0.5 * (b.max - b.min).norm(), 1e-6);
  const double dist = std::max(2.0 * height, 1.5 * radius);
  const double el = deg(45.0);
  const double az = deg(azimuth_deg);
  Camera cam;
  cam.target = b.center();
  cam.eye = cam.target + dist * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                     std::sin(el));
  cam.up = Vec3::UnitZ();
  cam.fov_y_deg = 2.0 * std::asin(std::min(0.99, radius / dist)) * 180.0 / kPi * 1.05;
  cam.width = cam.height = resolution;
  return cam;
}

}  // namespace plantrec
