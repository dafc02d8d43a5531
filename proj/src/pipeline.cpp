#include "plantrec/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "plantrec/checkpoint.hpp"
#include "plantrec/nn_index.hpp"
#include "plantrec/procgen.hpp"

namespace plantrec {

void check_compatible(const PcEncoder& e, const RvnnModel& m) {
  if (e.rvnn_hash != checkpoint_hash(rvnn_tensors(m))) {
    throw CompatibilityError("point encoder was trained against a different auto-encoder checkpoint");
  }
  if (e.config.latent != m.config.latent) {
    throw CompatibilityError("point encoder latent size does not match the auto-encoder");
  }
}

InferResult infer(const PointCloud& p, const PcEncoder& e, const RvnnModel& m) {
  check_compatible(e, m);
  DecodeResult d = decode_tree(m, encode_cloud(e, p));
  for (auto& n : d.tree.nodes) {
    for (double& v : n.params) v = quantize(v);
  }
  InferResult r;
  r.lstring = from_binary_tree(d.tree);
  r.tree = std::move(d.tree);
  r.repairs = std::move(d.repairs);
  return r;
}

TriangleMesh reconstruct(const LString& l) { return to_mesh(interpret(l)); }

Skeleton extract_skeleton(const LString& l) { return skeleton_of(l); }

// ---------------------------------------------------------------------------
// Refinement

namespace {

constexpr double kInvPhi = 0.6180339887498949;
constexpr double kMinLength = 1e-5;

struct FreeParam {
  std::size_t item;
  std::size_t param;
  double min_half_width;
  double lower;
  std::size_t scope_end = std::numeric_limits<std::size_t>::max();  ///< parts from later items are ignored
};

OrganModule& module_at(LString& l, std::size_t item) { return std::get<OrganModule>(l.items[item]); }

std::vector<Vec3> part_samples(const Part& part, const std::vector<std::array<double, 2>>& st) {
  std::vector<Vec3> out;
  out.reserve(st.size());
  for (const auto& [s, t] : st) out.push_back(part.surface_point(s, t));
  return out;
}

double nn_sum(const std::vector<Vec3>& pts, const NnIndex& index) {
  double s = 0.0;
  for (const auto& q : pts) s += index.nearest(q).distance;
  return s;
}

bool stage1_part(const Part& p) { return p.organ != OrganClass::Leaf; }

class Refiner {
public:
  Refiner(const PointCloud& cloud, const RefineOptions& opt, RefineReport& report)
      : opt_(opt), report_(report), cloud_(cloud.points), index_(cloud.points) {
    Rng rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    st_.resize(opt.samples_per_part);
    // Stratified in s so every part is covered along its length.
    for (std::size_t i = 0; i < st_.size(); ++i) {
      st_[i] = {(static_cast<double>(i) + unit(rng)) / static_cast<double>(st_.size()), unit(rng)};
    }
  }

  LString run(LString l) {
    if (opt_.stems) {
      set_stage1_base(l);
      report_.stage1_initial = base_value_;
      descend(l, stage1_params(l), 1);
      report_.stage1_final = base_value_;
    }
    if (opt_.leaves) {
      set_stage2_base(l);
      report_.stage2_initial = base_value_;
      descend(l, stage2_params(l), 2);
      report_.stage2_final = base_value_;
    }
    return l;
  }

private:
  // --- stage 1: one-sided Chamfer from stem and petiole surfaces to the cloud

  std::vector<FreeParam> stage1_params(const LString& l) const {
    std::vector<std::size_t> stems;
    for (std::size_t i = 0; i < l.items.size(); ++i) {
      const auto* m = std::get_if<OrganModule>(&l.items[i]);
      if (m != nullptr && m->kind == ModuleKind::Stem) stems.push_back(i);
    }
    std::vector<FreeParam> out;
    for (std::size_t k = 0; k < stems.size(); ++k) {
      const std::size_t i = stems[k];
      // A stem is fitted against the plant below it plus its own organs.
      const std::size_t end = opt_.local_scope && k + 1 < stems.size() ? stems[k + 1]
                                                                        : std::numeric_limits<std::size_t>::max();
      out.push_back({i, stem_p::length, 1e-4, kMinLength, end});
      if (k > 0) out.push_back({i, stem_p::growing_angle, 3.0, -90.0, end});
      if (opt_.phyllotaxis) out.push_back({i, stem_p::phyllotaxis, 10.0, -720.0, end});
    }
    return out;
  }

  struct Stage1Eval {
    std::vector<std::size_t> items;  // generating item of every stage-1 part
    std::vector<double> sums;
    double value = 0.0;
  };

  Stage1Eval stage1_eval(const LString& l, std::size_t changed_item,
                         std::size_t scope_end = std::numeric_limits<std::size_t>::max()) const {
    const PlantGeometry g = interpret(l);
    Stage1Eval e;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& part : g.parts) {
      if (!stage1_part(part) || part.item >= scope_end) continue;
      const std::size_t k = e.items.size();
      double s;
      if (part.item < changed_item && k < base1_.items.size() && base1_.items[k] == part.item) {
        s = base1_.sums[k];
      } else {
        s = nn_sum(part_samples(part, st_), index_);
      }
      e.items.push_back(part.item);
      e.sums.push_back(s);
      total += s;
      n += st_.size();
    }
    e.value = total / static_cast<double>(n);
    return e;
  }

  void set_stage1_base(const LString& l) {
    base1_ = {};
    base1_ = stage1_eval(l, 0);
    base_value_ = base1_.value;
    stage_ = 1;
  }

  // --- stage 2: bidirectional Chamfer between the whole plant and the cloud.
  // Plant to cloud uses the part samples; cloud to plant uses the exact
  // distance to the part surfaces, so the value does not depend on how densely
  // a resized part happens to be sampled.

  struct Part2 {
    std::size_t item = 0;
    std::vector<Vec3> samples;
    TriangleMesh mesh;
    Bounds box;
    double fwd = 0.0;  ///< sum of sample to cloud distances
  };

  Part2 make_part2(const Part& part) const {
    Part2 p;
    p.item = part.item;
    p.samples = part_samples(part, st_);
    p.mesh = part_mesh(part);
    p.box = bounds_of(p.mesh);
    p.fwd = nn_sum(p.samples, index_);
    return p;
  }

  static double box_distance(const Vec3& q, const Bounds& b) {
    return (b.min - q).cwiseMax(q - b.max).cwiseMax(Vec3::Zero()).norm();
  }

  // Distance from q to the part surface if it is below `bound`, else `bound`.
  static double surface_distance(const Vec3& q, const Part2& p, double bound) {
    if (box_distance(q, p.box) >= bound) return bound;
    const auto& v = p.mesh.vertices;
    for (const auto& t : p.mesh.triangles) bound = std::min(bound, point_triangle_distance(q, v[t[0]], v[t[1]], v[t[2]]));
    return bound;
  }

  std::vector<FreeParam> stage2_params(const LString& l) const {
    std::vector<FreeParam> out;
    for (std::size_t i = 0; i < l.items.size(); ++i) {
      const auto* m = std::get_if<OrganModule>(&l.items[i]);
      if (m == nullptr || m->kind != ModuleKind::Leaf) continue;
      out.push_back({i, leaf_p::length, 1e-4, kMinLength});
      out.push_back({i, leaf_p::width, 1e-4, kMinLength});
      out.push_back({i, leaf_p::curvature, 0.1, -2.0});
    }
    return out;
  }

  void set_stage2_base(const LString& l) {
    parts2_.clear();
    for (const auto& part : interpret(l).parts) parts2_.push_back(make_part2(part));
    stage_ = 2;
    focus_item_ = 0;
    focus_stage2(std::numeric_limits<std::size_t>::max());
    base_value_ = other_fwd_ / static_cast<double>(parts2_.size() * st_.size());
    double rev = 0.0;
    for (double d : other_min_) rev += d;
    base_value_ += rev / static_cast<double>(cloud_.size());
  }

  // Caches the distance of every cloud point to the plant without `item`.
  void focus_stage2(std::size_t item) {
    if (focus_item_ == item) return;
    focus_item_ = item;
    std::vector<Vec3> others;
    other_fwd_ = 0.0;
    for (const auto& p : parts2_) {
      if (p.item == item) continue;
      others.insert(others.end(), p.samples.begin(), p.samples.end());
      other_fwd_ += p.fwd;
    }
    other_min_.assign(cloud_.size(), std::numeric_limits<double>::infinity());
    if (others.empty()) return;
    const NnIndex idx(std::move(others));
    for (std::size_t j = 0; j < cloud_.size(); ++j) {
      // The nearest sample bounds the surface distance from above.
      double d = idx.nearest(cloud_[j]).distance;
      for (const auto& p : parts2_) {
        if (p.item != item) d = surface_distance(cloud_[j], p, d);
      }
      other_min_[j] = d;
    }
  }

  // Value with the focused part replaced by `p`.
  double stage2_value(const Part2& p) const {
    double rev = 0.0;
    for (std::size_t j = 0; j < cloud_.size(); ++j) rev += surface_distance(cloud_[j], p, other_min_[j]);
    return (other_fwd_ + p.fwd) / static_cast<double>(parts2_.size() * st_.size()) +
           rev / static_cast<double>(cloud_.size());
  }

  Part2 item_part(const LString& l, std::size_t item) const {
    for (const auto& part : interpret(l).parts) {
      if (part.item == item) return make_part2(part);
    }
    throw GeometryError("refined module produced no geometry");
  }

  void commit_stage2(const LString& l, std::size_t item) {
    for (auto& p : parts2_) {
      if (p.item == item) {
        p = item_part(l, item);
        break;
      }
    }
  }

  // --- shared search

  double evaluate(const LString& l, const FreeParam& fp) {
    const std::size_t item = fp.item;
    ++report_.evaluations;
    try {
      if (stage_ == 1) return stage1_eval(l, item, fp.scope_end).value;
      focus_stage2(item);
      return stage2_value(item_part(l, item));
    } catch (const GeometryError&) {
      ++report_.failed_evaluations;
      return std::numeric_limits<double>::infinity();
    }
  }

  bool search(LString& l, const FreeParam& fp, int stage) {
    OrganModule& m = module_at(l, fp.item);
    const double x0 = m.params[fp.param];
    const double f0 = stage == 1 ? stage1_eval(l, fp.item, fp.scope_end).value : base_value_;
    const double half = std::max(opt_.bracket * std::abs(x0), fp.min_half_width);
    double a = std::max(x0 - half, fp.lower);
    double b = x0 + half;
    const double tol = opt_.rel_tol * std::max(std::abs(x0), fp.min_half_width);

    double best_x = x0;
    double best_f = f0;
    auto f = [&](double x) {
      m.params[fp.param] = x;
      const double v = evaluate(l, fp);
      if (v < best_f) {
        best_f = v;
        best_x = x;
      }
      return v;
    };
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > tol) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = f(d);
      }
    }
    // The stored value must be what the text form represents.
    const double q = quantize(best_x);
    double fq = best_f;
    if (q != best_x && best_f < f0) {
      fq = f(q);
      best_x = q;
    }
    if (best_x != x0 && fq < f0 * (1.0 - opt_.min_gain)) {
      m.params[fp.param] = best_x;
      if (stage == 1) {
        base1_ = stage1_eval(l, 0);
        base_value_ = base1_.value;
      } else {
        commit_stage2(l, fp.item);
        base_value_ = fq;
      }
      report_.accepted.push_back({stage, fp.item, fp.param, x0, best_x, f0, fq});
      return true;
    }
    m.params[fp.param] = x0;
    return false;
  }

  void descend(LString& l, const std::vector<FreeParam>& params, int stage) {
    for (int sweep = 0; sweep < opt_.sweeps; ++sweep) {
      bool changed = false;
      for (const auto& fp : params) changed = search(l, fp, stage) || changed;
      if (!changed) break;
    }
  }

  const RefineOptions& opt_;
  RefineReport& report_;
  const std::vector<Vec3>& cloud_;
  NnIndex index_;
  std::vector<std::array<double, 2>> st_;
  int stage_ = 1;
  double base_value_ = 0.0;
  Stage1Eval base1_;
  std::vector<Part2> parts2_;
  std::size_t focus_item_ = 0;
  double other_fwd_ = 0.0;
  std::vector<double> other_min_;
};

}  // namespace

LString refine(const LString& l, const PointCloud& p, const RefineOptions& options, RefineReport* report) {
  if (p.empty()) throw std::invalid_argument("refine: empty point cloud");
  if (options.samples_per_part == 0) throw std::invalid_argument("refine: samples_per_part must be >= 1");
  to_binary_tree(l);  // rejects malformed input
  RefineReport local;
  RefineReport& r = report != nullptr ? *report : local;
  r = {};
  Refiner refiner(p, options, r);
  return refiner.run(l);
}

// ---------------------------------------------------------------------------
// Segmentation

SegmentationResult segment(const LString& l, const PointCloud& p, const SegmentOptions& options) {
  if (p.empty()) throw std::invalid_argument("segment: empty point cloud");
  if (options.k == 0) throw std::invalid_argument("segment: k must be >= 1");
  Rng rng(options.seed);
  const PointCloud ref = sample_points(interpret(l), options.reference_points, rng);
  if (ref.empty()) throw GeometryError("segment: reconstruction has no surface to sample");
  const NnIndex index(ref.points);

  SegmentationResult r;
  r.k = options.k;
  r.labels.resize(p.size());
  r.instances.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto nn = index.knn(p.points[i], options.k);
    std::array<std::size_t, kOrganClasses> votes{};
    for (const auto& n : nn) ++votes[ref.labels[n.index]];
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    // Neighbors are sorted by distance: the first tied class met is the nearest.
    std::uint8_t cls = 0;
    for (const auto& n : nn) {
      if (votes[ref.labels[n.index]] == top) {
        cls = ref.labels[n.index];
        break;
      }
    }
    std::map<std::uint16_t, std::size_t> inst;
    for (const auto& n : nn) {
      if (ref.labels[n.index] == cls) ++inst[ref.instances[n.index]];
    }
    std::size_t inst_top = 0;
    for (const auto& [id, c] : inst) inst_top = std::max(inst_top, c);
    for (const auto& n : nn) {
      if (ref.labels[n.index] == cls && inst[ref.instances[n.index]] == inst_top) {
        r.instances[i] = ref.instances[n.index];
        break;
      }
    }
    r.labels[i] = cls;
  }
  return r;
}

}  // namespace plantrec
