#include "plantrec/evaluation.hpp"

#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "plantrec/procgen.hpp"

namespace plantrec {

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(n, threads ? threads : hw));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= n || error) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Vec3 cloud_base(const PointCloud& p) {
  const Bounds b = bounds_of(p.points);
  const Vec3 c = b.center();
  return {c.x(), c.y(), b.min.z()};
}

double cloud_height(const PointCloud& p) {
  const Bounds b = bounds_of(p.points);
  return b.max.z() - b.min.z();
}

NormalizationTransform fit_cloud_normalization(const std::vector<const PointCloud*>& clouds) {
  std::vector<Vec3> bases;
  std::vector<double> heights;
  for (const auto* c : clouds) {
    if (c->empty()) continue;
    bases.push_back(cloud_base(*c));
    heights.push_back(cloud_height(*c));
  }
  return fit_normalization(bases, heights);
}

PcEncSample make_pcenc_sample(const RvnnModel& m, const LString& l, PointCloud clean,
                              std::vector<PointCloud> depth) {
  return {std::move(clean), std::move(depth), encode_tree(m, to_binary_tree(l))};
}

namespace {

// Every skeleton vertex must sit on the center line of a stem or petiole.
bool skeleton_on_axes(const Skeleton& s, const PlantGeometry& g) {
  for (const auto& v : s.vertices) {
    bool found = false;
    for (const auto& part : g.parts) {
      if (part.organ != OrganClass::Stem && part.organ != OrganClass::Petiole) continue;
      for (std::size_t i = 0; i + 1 < part.axis.size() && !found; ++i) {
        found = point_segment_distance(v, part.axis[i], part.axis[i + 1]) < 1e-9;
      }
      if (found) break;
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

PlantEval evaluate_prediction(const LString& truth, const LString& predicted, const PointCloud& input,
                              const EvalOptions& options) {
  if (!input.labeled()) throw std::invalid_argument("evaluation needs a labeled input cloud");
  PlantEval r;
  r.predicted = predicted;
  r.topology_ok = topology_signature(to_binary_tree(truth)) == topology_signature(to_binary_tree(predicted));

  const Interpretation pred = interpret_full(predicted);
  const Interpretation gt = interpret_full(truth);
  r.recon = evaluate_reconstruction(to_mesh(pred.geometry), to_mesh(gt.geometry), options.recon);
  r.skeleton_chamfer = chamfer_bidirectional(skeleton_points(pred.skeleton, options.skeleton_step),
                                             skeleton_points(gt.skeleton, options.skeleton_step));
  r.skeleton_leaf_free = skeleton_on_axes(pred.skeleton, pred.geometry);

  const SegmentationResult seg = segment(predicted, input, options.segment);
  r.labels_total = seg.labels.size() == input.size() && seg.instances.size() == input.size();
  const auto scores = classification_metrics(seg.labels, input.labels, kOrganClasses);
  std::copy(scores.begin(), scores.end(), r.segmentation.begin());
  std::size_t agree = 0;
  for (std::size_t i = 0; i < input.size(); ++i) agree += seg.labels[i] == input.labels[i] ? 1 : 0;
  r.label_agreement = static_cast<double>(agree) / static_cast<double>(input.size());
  return r;
}

PlantEval evaluate_plant(const LString& truth, const PointCloud& input, const PcEncoder& e,
                         const RvnnModel& m, const EvalOptions& options) {
  InferResult inf = infer(input, e, m);
  LString predicted = inf.lstring;
  if (options.refine) predicted = refine(predicted, input, options.refine_options);
  PlantEval r = evaluate_prediction(truth, predicted, input, options);
  r.repairs = inf.repairs.size();
  r.refined = options.refine;
  // Topology is judged on the network output; refinement never changes it.
  r.topology_ok = same_topology(inf.tree, to_binary_tree(truth));
  return r;
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  for (double x : v) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(v.size()));
  return r;
}

namespace {

struct Column {
  std::string name;
  std::function<double(const PlantEval&)> get;
};

std::vector<Column> metric_columns() {
  std::vector<Column> c = {
      {"topology_ok", [](const PlantEval& r) { return r.topology_ok ? 1.0 : 0.0; }},
      {"repairs", [](const PlantEval& r) { return static_cast<double>(r.repairs); }},
      {"accuracy", [](const PlantEval& r) { return r.recon.accuracy; }},
      {"completeness", [](const PlantEval& r) { return r.recon.completeness; }},
      {"hausdorff", [](const PlantEval& r) { return r.recon.hausdorff; }},
      {"silhouette", [](const PlantEval& r) { return r.recon.silhouette; }},
      {"components", [](const PlantEval& r) { return static_cast<double>(r.recon.components); }},
      {"skeleton_chamfer", [](const PlantEval& r) { return r.skeleton_chamfer; }},
      {"label_agreement", [](const PlantEval& r) { return r.label_agreement; }},
  };
  for (std::size_t k = 0; k < kOrganClasses; ++k) {
    const std::string n(organ_name(static_cast<OrganClass>(k)));
    c.push_back({n + "_precision", [k](const PlantEval& r) { return r.segmentation[k].precision; }});
    c.push_back({n + "_recall", [k](const PlantEval& r) { return r.segmentation[k].recall; }});
    c.push_back({n + "_f1", [k](const PlantEval& r) { return r.segmentation[k].f1; }});
    c.push_back({n + "_iou", [k](const PlantEval& r) { return r.segmentation[k].iou; }});
  }
  return c;
}

}  // namespace

std::string eval_csv(const std::vector<PlantEval>& rows) {
  const auto cols = metric_columns();
  std::ostringstream out;
  out << std::setprecision(9) << "id,variant";
  for (const auto& c : cols) out << ',' << c.name;
  out << '\n';
  for (const auto& r : rows) {
    out << r.id << ',' << variant_name(r.variant);
    for (const auto& c : cols) out << ',' << c.get(r);
    out << '\n';
  }
  return out.str();
}

std::string eval_summary(const std::vector<PlantEval>& rows) {
  const auto cols = metric_columns();
  std::map<std::string, std::vector<const PlantEval*>> by_variant;
  for (const auto& r : rows) by_variant[std::string(variant_name(r.variant))].push_back(&r);
  std::ostringstream out;
  out << std::setprecision(5);
  for (const auto& [variant, list] : by_variant) {
    out << variant << " (" << list.size() << " plants)\n";
    for (const auto& c : cols) {
      std::vector<double> v;
      for (const auto* r : list) v.push_back(c.get(*r));
      const MeanStd ms = mean_std(v);
      out << "  " << std::left << std::setw(22) << c.name << ms.mean << " +- " << ms.std << '\n';
    }
  }
  return out.str();
}

}  // namespace plantrec
