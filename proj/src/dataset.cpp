#include "plantrec/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "plantrec/io.hpp"
#include "plantrec/procgen.hpp"

namespace plantrec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::string_view variant_name(CloudVariant v) {
  switch (v) {
    case CloudVariant::Clean: return "clean";
    case CloudVariant::Noisy: return "noisy";
    case CloudVariant::Depth: return "depth";
  }
  return "clean";
}

CloudVariant parse_variant(std::string_view s) {
  if (s == "clean") return CloudVariant::Clean;
  if (s == "noisy") return CloudVariant::Noisy;
  if (s == "depth") return CloudVariant::Depth;
  throw std::invalid_argument("unknown cloud variant '" + std::string(s) +
                              "' (expected clean, noisy or depth)");
}

void split_counts(std::size_t n, std::size_t& train, std::size_t& val, std::size_t& test) {
  val = (n + 5) / 10;
  test = (n + 5) / 10;
  train = n - val - test;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

Split split_of(const DatasetConfig& cfg, std::size_t structure, std::size_t plant) {
  std::vector<std::size_t> order(cfg.per_structure);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive(cfg.seed, 0x5917, structure));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), plant) - order.begin());
  std::size_t train = 0, val = 0, test = 0;
  split_counts(cfg.per_structure, train, val, test);
  if (pos < train) return Split::Train;
  if (pos < train + val) return Split::Val;
  return Split::Test;
}

PointCloud subsample(const PointCloud& p, std::size_t n, Rng& rng) {
  if (p.size() <= n) return p;
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  for (auto i : idx) {
    out.points.push_back(p.points[i]);
    if (p.labeled()) out.labels.push_back(p.labels[i]);
    if (!p.instances.empty()) out.instances.push_back(p.instances[i]);
  }
  return out;
}

std::string record_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "plants/%05zu", id);
  return buf;
}

json config_json(const DatasetConfig& c) {
  return {{"structures", c.structures}, {"per_structure", c.per_structure}, {"seed", c.seed},
          {"points", c.points},         {"noise_sigma", c.noise_sigma},     {"depth_views", c.depth_views}};
}

}  // namespace

GeneratedRecord generate_record(const DatasetConfig& cfg, std::size_t index) {
  if (cfg.per_structure == 0) throw std::invalid_argument("per_structure must be >= 1");
  GeneratedRecord g;
  RecordInfo& r = g.info;
  r.id = index;
  r.structure_id = index / cfg.per_structure;
  const std::size_t plant = index % cfg.per_structure;
  // Consecutive catalog entries, so distinct structure ids never share a topology.
  r.structure_seed = (cfg.seed * 131 + r.structure_id) % topology_catalog().size();
  r.param_seed = derive(cfg.seed, r.structure_id, plant);
  Rng rng(derive(r.param_seed, 0xda7a));
  r.age_days = kMinAgeDays + (kMaxAgeDays - kMinAgeDays) * std::uniform_real_distribution<double>(0, 1)(rng);
  r.age_days = quantize(r.age_days);
  r.split = split_of(cfg, r.structure_id, plant);

  g.lstring = grow({r.structure_seed, r.age_days, r.param_seed});
  r.node_count = to_binary_tree(g.lstring).size();
  const Interpretation interp = interpret_full(g.lstring);
  const TriangleMesh mesh = to_mesh(interp.geometry);
  g.skeleton = interp.skeleton;
  g.clean = sample_points(mesh, cfg.points, rng);
  g.noisy = add_noise(g.clean, cfg.noise_sigma * plant_height(interp.geometry), rng);
  for (std::size_t v = 0; v < cfg.depth_views; ++v) {
    const double az = 360.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    g.depth.push_back(
        subsample(render_depth_view(interp.geometry, default_depth_camera(interp.geometry, az)), cfg.points, rng));
  }

  const std::string stem = record_stem(index);
  r.lstring = stem + ".lstr";
  r.clean = stem + "_clean.ply";
  r.noisy = stem + "_noisy.ply";
  for (std::size_t v = 0; v < cfg.depth_views; ++v) r.depth.push_back(stem + "_depth" + std::to_string(v) + ".ply");
  r.skeleton = stem + "_skeleton.txt";
  return g;
}

Dataset build_dataset(const DatasetConfig& cfg, const fs::path& out) {
  if (cfg.structures == 0 || cfg.per_structure == 0) {
    throw std::invalid_argument("dataset needs at least one structure and one plant per structure");
  }
  if (cfg.structures > topology_catalog().size()) {
    throw std::invalid_argument("at most " + std::to_string(topology_catalog().size()) +
                                " distinct structures are available");
  }
  fs::create_directories(out / "plants");
  Dataset ds;
  ds.root = out;
  ds.config = cfg;
  const std::size_t total = cfg.structures * cfg.per_structure;
  const unsigned threads = std::max(1u, cfg.threads ? cfg.threads : std::thread::hardware_concurrency());
  const std::size_t chunk = 16 * threads;

  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t n = std::min(chunk, total - start);
    std::vector<GeneratedRecord> batch(n);
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) batch[i] = generate_record(cfg, start + i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (auto& g : batch) {
      write_lstring(out / g.info.lstring, g.lstring);
      write_ply(out / g.info.clean, g.clean);
      write_ply(out / g.info.noisy, g.noisy);
      for (std::size_t v = 0; v < g.depth.size(); ++v) write_ply(out / g.info.depth[v], g.depth[v]);
      write_skeleton(out / g.info.skeleton, g.skeleton);
      ds.records.push_back(std::move(g.info));
    }
  }

  json records = json::array();
  for (const auto& r : ds.records) {
    records.push_back({{"id", r.id},
                       {"structure_id", r.structure_id},
                       {"structure_seed", r.structure_seed},
                       {"param_seed", r.param_seed},
                       {"age_days", r.age_days},
                       {"split", split_name(r.split)},
                       {"node_count", r.node_count},
                       {"lstring", r.lstring},
                       {"clean", r.clean},
                       {"noisy", r.noisy},
                       {"depth", r.depth},
                       {"skeleton", r.skeleton}});
  }
  const json manifest = {{"format", "plantrec-dataset"}, {"version", 1}, {"config", config_json(cfg)},
                         {"records", records}};
  write_text(out / "manifest.json", manifest.dump(1) + "\n");
  return ds;
}

Dataset load_dataset(const fs::path& root) {
  const fs::path mpath = root / "manifest.json";
  json m;
  try {
    m = json::parse(read_text(mpath));
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": " + e.what());
  }
  Dataset ds;
  ds.root = root;
  try {
    const auto& c = m.at("config");
    ds.config.structures = c.at("structures");
    ds.config.per_structure = c.at("per_structure");
    ds.config.seed = c.at("seed");
    ds.config.points = c.at("points");
    ds.config.noise_sigma = c.at("noise_sigma");
    ds.config.depth_views = c.at("depth_views");
    for (const auto& j : m.at("records")) {
      RecordInfo r;
      r.id = j.at("id");
      r.structure_id = j.at("structure_id");
      r.structure_seed = j.at("structure_seed");
      r.param_seed = j.at("param_seed");
      r.age_days = j.at("age_days");
      r.split = parse_split(j.at("split").get<std::string>());
      r.node_count = j.at("node_count");
      r.lstring = j.at("lstring");
      r.clean = j.at("clean");
      r.noisy = j.at("noisy");
      r.depth = j.at("depth").get<std::vector<std::string>>();
      r.skeleton = j.at("skeleton");
      ds.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(mpath.string() + ": malformed manifest: " + e.what());
  }
  return ds;
}

std::vector<const RecordInfo*> Dataset::split(Split s) const {
  std::vector<const RecordInfo*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

LString Dataset::lstring(const RecordInfo& r) const { return read_lstring(root / r.lstring); }

PointCloud Dataset::cloud(const RecordInfo& r, CloudVariant v, std::size_t view) const {
  switch (v) {
    case CloudVariant::Clean: return read_ply(root / r.clean);
    case CloudVariant::Noisy: return read_ply(root / r.noisy);
    case CloudVariant::Depth:
      if (view >= r.depth.size()) throw IoError("record " + std::to_string(r.id) + " has no depth view " + std::to_string(view));
      return read_ply(root / r.depth[view]);
  }
  throw std::logic_error("unreachable");
}

Skeleton Dataset::skeleton(const RecordInfo& r) const { return read_skeleton(root / r.skeleton); }

}  // namespace plantrec
