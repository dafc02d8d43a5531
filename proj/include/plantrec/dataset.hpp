#pragma once

// Synthetic dataset: generation of (L-String, point cloud) pairs with their
// corrupted variants, per-structure split and the on-disk manifest.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plantrec/geometry.hpp"
#include "plantrec/lstring.hpp"

namespace plantrec {

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

enum class CloudVariant { Clean, Noisy, Depth };
std::string_view variant_name(CloudVariant v);
CloudVariant parse_variant(std::string_view s);

struct DatasetConfig {
  std::size_t structures = 33;
  std::size_t per_structure = 100;
  std::uint64_t seed = 0;
  std::size_t points = 4096;
  double noise_sigma = 0.005;  ///< relative to plant height
  std::size_t depth_views = 1;
  unsigned threads = 0;        ///< 0 = hardware concurrency
};

struct RecordInfo {
  std::size_t id = 0;
  std::size_t structure_id = 0;
  std::uint64_t structure_seed = 0;
  std::uint64_t param_seed = 0;
  double age_days = 0.0;
  Split split = Split::Train;
  std::size_t node_count = 0;
  std::string lstring;   ///< relative paths inside the dataset directory
  std::string clean;
  std::string noisy;
  std::vector<std::string> depth;
  std::string skeleton;
};

struct Dataset {
  std::filesystem::path root;
  DatasetConfig config;
  std::vector<RecordInfo> records;

  std::vector<const RecordInfo*> split(Split s) const;
  LString lstring(const RecordInfo& r) const;
  PointCloud cloud(const RecordInfo& r, CloudVariant v, std::size_t view = 0) const;
  Skeleton skeleton(const RecordInfo& r) const;
};

/// Everything generated for one record, before it is written.
struct GeneratedRecord {
  RecordInfo info;
  LString lstring;
  PointCloud clean;
  PointCloud noisy;
  std::vector<PointCloud> depth;
  Skeleton skeleton;
};

/// Record `index` of a dataset. Depends only on the config seed and index.
GeneratedRecord generate_record(const DatasetConfig& cfg, std::size_t index);

/// Writes all records plus `manifest.json` under `out`.
Dataset build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out);
Dataset load_dataset(const std::filesystem::path& root);

/// Train/val/test sizes used for `n` plants of one structure (80/10/10).
void split_counts(std::size_t n, std::size_t& train, std::size_t& val, std::size_t& test);

}  // namespace plantrec
