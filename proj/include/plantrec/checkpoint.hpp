#pragma once

// Weight container: "PHYT" magic, u32 format version, then a sequence of named
// tensors until end of file. Each tensor is
//   u32 name length | name bytes (UTF-8) | u32 rank | rank x u64 dims | f64 data
// with every integer and float stored little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plantrec/numcore.hpp"

namespace plantrec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<double> data;

  bool operator==(const Tensor&) const = default;
};

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the encoded bytes; used to tie an encoder checkpoint to the
/// auto-encoder it was trained against.
std::uint64_t checkpoint_hash(const std::vector<Tensor>& tensors);

Tensor tensor_from_view(const num::ParamView& view);
void load_into_views(const std::vector<Tensor>& tensors, std::span<const num::ParamView> views);

Tensor scalar_tensor(std::string name, double value);
const Tensor* find_tensor(const std::vector<Tensor>& tensors, std::string_view name);
const Tensor& require_tensor(const std::vector<Tensor>& tensors, std::string_view name);

// Strings (config echo) ride along as rank-1 tensors of byte values.
Tensor string_tensor(std::string name, std::string_view text);
std::string tensor_string(const Tensor& t);

}  // namespace plantrec
