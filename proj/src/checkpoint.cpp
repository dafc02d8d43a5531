#include "plantrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace plantrec {

namespace {

constexpr char kMagic[4] = {'P', 'H', 'Y', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) throw CheckpointError("checkpoint truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<Tensor>& tensors) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) {
      throw CheckpointError("tensor '" + t.name + "' data does not match its dims");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

std::vector<Tensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.get_string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<Tensor> out;
  while (!r.done()) {
    Tensor t;
    t.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      count *= t.dims.back();
    }
    t.data.resize(count);
    for (auto& v : t.data) v = r.get<double>();
    out.push_back(std::move(t));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed: " + path.string());
}

std::vector<Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::uint64_t checkpoint_hash(const std::vector<Tensor>& tensors) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : encode_checkpoint(tensors)) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

Tensor tensor_from_view(const num::ParamView& view) {
  return {view.name, view.dims, std::vector<double>(view.values.begin(), view.values.end())};
}

void load_into_views(const std::vector<Tensor>& tensors, std::span<const num::ParamView> views) {
  for (const auto& v : views) {
    const Tensor& t = require_tensor(tensors, v.name);
    if (t.dims != v.dims) throw CheckpointError("shape mismatch for tensor '" + v.name + "'");
    std::copy(t.data.begin(), t.data.end(), v.values.begin());
  }
}

Tensor scalar_tensor(std::string name, double value) { return {std::move(name), {}, {value}}; }

const Tensor* find_tensor(const std::vector<Tensor>& tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Tensor& require_tensor(const std::vector<Tensor>& tensors, std::string_view name) {
  const Tensor* t = find_tensor(tensors, name);
  if (t == nullptr) throw CheckpointError("checkpoint is missing tensor '" + std::string(name) + "'");
  return *t;
}

Tensor string_tensor(std::string name, std::string_view text) {
  Tensor t{std::move(name), {text.size()}, {}};
  for (unsigned char c : text) t.data.push_back(static_cast<double>(c));
  return t;
}

std::string tensor_string(const Tensor& t) {
  std::string s;
  for (double v : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  return s;
}

}  // namespace plantrec
