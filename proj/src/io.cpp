#include "plantrec/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace plantrec {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// PLY

void write_ply(const fs::path& path, const PointCloud& cloud) {
  cloud.check();
  const bool labels = !cloud.labels.empty();
  const bool instances = !cloud.instances.empty();
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << '\n'
         << "property double x\nproperty double y\nproperty double z\n";
  if (labels) header << "property uchar label\n";
  if (instances) header << "property ushort instance\n";
  header << "end_header\n";

  std::string data = header.str();
  const std::size_t stride = 24 + (labels ? 1 : 0) + (instances ? 2 : 0);
  const std::size_t off = data.size();
  data.resize(off + stride * cloud.size());
  char* p = data.data() + off;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::memcpy(p, cloud.points[i].data(), 24);
    p += 24;
    if (labels) *p++ = static_cast<char>(cloud.labels[i]);
    if (instances) {
      std::memcpy(p, &cloud.instances[i], 2);
      p += 2;
    }
  }
  write_text(path, data);
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t size = 0;
};

std::size_t ply_type_size(const std::string& t) {
  static const std::map<std::string, std::size_t> sizes = {
      {"char", 1},   {"uchar", 1},  {"int8", 1},   {"uint8", 1},   {"short", 2},
      {"ushort", 2}, {"int16", 2},  {"uint16", 2}, {"int", 4},     {"uint", 4},
      {"int32", 4},  {"uint32", 4}, {"float", 4},  {"float32", 4}, {"double", 8},
      {"float64", 8}};
  const auto it = sizes.find(t);
  if (it == sizes.end()) throw IoError("unsupported PLY property type '" + t + "'");
  return it->second;
}

double read_binary_value(const char* p, const std::string& t) {
  auto get = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

}  // namespace

PointCloud read_ply(const fs::path& path) {
  const std::string data = read_text(path);
  const std::string where = path.string();
  const auto end = data.find("end_header");
  if (data.rfind("ply", 0) != 0 || end == std::string::npos) throw IoError(where + ": not a PLY file");
  std::size_t body = data.find('\n', end);
  if (body == std::string::npos) throw IoError(where + ": truncated header");
  ++body;

  std::istringstream hs(data.substr(0, end));
  std::string line, format;
  std::size_t count = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<PlyProperty> props;
  while (std::getline(hs, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      ls >> format;
    } else if (kw == "element") {
      std::string name;
      ls >> name;
      if (seen_vertex && in_vertex) in_vertex = false;
      if (name == "vertex") {
        ls >> count;
        in_vertex = seen_vertex = true;
      } else if (!seen_vertex) {
        throw IoError(where + ": elements before 'vertex' are not supported");
      }
    } else if (kw == "property" && in_vertex) {
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") throw IoError(where + ": list properties on vertices are not supported");
      ls >> p.name;
      p.size = ply_type_size(p.type);
      props.push_back(p);
    }
  }
  if (!seen_vertex) throw IoError(where + ": no vertex element");

  int ix = -1, iy = -1, iz = -1, il = -1, ii = -1;
  for (std::size_t k = 0; k < props.size(); ++k) {
    const auto& n = props[k].name;
    const int kk = static_cast<int>(k);
    if (n == "x") ix = kk;
    if (n == "y") iy = kk;
    if (n == "z") iz = kk;
    if (n == "label") il = kk;
    if (n == "instance") ii = kk;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw IoError(where + ": missing x/y/z properties");

  PointCloud cloud;
  cloud.points.resize(count);
  if (il >= 0) cloud.labels.resize(count);
  if (ii >= 0) cloud.instances.resize(count);
  std::vector<double> row(props.size());
  auto store = [&](std::size_t i) {
    cloud.points[i] = Vec3(row[ix], row[iy], row[iz]);
    if (il >= 0) cloud.labels[i] = static_cast<std::uint8_t>(row[il]);
    if (ii >= 0) cloud.instances[i] = static_cast<std::uint16_t>(row[ii]);
  };

  if (format == "binary_little_endian") {
    std::size_t stride = 0;
    for (const auto& p : props) stride += p.size;
    if (data.size() < body + stride * count) throw IoError(where + ": truncated vertex data");
    const char* p = data.data() + body;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < props.size(); ++k) {
        row[k] = read_binary_value(p, props[k].type);
        p += props[k].size;
      }
      store(i);
    }
  } else if (format == "ascii") {
    std::istringstream bs(data.substr(body));
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& v : row) {
        if (!(bs >> v)) throw IoError(where + ": truncated vertex data");
      }
      store(i);
    }
  } else {
    throw IoError(where + ": unsupported PLY format '" + format + "'");
  }
  try {
    cloud.check();
  } catch (const std::invalid_argument& e) {
    throw IoError(where + ": " + e.what());
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// OBJ

void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  std::uint32_t current = std::numeric_limits<std::uint32_t>::max();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const std::uint32_t part = mesh.triangle_part[t];
    if (part != current) {
      current = part;
      const auto& lab = mesh.parts[part];
      out << "g " << organ_name(lab.organ) << '_' << lab.instance << '\n';
    }
    const auto& tri = mesh.triangles[t];
    out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  }
  write_text(path, out.str());
}

namespace {

PartLabel parse_group(const std::string& name) {
  const auto us = name.rfind('_');
  if (us != std::string::npos) {
    const std::string organ = name.substr(0, us);
    unsigned inst = 0;
    const auto* b = name.data() + us + 1;
    const auto [ptr, ec] = std::from_chars(b, name.data() + name.size(), inst);
    if (ec == std::errc() && ptr == name.data() + name.size()) {
      for (std::size_t c = 0; c < kOrganClasses; ++c) {
        if (organ_name(static_cast<OrganClass>(c)) == organ) {
          return {static_cast<OrganClass>(c), static_cast<std::uint16_t>(inst)};
        }
      }
    }
  }
  return {OrganClass::Stem, 0};
}

}  // namespace

TriangleMesh read_obj(const fs::path& path) {
  std::istringstream in(read_text(path));
  TriangleMesh m;
  std::map<std::string, std::uint32_t> groups;
  std::int64_t part = -1;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) fail("bad vertex");
      m.vertices.push_back(v);
    } else if (kw == "g" || kw == "o") {
      std::string name;
      ls >> name;
      auto [it, inserted] = groups.try_emplace(name, static_cast<std::uint32_t>(m.parts.size()));
      if (inserted) m.parts.push_back(parse_group(name));
      part = it->second;
    } else if (kw == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || v == 0) fail("bad face index '" + tok + "'");
        if (v < 0) v += static_cast<long long>(m.vertices.size()) + 1;
        if (v < 1 || v > static_cast<long long>(m.vertices.size())) fail("face index out of range");
        idx.push_back(static_cast<std::uint32_t>(v - 1));
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      if (part < 0) {
        part = static_cast<std::int64_t>(m.parts.size());
        m.parts.push_back({OrganClass::Stem, 0});
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        m.triangle_part.push_back(static_cast<std::uint32_t>(part));
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Skeleton and L-String

void write_skeleton(const fs::path& path, const Skeleton& s) {
  std::ostringstream out;
  out.precision(17);
  out << "vertices " << s.vertices.size() << '\n';
  for (const auto& v : s.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  out << "edges " << s.edges.size() << '\n';
  for (const auto& e : s.edges) out << e[0] << ' ' << e[1] << '\n';
  write_text(path, out.str());
}

Skeleton read_skeleton(const fs::path& path) {
  std::istringstream in(read_text(path));
  Skeleton s;
  std::string kw;
  std::size_t n = 0;
  if (!(in >> kw >> n) || kw != "vertices") throw IoError(path.string() + ": expected 'vertices N'");
  s.vertices.resize(n);
  for (auto& v : s.vertices) {
    if (!(in >> v.x() >> v.y() >> v.z())) throw IoError(path.string() + ": truncated vertex table");
  }
  if (!(in >> kw >> n) || kw != "edges") throw IoError(path.string() + ": expected 'edges M'");
  s.edges.resize(n);
  for (auto& e : s.edges) {
    if (!(in >> e[0] >> e[1])) throw IoError(path.string() + ": truncated edge list");
    if (e[0] >= s.vertices.size() || e[1] >= s.vertices.size()) {
      throw IoError(path.string() + ": edge references a missing vertex");
    }
  }
  return s;
}

void write_lstring(const fs::path& path, const LString& l) { write_text(path, serialize(l) + "\n"); }

LString read_lstring(const fs::path& path) {
  try {
    return parse_lstring(read_text(path));
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace plantrec
