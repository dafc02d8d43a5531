#pragma once

// File formats: PLY point clouds, OBJ meshes with organ groups, skeleton
// edge lists and .lstr L-String files.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "plantrec/geometry.hpp"
#include "plantrec/lstring.hpp"

namespace plantrec {

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Binary little-endian PLY with double x,y,z and, when present, uchar label
/// and ushort instance. The reader also accepts ASCII PLY and float coordinates.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

/// OBJ with one `g <organ>_<instance>` group per part.
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);

/// "vertices N", N lines "x y z", "edges M", M lines "i j".
void write_skeleton(const std::filesystem::path& path, const Skeleton& s);
Skeleton read_skeleton(const std::filesystem::path& path);

void write_lstring(const std::filesystem::path& path, const LString& l);
LString read_lstring(const std::filesystem::path& path);

}  // namespace plantrec
