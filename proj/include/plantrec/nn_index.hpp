#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "plantrec/geometry.hpp"

namespace plantrec {

/// Exact nearest-neighbour index over a fixed 3D point set (median-split kd-tree).
class NnIndex {
public:
  struct Neighbor {
    std::size_t index;
    double distance;
  };

  NnIndex() = default;
  explicit NnIndex(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Nearest member; ties resolve to the lowest index. Requires a non-empty index.
  Neighbor nearest(const Vec3& q) const;
  /// The `k` nearest members sorted by (distance, index); fewer if the index is smaller.
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;

private:
  struct Node {
    std::uint32_t begin;
    std::uint32_t end;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, int depth);
  void search_nearest(std::int32_t node, const Vec3& q, Neighbor& best, double& best2) const;
  void search_knn(std::int32_t node, const Vec3& q, std::size_t k,
                  std::vector<std::pair<double, std::size_t>>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace plantrec
