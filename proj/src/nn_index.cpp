#include "plantrec/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace plantrec {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

NnIndex::NnIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("NnIndex: too many points");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()), 0);
}

std::int32_t NnIndex::build(std::uint32_t begin, std::uint32_t end, int depth) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Bounds b;
  for (std::uint32_t i = begin; i < end; ++i) b.extend(points_[order_[i]]);
  int axis = 0;
  (b.max - b.min).maxCoeff(&axis);
  if (b.max[axis] == b.min[axis]) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t c) { return points_[a][axis] < points_[c][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid, depth + 1);
  const std::int32_t right = build(mid, end, depth + 1);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void NnIndex::search_nearest(std::int32_t ni, const Vec3& q, Neighbor& best, double& best2) const {
  const Node& n = nodes_[static_cast<std::size_t>(ni)];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::uint32_t idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best2 || (d2 == best2 && idx < best.index)) {
        best2 = d2;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff < 0.0 ? n.left : n.right;
  const std::int32_t far = diff < 0.0 ? n.right : n.left;
  search_nearest(near, q, best, best2);
  // <= keeps equal-distance candidates on the far side reachable for the index tie-break
  if (diff * diff <= best2) search_nearest(far, q, best, best2);
}

NnIndex::Neighbor NnIndex::nearest(const Vec3& q) const {
  if (points_.empty()) throw std::logic_error("NnIndex::nearest on an empty index");
  Neighbor best{std::numeric_limits<std::size_t>::max(), 0.0};
  double best2 = std::numeric_limits<double>::infinity();
  search_nearest(0, q, best, best2);
  best.distance = std::sqrt(best2);
  return best;
}

void NnIndex::search_knn(std::int32_t ni, const Vec3& q, std::size_t k,
                         std::vector<std::pair<double, std::size_t>>& heap) const {
  const Node& n = nodes_[static_cast<std::size_t>(ni)];
  if (n.axis < 0) {
    for (std::uint32_t i = n.begin; i < n.end; ++i) {
      const std::pair<double, std::size_t> cand{(points_[order_[i]] - q).squaredNorm(), order_[i]};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::int32_t near = diff < 0.0 ? n.left : n.right;
  const std::int32_t far = diff < 0.0 ? n.right : n.left;
  search_knn(near, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().first) search_knn(far, q, k, heap);
}

std::vector<NnIndex::Neighbor> NnIndex::knn(const Vec3& q, std::size_t k) const {
  std::vector<Neighbor> out;
  if (points_.empty() || k == 0) return out;
  std::vector<std::pair<double, std::size_t>> heap;
  heap.reserve(k + 1);
  search_knn(0, q, k, heap);
  std::sort(heap.begin(), heap.end());
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back({idx, std::sqrt(d2)});
  return out;
}

}  // namespace plantrec
