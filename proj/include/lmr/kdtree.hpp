#pragma once

#include "lmr/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace lmr {

/// Squared L2 distance accumulated in double, in dimension order.
double squared_distance(const float* a, const float* b, std::size_t dim) noexcept;

/// Exact nearest-neighbour search over the rows of a descriptor matrix.
/// Equal distances resolve to the lowest row index, so results match a
/// linear scan bit for bit.
class KdTree {
public:
  struct Neighbor {
    std::uint32_t index = 0;
    double squared_distance = 0;
  };

  KdTree() = default;
  explicit KdTree(DescriptorMatrix points, std::size_t leaf_size = 8);

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  const DescriptorMatrix& points() const noexcept { return points_; }

  /// Requires size() > 0.
  Neighbor nearest(const float* query) const;
  /// Up to k neighbours sorted by (distance, index).
  std::vector<Neighbor> knn(const float* query, std::size_t k) const;

private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // range into order_ for leaves
    std::int32_t left = -1, right = -1;
    std::uint32_t split_dim = 0;
    float split = 0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);
  void search(std::int32_t node, const float* q, std::vector<Neighbor>& best, std::size_t k) const;

  DescriptorMatrix points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace lmr
