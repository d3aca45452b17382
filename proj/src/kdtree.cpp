#include "lmr/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace lmr {

double squared_distance(const float* a, const float* b, std::size_t dim) noexcept {
  double acc = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

KdTree::KdTree(DescriptorMatrix points, std::size_t leaf_size) : points_(std::move(points)) {
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), 0u);
  if (!order_.empty())
    build(0, static_cast<std::uint32_t>(order_.size()), std::max<std::size_t>(leaf_size, 1));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, 0, 0.f});
  if (end - begin <= leaf_size) return id;

  // Split along the dimension of largest spread.
  const auto dims = static_cast<Eigen::Index>(dim());
  std::uint32_t best_dim = 0;
  float best_spread = -1;
  for (Eigen::Index d = 0; d < dims; ++d) {
    float lo = points_(order_[begin], d), hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      const float v = points_(order_[i], d);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<std::uint32_t>(d);
    }
  }
  if (best_spread <= 0) return id;  // all points identical

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const float va = points_(a, best_dim), vb = points_(b, best_dim);
                     return va < vb || (va == vb && a < b);
                   });
  const float split = points_(order_[mid], best_dim);
  const auto left = build(begin, mid, leaf_size);
  const auto right = build(mid, end, leaf_size);
  auto& node = nodes_[static_cast<std::size_t>(id)];
  node.left = left;
  node.right = right;
  node.split_dim = best_dim;
  node.split = split;
  return id;
}

namespace {

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

}  // namespace

void KdTree::search(std::int32_t node_id, const float* q, std::vector<Neighbor>& best,
                    std::size_t k) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      Neighbor cand{idx, squared_distance(q, points_.row(idx).data(), dim())};
      if (best.size() < k) {
        best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
      } else if (closer(cand, best.back())) {
        best.pop_back();
        best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
      }
    }
    return;
  }
  const double diff = static_cast<double>(q[node.split_dim]) - static_cast<double>(node.split);
  const auto near = diff < 0 ? node.left : node.right;
  const auto far = diff < 0 ? node.right : node.left;
  search(near, q, best, k);
  // Visit the far side on equality too, so equal-distance points with lower
  // indices are never missed.
  if (best.size() < k || diff * diff <= best.back().squared_distance) search(far, q, best, k);
}

KdTree::Neighbor KdTree::nearest(const float* query) const {
  std::vector<Neighbor> best;
  best.reserve(2);
  search(0, query, best, 1);
  return best.front();
}

std::vector<KdTree::Neighbor> KdTree::knn(const float* query, std::size_t k) const {
  std::vector<Neighbor> best;
  if (k == 0 || nodes_.empty()) return best;
  best.reserve(k + 1);
  search(0, query, best, k);
  return best;
}

}  // namespace lmr
