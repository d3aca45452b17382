#pragma once

#include "lmr/geometry.hpp"
#include "lmr/inverted_index.hpp"
#include "lmr/types.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace lmr {

struct GraphNode {
  ImageId id;
  int width = 0;
  int height = 0;
};

/// Undirected matching graph. Nodes are kept in ascending id order, so node
/// indices compare like ids. Immutable after construction.
class MatchingGraph {
public:
  struct Adjacent {
    std::uint32_t node = 0;
    std::uint32_t edge = 0;
  };

  MatchingGraph() = default;
  /// Validates ids, endpoints and edge orientation (a < b, no self loops,
  /// no duplicates, inliers >= build_threshold).
  MatchingGraph(std::vector<GraphNode> nodes, std::vector<MatchEdge> edges, int build_threshold);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
  const std::vector<MatchEdge>& edges() const noexcept { return edges_; }
  int build_threshold() const noexcept { return build_threshold_; }

  std::optional<std::size_t> node_index(const ImageId& id) const;
  std::size_t require(const ImageId& id) const;
  /// Neighbours sorted by node index.
  std::span<const Adjacent> neighbors(std::size_t node) const { return adjacency_.at(node); }
  std::size_t degree(std::size_t node) const { return adjacency_.at(node).size(); }
  const MatchEdge* edge(std::size_t u, std::size_t v) const;
  /// Inlier count of edge (u, v), 0 when absent.
  int inliers(std::size_t u, std::size_t v) const;
  /// Homography mapping pixels of u into v. Requires the edge to exist.
  const Eigen::Matrix3d& homography(std::size_t u, std::size_t v) const;
  /// Connected components as sorted id lists, ordered by first id.
  std::vector<std::vector<ImageId>> components() const;

private:
  std::vector<GraphNode> nodes_;
  std::vector<MatchEdge> edges_;
  std::vector<std::vector<Adjacent>> adjacency_;
  std::unordered_map<ImageId, std::size_t> lookup_;
  int build_threshold_ = 0;
};

/// Queries the index with every image, verifies the top `retrieval_depth`
/// results and keeps verified pairs. Each unordered pair is verified once, in
/// id order, so the edge set does not depend on processing order.
/// `bovw` is aligned with dataset.images.
MatchingGraph build_graph(const Dataset& dataset, const InvertedIndex& index,
                          std::span<const WeightedBovw> bovw, const GeometryConfig& config,
                          std::size_t retrieval_depth);

/// Subgraph keeping edges with inliers >= min_inliers; all nodes retained.
MatchingGraph prune_edges(const MatchingGraph& graph, int min_inliers);

/// Node sequence from a to b (inclusive) with the fewest hops; ties go to the
/// path with the largest minimum edge inlier count, then to the
/// lexicographically smallest node sequence. `allowed`, when given,
/// restricts intermediate and end nodes.
std::optional<std::vector<std::size_t>> shortest_path(
    const MatchingGraph& graph, std::size_t a, std::size_t b,
    const std::function<bool(std::size_t)>& allowed = {});

inline constexpr int kGraphVersion = 1;
void save_graph(const std::filesystem::path& file, const MatchingGraph& graph);
MatchingGraph load_graph(const std::filesystem::path& file);

}  // namespace lmr
