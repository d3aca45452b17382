#pragma once

#include "lmr/match_graph.hpp"
#include "lmr/polygon.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lmr {

/// Denominator of the overlap fraction: the smaller of the source and target
/// area ratios, or the target ratio alone.
enum class OverlapMode { min_ratio, target_ratio };

std::string to_string(OverlapMode m);
OverlapMode parse_overlap_mode(std::string_view s);

struct IconoidShiftConfig {
  double beta = 0.9;
  std::size_t seed_count = 100;
  std::size_t max_iterations = 20;
  double exploration_floor = 0.05;
  std::size_t min_support = 5;
  OverlapMode overlap_mode = OverlapMode::min_ratio;
  std::uint64_t rng_seed = 0;
};

struct HopResult {
  double overlap = 0;
  double source_ratio = 0;
  double target_ratio = 0;
  Polygon<double> region;  // in the target frame
};

/// Propagates `region` (in the frame of path[0]) hop by hop, clipping to each
/// frame. `to_origin` maps path[0] pixels into the origin frame whose size is
/// origin_width x origin_height; the source ratio is measured there.
HopResult propagate_region(const MatchingGraph& graph, const Polygon<double>& region,
                           const Eigen::Matrix3d& to_origin, double origin_width,
                           double origin_height, std::span<const std::size_t> path,
                           OverlapMode mode = OverlapMode::min_ratio);

/// Overlap of path.front()'s frame with path.back(). Throws ValidationError
/// if consecutive path nodes are not adjacent.
double hop_overlap(const MatchingGraph& graph, std::span<const std::size_t> path,
                   OverlapMode mode = OverlapMode::min_ratio);

/// Symmetric, memoised overlap between graph nodes along shortest paths.
/// Thread-safe.
class OverlapCache {
public:
  OverlapCache(const MatchingGraph& graph, OverlapMode mode) : graph_(graph), mode_(mode) {}
  double operator()(std::size_t u, std::size_t v) const;
  const MatchingGraph& graph() const noexcept { return graph_; }

private:
  const MatchingGraph& graph_;
  OverlapMode mode_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> cache_;
};

struct Candidate {
  std::size_t node = 0;
  double overlap = 0;  // with the exploration center
};

/// Breadth-first expansion from `center`; images with overlap below the
/// floor are neither kept nor expanded. Sorted by node index.
std::vector<Candidate> explore(const OverlapCache& overlap, std::size_t center, double floor);

/// argmax_y sum_z max(0, O(y,z) - (1 - beta)); ties to the lowest node index.
std::size_t medoid_step(const OverlapCache& overlap, std::span<const Candidate> candidates,
                        double beta);
double medoid_score(const OverlapCache& overlap, std::span<const Candidate> candidates,
                    std::size_t y, double beta);

struct SupportMember {
  ImageId id;
  double overlap = 0;
};

struct ObjectCluster {
  std::string object_id;
  ImageId iconoid;
  std::vector<SupportMember> support;  // sorted by id, iconoid included
  double beta = 0.9;
  ImageId seed;
  bool below_min_size = false;

  std::size_t size() const noexcept { return support.size(); }
  bool contains(const ImageId& id) const;
};

/// Uniform random seeds without replacement (a prefix of a seeded
/// permutation of the graph's nodes).
std::vector<ImageId> draw_seeds(const MatchingGraph& graph, std::size_t count, std::uint64_t rng_seed);

/// Medoid shift over the matching graph. Convergence per start node is
/// memoised, so sweeping seed counts reuses earlier work.
class IconoidShift {
public:
  IconoidShift(const MatchingGraph& graph, IconoidShiftConfig config);

  /// Iconoid reached from `seed`.
  std::size_t converge(std::size_t seed) const;
  /// Medoid trajectory from `seed` (seed first, iconoid last).
  std::vector<std::size_t> trajectory(std::size_t seed) const;
  ObjectCluster cluster_at(std::size_t iconoid, const ImageId& seed) const;
  /// One cluster per distinct iconoid, sorted by iconoid id.
  std::vector<ObjectCluster> run(std::span<const ImageId> seeds) const;

  const OverlapCache& overlaps() const noexcept { return overlap_; }
  const IconoidShiftConfig& config() const noexcept { return config_; }

private:
  const MatchingGraph& graph_;
  IconoidShiftConfig config_;
  OverlapCache overlap_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::size_t, std::size_t> converged_;
};

std::vector<ObjectCluster> run_clustering(const MatchingGraph& graph,
                                          const IconoidShiftConfig& config,
                                          std::span<const ImageId> seeds);

struct SweepRow {
  std::size_t seed_count = 0;
  std::size_t clusters_found = 0;
  std::size_t clusters_min_size = 0;
  std::size_t images_covered = 0;
  std::size_t large_clusters = 0;  // support >= large_size
  std::size_t small_clusters = 0;  // min_support <= support < large_size
  std::map<std::string, std::size_t> per_category;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  /// First seed count at which the large/small cluster counts reach their
  /// final values; 0 for an empty report.
  std::size_t large_saturation() const;
  std::size_t small_saturation() const;
};

/// Clusters from growing prefixes of one seed permutation. `category_of`
/// maps image ids to category labels (iconoid category is used).
SweepReport seed_sweep(const MatchingGraph& graph, const IconoidShiftConfig& config,
                       std::span<const std::size_t> seed_counts,
                       const std::unordered_map<ImageId, std::string>& category_of,
                       std::size_t large_size = 10);

void save_clusters(const std::filesystem::path& file, std::span<const ObjectCluster> clusters);
std::vector<ObjectCluster> load_clusters(const std::filesystem::path& file);

}  // namespace lmr
