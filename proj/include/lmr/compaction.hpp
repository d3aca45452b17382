#pragma once

#include "lmr/iconoid_shift.hpp"
#include "lmr/inverted_index.hpp"
#include "lmr/match_graph.hpp"
#include "lmr/vocabulary.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lmr {

enum class CompactionMethod { none, complete_link, kvq, dominating_set, fine_iconoids, random };

std::string to_string(CompactionMethod m);
/// Accepts none, complete-link, kvq, dominating-set, fine-iconoids, random.
CompactionMethod parse_compaction_method(std::string_view s);

struct CompactionConfig {
  CompactionMethod method = CompactionMethod::dominating_set;
  int threshold = 15;          // edge threshold for complete-link and dominating set
  int radius = 15;             // KVQ minimum matching score
  double fine_beta = 0.7;
  double keep_fraction = 0.5;  // random
  std::uint64_t rng_seed = 0;
};

/// Greedy set cover over items 0..n-1. `covers[u]` lists the items u covers
/// (including u). Picks the largest gain, ties to the lowest index.
std::vector<std::size_t> greedy_set_cover(std::span<const std::vector<std::size_t>> covers,
                                          std::size_t n);

std::vector<ImageId> complete_link_reduce(const ObjectCluster& cluster, const MatchingGraph& graph,
                                          int threshold);
std::vector<ImageId> kvq_reduce(const ObjectCluster& cluster, const MatchingGraph& graph, int radius);
std::vector<ImageId> dominating_set_reduce(const ObjectCluster& cluster, const MatchingGraph& graph,
                                           int threshold);
std::vector<ImageId> fine_iconoid_reduce(const ObjectCluster& cluster,
                                         std::span<const ObjectCluster> fine_clusters);
/// round(fraction * n) members (at least 1), always including the iconoid.
std::vector<ImageId> random_reduce(const ObjectCluster& cluster, double fraction, std::uint64_t seed);
/// Exactly min(count, n) members (at least 1), always including the iconoid.
std::vector<ImageId> random_reduce_count(const ObjectCluster& cluster, std::size_t count,
                                         std::uint64_t seed);

/// Kept representatives per cluster (sorted ids, iconoid always retained).
/// `fine_clusters` is required for fine-iconoids.
std::vector<std::vector<ImageId>> compact_clusters(std::span<const ObjectCluster> clusters,
                                                   const MatchingGraph& graph,
                                                   const CompactionConfig& config,
                                                   std::span<const ObjectCluster> fine_clusters = {});

/// Random reduction matching per-cluster kept counts of another method.
std::vector<std::vector<ImageId>> random_matching(std::span<const ObjectCluster> clusters,
                                                  std::span<const std::vector<ImageId>> reference,
                                                  std::uint64_t seed);

/// Checks that every dropped member has a kept member with inliers >= r.
bool covers_all(const ObjectCluster& cluster, const MatchingGraph& graph,
                std::span<const ImageId> kept, int radius);

struct ReducedIndex {
  InvertedIndex index;
  std::size_t kept = 0;        // distinct indexed images
  std::size_t original = 0;    // distinct representatives before reduction
};

ReducedIndex rebuild_reduced_index(const Dataset& database, const Vocabulary& vocabulary,
                                   std::span<const ObjectCluster> clusters,
                                   std::span<const std::vector<ImageId>> kept);

void save_kept(const std::filesystem::path& file, std::span<const ObjectCluster> clusters,
               std::span<const std::vector<ImageId>> kept);
std::vector<std::vector<ImageId>> load_kept(const std::filesystem::path& file,
                                            std::span<const ObjectCluster> clusters);

}  // namespace lmr
