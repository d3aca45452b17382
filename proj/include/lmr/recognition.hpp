#pragma once

#include "lmr/geometry.hpp"
#include "lmr/iconoid_shift.hpp"
#include "lmr/inverted_index.hpp"
#include "lmr/match_graph.hpp"
#include "lmr/vocabulary.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lmr {

enum class ScoringMethod { center, size, voting, best_match, overlap };

std::string to_string(ScoringMethod m);
/// Accepts center, size, voting, best-match, overlap.
ScoringMethod parse_method(std::string_view s);
inline constexpr ScoringMethod kAllMethods[] = {ScoringMethod::center, ScoringMethod::size,
                                                ScoringMethod::voting, ScoringMethod::best_match,
                                                ScoringMethod::overlap};

struct ObjectScore {
  std::string object_id;
  ScoringMethod method = ScoringMethod::voting;
  double score = 0;
  std::size_t rank = 0;   // 1-based
  bool verified = true;   // false when produced by an unverified fallback
};

struct RecognitionConfig {
  GeometryConfig geometry;
  std::size_t top_k = 3;
  OverlapMode overlap_mode = OverlapMode::min_ratio;
  bool include_small_clusters = false;
};

/// Clusters, their indexed representatives and the reverse membership map.
class ClusterSet {
public:
  ClusterSet() = default;
  /// `representatives[i]` are the indexed members of clusters[i]; empty span
  /// means the full support.
  ClusterSet(std::vector<ObjectCluster> clusters,
             std::vector<std::vector<ImageId>> representatives = {});

  const std::vector<ObjectCluster>& clusters() const noexcept { return clusters_; }
  const std::vector<ImageId>& representatives(std::size_t c) const { return reps_.at(c); }
  /// Clusters listing `image` as a representative, sorted by index.
  std::span<const std::size_t> memberships(const ImageId& image) const;
  std::optional<std::size_t> find(const std::string& object_id) const;
  /// Union of representatives, sorted.
  std::vector<ImageId> all_representatives() const;
  std::vector<ImageId> iconoids() const;

private:
  std::vector<ObjectCluster> clusters_;
  std::vector<std::vector<ImageId>> reps_;
  std::unordered_map<ImageId, std::vector<std::size_t>> member_of_;
  std::unordered_map<std::string, std::size_t> by_object_;
};

std::vector<ObjectScore> score_center(std::span<const RankedMatch> iconoid_ranking,
                                      const ClusterSet& clusters, std::size_t k);
std::vector<ObjectScore> score_size(std::span<const RankedMatch> ranking, const ClusterSet& clusters,
                                    std::size_t k);
std::vector<ObjectScore> score_voting(std::span<const RankedMatch> ranking, const ClusterSet& clusters,
                                      std::size_t k);
std::vector<ObjectScore> score_best_match(std::span<const RankedMatch> ranking,
                                          const ClusterSet& clusters, std::size_t k);
std::vector<ObjectScore> score_overlap(const ImageRecord& query, std::span<const RankedMatch> ranking,
                                       const ClusterSet& clusters, const MatchingGraph& graph,
                                       std::size_t k, OverlapMode mode = OverlapMode::min_ratio);

/// Immutable recognition state: a representative index, an iconoid-only
/// index, the clusters and the matching graph. Concurrent queries are safe.
class RecognitionEngine {
public:
  RecognitionEngine(const Dataset& database, const Vocabulary& vocabulary, const MatchingGraph& graph,
                    std::vector<ObjectCluster> clusters, RecognitionConfig config,
                    std::vector<std::vector<ImageId>> representatives = {});

  std::vector<ObjectScore> recognize(const ImageRecord& query, ScoringMethod method) const;
  std::vector<ObjectScore> recognize(const ImageRecord& query, ScoringMethod method, std::size_t k) const;
  /// Verified re-ranking of the query against all representatives.
  std::vector<RankedMatch> rank_representatives(const ImageRecord& query) const;
  std::vector<RankedMatch> rank_iconoids(const ImageRecord& query) const;

  const ClusterSet& clusters() const noexcept { return clusters_; }
  const InvertedIndex& representative_index() const noexcept { return rep_index_; }
  const RecognitionConfig& config() const noexcept { return config_; }
  const MatchingGraph& graph() const noexcept { return graph_; }

private:
  std::vector<RankedMatch> rank(const InvertedIndex& index, const ImageRecord& query) const;

  const Dataset& database_;
  const Vocabulary& vocabulary_;
  const MatchingGraph& graph_;
  RecognitionConfig config_;
  ClusterSet clusters_;
  InvertedIndex rep_index_;
  InvertedIndex iconoid_index_;
};

/// Index over the given images of `database`, idf computed over that subset.
InvertedIndex index_images(const Dataset& database, const Vocabulary& vocabulary,
                           std::span<const ImageId> ids);

}  // namespace lmr
