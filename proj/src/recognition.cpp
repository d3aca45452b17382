#include "lmr/recognition.hpp"

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace lmr {

std::string to_string(ScoringMethod m) {
  switch (m) {
    case ScoringMethod::center: return "center";
    case ScoringMethod::size: return "size";
    case ScoringMethod::voting: return "voting";
    case ScoringMethod::best_match: return "best-match";
    case ScoringMethod::overlap: return "overlap";
  }
  return "voting";
}

ScoringMethod parse_method(std::string_view s) {
  for (auto m : kAllMethods)
    if (to_string(m) == s) return m;
  throw ValidationError("unknown scoring method '" + std::string(s) +
                        "' (expected center, size, voting, best-match or overlap)");
}

ClusterSet::ClusterSet(std::vector<ObjectCluster> clusters,
                       std::vector<std::vector<ImageId>> representatives)
    : clusters_(std::move(clusters)) {
  if (!representatives.empty() && representatives.size() != clusters_.size())
    throw ValidationError("one representative list per cluster required");
  reps_.resize(clusters_.size());
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    if (!by_object_.emplace(clusters_[c].object_id, c).second)
      throw ValidationError("duplicate object id '" + clusters_[c].object_id + "'");
    if (representatives.empty()) {
      for (const auto& m : clusters_[c].support) reps_[c].push_back(m.id);
    } else {
      reps_[c] = std::move(representatives[c]);
      std::sort(reps_[c].begin(), reps_[c].end());
      reps_[c].erase(std::unique(reps_[c].begin(), reps_[c].end()), reps_[c].end());
    }
    for (const auto& r : reps_[c]) member_of_[r].push_back(c);
  }
}

std::span<const std::size_t> ClusterSet::memberships(const ImageId& image) const {
  auto it = member_of_.find(image);
  if (it == member_of_.end()) return {};
  return it->second;
}

std::optional<std::size_t> ClusterSet::find(const std::string& object_id) const {
  auto it = by_object_.find(object_id);
  if (it == by_object_.end()) return std::nullopt;
  return it->second;
}

std::vector<ImageId> ClusterSet::all_representatives() const {
  std::set<ImageId> all;
  for (const auto& r : reps_) all.insert(r.begin(), r.end());
  return {all.begin(), all.end()};
}

std::vector<ImageId> ClusterSet::iconoids() const {
  std::set<ImageId> all;
  for (const auto& c : clusters_) all.insert(c.iconoid);
  return {all.begin(), all.end()};
}

namespace {

struct Tally {
  std::size_t cluster = 0;
  double score = 0;
  std::size_t best_rank = 0;  // position of the best contributing match
  bool verified = true;
};

std::vector<ObjectScore> finish(std::vector<Tally> tallies, const ClusterSet& clusters,
                                ScoringMethod method, std::size_t k,
                                bool larger_cluster_tiebreak) {
  std::sort(tallies.begin(), tallies.end(), [&](const Tally& x, const Tally& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.best_rank != y.best_rank) return x.best_rank < y.best_rank;
    const auto sx = clusters.clusters()[x.cluster].size(), sy = clusters.clusters()[y.cluster].size();
    if (larger_cluster_tiebreak && sx != sy) return sx > sy;
    return clusters.clusters()[x.cluster].object_id < clusters.clusters()[y.cluster].object_id;
  });
  std::vector<ObjectScore> out;
  for (const auto& t : tallies) {
    if (out.size() == k) break;
    out.push_back({clusters.clusters()[t.cluster].object_id, method, t.score, out.size() + 1, t.verified});
  }
  return out;
}

/// Memberships ordered largest cluster first, then object id.
std::vector<std::size_t> by_size(std::span<const std::size_t> members, const ClusterSet& clusters) {
  std::vector<std::size_t> m(members.begin(), members.end());
  std::sort(m.begin(), m.end(), [&](std::size_t x, std::size_t y) {
    const auto sx = clusters.clusters()[x].size(), sy = clusters.clusters()[y].size();
    if (sx != sy) return sx > sy;
    return clusters.clusters()[x].object_id < clusters.clusters()[y].object_id;
  });
  return m;
}

}  // namespace

std::vector<ObjectScore> score_center(std::span<const RankedMatch> iconoid_ranking,
                                      const ClusterSet& clusters, std::size_t k) {
  std::vector<ObjectScore> out;
  std::set<std::size_t> seen;
  for (const auto& m : iconoid_ranking) {
    if (!m.verified) break;  // verified matches precede unverified ones
    for (std::size_t c = 0; c < clusters.clusters().size(); ++c) {
      if (clusters.clusters()[c].iconoid != m.image_id || !seen.insert(c).second) continue;
      if (out.size() == k) return out;
      out.push_back({clusters.clusters()[c].object_id, ScoringMethod::center,
                     static_cast<double>(m.inliers), out.size() + 1, true});
    }
  }
  return out;
}

std::vector<ObjectScore> score_size(std::span<const RankedMatch> ranking, const ClusterSet& clusters,
                                    std::size_t k) {
  std::map<std::size_t, Tally> tallies;
  for (std::size_t r = 0; r < ranking.size() && ranking[r].verified; ++r)
    for (auto c : clusters.memberships(ranking[r].image_id))
      tallies.emplace(c, Tally{c, static_cast<double>(clusters.clusters()[c].size()), r, true});
  std::vector<Tally> list;
  for (auto& [c, t] : tallies) list.push_back(t);
  return finish(std::move(list), clusters, ScoringMethod::size, k, false);
}

std::vector<ObjectScore> score_voting(std::span<const RankedMatch> ranking, const ClusterSet& clusters,
                                      std::size_t k) {
  std::map<std::size_t, Tally> tallies;
  for (std::size_t r = 0; r < ranking.size() && ranking[r].verified; ++r)
    for (auto c : clusters.memberships(ranking[r].image_id)) {
      auto [it, fresh] = tallies.emplace(c, Tally{c, 0.0, r, true});
      it->second.score += 1;
    }
  if (tallies.empty()) {
    // No verified match: the top unverified match votes once for each object.
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      const auto members = clusters.memberships(ranking[r].image_id);
      if (members.empty()) continue;
      for (auto c : members) tallies.emplace(c, Tally{c, 1.0, r, false});
      break;
    }
  }
  std::vector<Tally> list;
  for (auto& [c, t] : tallies) list.push_back(t);
  return finish(std::move(list), clusters, ScoringMethod::voting, k, true);
}

std::vector<ObjectScore> score_best_match(std::span<const RankedMatch> ranking,
                                          const ClusterSet& clusters, std::size_t k) {
  std::vector<ObjectScore> out;
  std::set<std::size_t> seen;
  for (const auto& m : ranking) {
    for (auto c : by_size(clusters.memberships(m.image_id), clusters)) {
      if (out.size() == k) return out;
      if (!seen.insert(c).second) continue;
      out.push_back({clusters.clusters()[c].object_id, ScoringMethod::best_match,
                     m.verified ? static_cast<double>(m.inliers) : m.tfidf_score, out.size() + 1,
                     m.verified});
    }
  }
  return out;
}

std::vector<ObjectScore> score_overlap(const ImageRecord& query, std::span<const RankedMatch> ranking,
                                       const ClusterSet& clusters, const MatchingGraph& graph,
                                       std::size_t k, OverlapMode mode) {
  std::map<std::size_t, Tally> tallies;
  const Polygon<double> frame = rectangle_polygon<double>(query.width, query.height);
  for (std::size_t r = 0; r < ranking.size() && ranking[r].verified; ++r) {
    const auto& m = ranking[r];
    const auto members = clusters.memberships(m.image_id);
    if (members.empty() || !m.homography) continue;
    const auto rep = graph.node_index(m.image_id);
    for (auto c : members) {
      auto [it, fresh] = tallies.emplace(c, Tally{c, 0.0, r, true});
      const auto& cluster = clusters.clusters()[c];
      const auto iconoid = graph.node_index(cluster.iconoid);
      if (!rep || !iconoid) continue;
      const auto path = shortest_path(graph, *rep, *iconoid, [&](std::size_t v) {
        return cluster.contains(graph.nodes()[v].id);
      });
      if (!path) continue;
      const Eigen::Matrix3d& h = *m.homography;
      const auto region = map_polygon<double>(h, frame);
      const auto hop = propagate_region(graph, region, normalize_homography(h.inverse()),
                                        query.width, query.height, *path, mode);
      it->second.score = std::max(it->second.score, hop.overlap);
    }
  }
  std::vector<Tally> list;
  for (auto& [c, t] : tallies) list.push_back(t);
  return finish(std::move(list), clusters, ScoringMethod::overlap, k, false);
}

InvertedIndex index_images(const Dataset& database, const Vocabulary& vocabulary,
                           std::span<const ImageId> ids) {
  WordCorpus corpus;
  corpus.ids.assign(ids.begin(), ids.end());
  corpus.words.resize(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    corpus.words[i] = vocabulary.quantize(database.at(ids[i]).descriptors);
  });
  return index_corpus(corpus, vocabulary.size());
}

RecognitionEngine::RecognitionEngine(const Dataset& database, const Vocabulary& vocabulary,
                                     const MatchingGraph& graph, std::vector<ObjectCluster> clusters,
                                     RecognitionConfig config,
                                     std::vector<std::vector<ImageId>> representatives)
    : database_(database), vocabulary_(vocabulary), graph_(graph), config_(config) {
  if (!config_.include_small_clusters) {
    std::vector<ObjectCluster> kept;
    std::vector<std::vector<ImageId>> kept_reps;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].below_min_size) continue;
      kept.push_back(std::move(clusters[c]));
      if (!representatives.empty()) kept_reps.push_back(std::move(representatives[c]));
    }
    clusters = std::move(kept);
    representatives = std::move(kept_reps);
  }
  clusters_ = ClusterSet(std::move(clusters), std::move(representatives));
  const auto reps = clusters_.all_representatives();
  rep_index_ = index_images(database_, vocabulary_, reps);
  const auto iconoids = clusters_.iconoids();
  iconoid_index_ = index_images(database_, vocabulary_, iconoids);
}

std::vector<RankedMatch> RecognitionEngine::rank(const InvertedIndex& index,
                                                 const ImageRecord& query) const {
  if (index.size() == 0) return {};
  const auto words = vocabulary_.quantize(query.descriptors);
  const auto bovw = build_bovw(words, index.idf());
  auto ranked = index.query(bovw, config_.geometry.verify_depth);
  return verify_and_rerank(query, std::move(ranked), database_, config_.geometry);
}

std::vector<RankedMatch> RecognitionEngine::rank_representatives(const ImageRecord& query) const {
  return rank(rep_index_, query);
}

std::vector<RankedMatch> RecognitionEngine::rank_iconoids(const ImageRecord& query) const {
  return rank(iconoid_index_, query);
}

std::vector<ObjectScore> RecognitionEngine::recognize(const ImageRecord& query,
                                                      ScoringMethod method) const {
  return recognize(query, method, config_.top_k);
}

std::vector<ObjectScore> RecognitionEngine::recognize(const ImageRecord& query, ScoringMethod method,
                                                      std::size_t k) const {
  switch (method) {
    case ScoringMethod::center: return score_center(rank_iconoids(query), clusters_, k);
    case ScoringMethod::size: return score_size(rank_representatives(query), clusters_, k);
    case ScoringMethod::voting: return score_voting(rank_representatives(query), clusters_, k);
    case ScoringMethod::best_match: return score_best_match(rank_representatives(query), clusters_, k);
    case ScoringMethod::overlap:
      return score_overlap(query, rank_representatives(query), clusters_, graph_, k,
                           config_.overlap_mode);
  }
  throw ValidationError("unknown scoring method");
}

}  // namespace lmr
