#pragma once

#include "lmr/geometry.hpp"
#include "lmr/recognition.hpp"
#include "lmr/synth.hpp"
#include "lmr/tags.hpp"
#include "lmr/vocabulary.hpp"

#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lmr {

struct QueryGroup {
  std::string group_id;
  std::vector<ImageId> members;  // sorted
  ImageId representative;        // smallest member id
};

struct GroupingConfig {
  int min_inliers = 40;
  double min_overlap = 0.95;
  std::size_t retrieval_depth = 10;
};

/// Exact-view grouping: queries linked when they verify with at least
/// min_inliers inliers and overlap >= min_overlap; groups are the connected
/// components.
std::vector<QueryGroup> group_queries(const Dataset& queries, const Vocabulary& vocabulary,
                                      const GeometryConfig& geometry, const GroupingConfig& config);

/// Objects with at least one representative verified for at least one
/// member of the group.
std::set<std::string> candidate_filter(const QueryGroup& group, const Dataset& queries,
                                       const RecognitionEngine& engine);

struct Metrics {
  std::size_t query_count = 0;
  double good1 = 0, ok1 = 0, good3 = 0, ok3 = 0;  // percentages
};

struct MetricCounts {
  std::size_t queries = 0, good1 = 0, ok1 = 0, good3 = 0, ok3 = 0;
  void add(std::span<const Rating> top);
  Metrics metrics() const;
};

struct MetricReport {
  Metrics overall;
  std::map<std::string, Metrics> per_category;
};

/// Ratings of a query's returned objects, in rank order.
struct QueryOutcome {
  ImageId query_id;
  std::string category;
  std::vector<Rating> ratings;
};

MetricReport aggregate(std::span<const QueryOutcome> outcomes);
/// ok-1 >= good-1, good-3 >= good-1, ok-3 >= ok-1, ok-3 >= good-3.
bool monotone(const Metrics& m);

using Rater = std::function<Rating(const ImageId& query, const std::string& object_id)>;

/// Ratings from ground truth: a cluster stands for its iconoid's object.
Rater truth_rater(const GroundTruth& truth, std::span<const ObjectCluster> clusters);

/// Ratings from annotations keyed by cluster object id, or by ground-truth
/// object id through `aliases` (cluster -> object). Objects outside
/// `candidates` (when given) are rated bad. Unannotated pairs throw.
Rater annotation_rater(std::span<const RelevanceAnnotation> annotations,
                       std::map<std::string, std::string> aliases = {},
                       std::function<bool(const ImageId&, const std::string&)> candidate = {});

/// cluster object id -> ground-truth object of its iconoid.
std::map<std::string, std::string> cluster_aliases(std::span<const ObjectCluster> clusters,
                                                   const GroundTruth& truth);

struct QueryResult {
  ImageId query_id;
  std::string category;
  std::vector<ObjectScore> objects;
};

std::string category_of(const ImageRecord& query);

/// Runs one method over every query.
std::vector<QueryResult> recognize_all(const Dataset& queries, const RecognitionEngine& engine,
                                       ScoringMethod method);
/// All methods, sharing one verified ranking per query.
std::map<ScoringMethod, std::vector<QueryResult>> recognize_all_methods(const Dataset& queries,
                                                                        const RecognitionEngine& engine);

MetricReport evaluate_recognition(std::span<const QueryResult> results, const Rater& rate);

/// Rates the top tag of each returned object: good if it is one of the
/// query object's accepted names, ok if it names an ok-related object.
MetricReport evaluate_semantics(std::span<const QueryResult> results,
                                std::span<const ClusterNames> names, const GroundTruth& truth);

struct EndToEndReport {
  MetricReport recognition;
  MetricReport semantics;
  std::map<std::string, double> gap;  // recognition good-1 minus semantic good-1
  double overall_gap = 0;
};

EndToEndReport combine(MetricReport recognition, MetricReport semantics);

}  // namespace lmr
