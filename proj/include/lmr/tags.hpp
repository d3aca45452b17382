#pragma once

#include "lmr/iconoid_shift.hpp"
#include "lmr/types.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lmr {

/// {paris, france, europe, vacation, photo, canon}
std::vector<std::string> default_stoplist();
/// One term per line; blank lines and lines starting with '#' ignored.
std::vector<std::string> load_stoplist(const std::filesystem::path& file);

struct TagMiningConfig {
  std::vector<std::string> stoplist = default_stoplist();
  std::size_t min_cluster_size = 6;
  std::size_t top_k = 3;
};

/// Lowercased, trimmed form used for all tag comparisons.
std::string normalize_tag(std::string_view tag);
/// Camera file names (letters + digits + image extension) or pure digits.
bool is_camera_filename(std::string_view normalized_tag);
/// Tags plus the title, normalised, with stoplist terms and file names removed.
std::vector<std::string> preprocess_tags(const ImageRecord& image, const TagMiningConfig& config);

struct TagCount {
  std::size_t users = 0;        // distinct owners
  std::size_t occurrences = 0;  // raw uses
};

struct TagStats {
  std::vector<std::map<std::string, TagCount>> per_cluster;  // U(c,t), aligned with clusters
  std::map<std::string, TagCount> global;                    // U(t) over the whole dataset
  std::vector<std::size_t> cluster_users;                    // distinct owners per cluster
};

TagStats compute_tag_stats(std::span<const ObjectCluster> clusters, const Dataset& dataset,
                           const TagMiningConfig& config);

/// score(c,t) = U(c,t)^2 / U(t): the cluster's share of the tag's users times
/// the tag's user count inside the cluster.
double tag_score(std::size_t users_in_cluster, std::size_t users_total);

struct TagScore {
  std::string cluster;
  std::string tag;
  double score = 0;
  std::size_t distinct_users = 0;
  std::size_t occurrences = 0;
};

/// All tags of cluster c, score descending, ties by tag.
std::vector<TagScore> score_tags(std::size_t cluster, std::span<const ObjectCluster> clusters,
                                 const TagStats& stats);

struct ClusterNames {
  std::string cluster;
  std::size_t size = 0;
  std::size_t distinct_users = 0;
  std::vector<TagScore> top;
};

/// Top-k tags for every cluster with at least min_cluster_size members.
std::vector<ClusterNames> name_clusters(std::span<const ObjectCluster> clusters, const Dataset& dataset,
                                        const TagMiningConfig& config);

/// cluster,rank,tag,score,distinct_users
void save_tags_csv(const std::filesystem::path& file, std::span<const ClusterNames> names);
std::vector<ClusterNames> load_tags_csv(const std::filesystem::path& file);

}  // namespace lmr
