#pragma once

#include "lmr/homography.hpp"
#include "lmr/inverted_index.hpp"
#include "lmr/types.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace lmr {

struct GeometryConfig {
  double ratio_test = 0.8;
  int inlier_threshold = 15;   // verified iff inliers >= this
  std::size_t verify_depth = 300;
  std::uint64_t ransac_seed = 0;
  double transfer_error_px = 4.0;
  double confidence = 0.99;
  std::size_t max_iterations = 2000;
  std::size_t min_model_inliers = 4;  // estimate_homography reports no model below this
  // Spatial-consistency pre-filter used to draw RANSAC samples: a
  // correspondence survives if at least `prefilter_support` of its
  // `prefilter_neighbors` nearest neighbours in the first image map into
  // the `prefilter_radius` nearest neighbours of its partner.
  std::size_t prefilter_neighbors = 10;
  std::size_t prefilter_support = 3;
  std::size_t prefilter_radius = 10;
};

struct Correspondence {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  friend bool operator==(const Correspondence&, const Correspondence&) = default;
  friend auto operator<=>(const Correspondence&, const Correspondence&) = default;
};

/// Ratio-test matches from a to b, made one-to-one by mutual-best filtering.
std::vector<Correspondence> match_descriptors(const DescriptorMatrix& a,
                                              const DescriptorMatrix& b, double ratio);

struct HomographyEstimate {
  Eigen::Matrix3d homography;  // maps a -> b, normalised
  std::vector<Correspondence> inliers;
};

/// Indices of correspondences passing the spatial-consistency check.
std::vector<std::size_t> spatially_consistent(const Points2d& points_a, const Points2d& points_b,
                                              std::span<const Correspondence> matches,
                                              const GeometryConfig& config);

/// RANSAC over 4-point DLT samples scored by symmetric transfer error, with a
/// final DLT refit on all inliers. Throws ValidationError for fewer than 4
/// correspondences; nullopt when the best model has too few inliers.
std::optional<HomographyEstimate> estimate_homography(const Points2d& points_a,
                                                      const Points2d& points_b,
                                                      std::span<const Correspondence> matches,
                                                      const GeometryConfig& config);

/// Matches two images and fits a homography; nullopt unless verified.
std::optional<HomographyEstimate> verify_pair(const ImageRecord& a, const ImageRecord& b,
                                              const GeometryConfig& config);

/// Verifies the first verify_depth matches against the query, then orders
/// verified matches (inliers desc, tf-idf desc, id asc) before unverified ones
/// (original tf-idf order).
std::vector<RankedMatch> verify_and_rerank(const ImageRecord& query,
                                           std::vector<RankedMatch> ranked,
                                           const Dataset& dataset, const GeometryConfig& config);

/// A verified image pair. a < b by image id; h_ab maps a -> b.
struct MatchEdge {
  ImageId a;
  ImageId b;
  Eigen::Matrix3d h_ab;
  Eigen::Matrix3d h_ba;
  int inliers = 0;
  std::vector<Correspondence> correspondences;
};

/// Verifies an unordered pair in canonical (id-ascending) direction.
std::optional<MatchEdge> verify_edge(const ImageRecord& x, const ImageRecord& y,
                                     const GeometryConfig& config);

}  // namespace lmr
