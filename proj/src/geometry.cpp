#include "lmr/geometry.hpp"

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lmr {

std::vector<Correspondence> match_descriptors(const DescriptorMatrix& a, const DescriptorMatrix& b,
                                              double ratio) {
  std::vector<Correspondence> out;
  if (a.rows() == 0 || b.rows() == 0) return out;
  if (a.cols() != b.cols()) throw ValidationError("descriptor dimensions differ");

  const Eigen::MatrixXd da = a.cast<double>();
  const Eigen::MatrixXd db = b.cast<double>();
  const Eigen::VectorXd na = da.rowwise().squaredNorm();
  const Eigen::VectorXd nb = db.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * da * db.transpose();
  d2.colwise() += na;
  d2.rowwise() += nb.transpose();
  d2 = d2.cwiseMax(0.0);

  // Best match in a for every b, for the mutual check.
  std::vector<Eigen::Index> best_for_b(static_cast<std::size_t>(b.rows()));
  for (Eigen::Index j = 0; j < d2.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < d2.rows(); ++i)
      if (d2(i, j) < d2(best, j)) best = i;
    best_for_b[static_cast<std::size_t>(j)] = best;
  }

  const double ratio2 = ratio * ratio;
  for (Eigen::Index i = 0; i < d2.rows(); ++i) {
    Eigen::Index first = -1;
    double d1 = std::numeric_limits<double>::infinity();
    double d2nd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < d2.cols(); ++j) {
      const double d = d2(i, j);
      if (d < d1) {
        d2nd = d1;
        d1 = d;
        first = j;
      } else if (d < d2nd) {
        d2nd = d;
      }
    }
    if (first < 0) continue;
    const bool passes = std::isinf(d2nd) || d1 < ratio2 * d2nd;
    if (passes && best_for_b[static_cast<std::size_t>(first)] == i)
      out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(first)});
  }
  return out;
}

namespace {

std::vector<std::vector<std::uint32_t>> nearest_neighbors(const Points2d& pts, std::size_t k) {
  const auto n = static_cast<std::size_t>(pts.cols());
  std::vector<std::vector<std::uint32_t>> nn(n);
  std::vector<std::pair<double, std::uint32_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      d[j] = {(pts.col(static_cast<Eigen::Index>(i)) - pts.col(static_cast<Eigen::Index>(j))).squaredNorm(),
              static_cast<std::uint32_t>(j)};
    const std::size_t take = std::min(k + 1, n);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
    for (std::size_t t = 0; t < take; ++t)
      if (d[t].second != i && nn[i].size() < k) nn[i].push_back(d[t].second);
  }
  return nn;
}

Points2d gather(const Points2d& pts, std::span<const Correspondence> matches, bool side_a) {
  Points2d out(2, static_cast<Eigen::Index>(matches.size()));
  for (std::size_t i = 0; i < matches.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        pts.col(static_cast<Eigen::Index>(side_a ? matches[i].a : matches[i].b));
  return out;
}

bool degenerate_sample(const Points2d& p, const std::array<std::size_t, 4>& idx) {
  double scale = 0;
  for (auto i : idx) scale = std::max(scale, p.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff());
  const double tol = 1e-9 * std::max(1.0, scale * scale);
  for (int x = 0; x < 4; ++x)
    for (int y = x + 1; y < 4; ++y)
      for (int z = y + 1; z < 4; ++z) {
        const Eigen::Vector2d a = p.col(static_cast<Eigen::Index>(idx[x]));
        const Eigen::Vector2d b = p.col(static_cast<Eigen::Index>(idx[y]));
        const Eigen::Vector2d c = p.col(static_cast<Eigen::Index>(idx[z]));
        if (std::abs(cross2<double>(a, b, c)) <= tol) return true;
      }
  return false;
}

std::vector<std::size_t> inliers_of(const Eigen::Matrix3d& h, const Points2d& a, const Points2d& b,
                                    double tau) {
  std::vector<std::size_t> in;
  const Eigen::Matrix3d h_inv = h.inverse();
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    if (symmetric_transfer_error<double>(h, h_inv, a.col(i), b.col(i)) < tau)
      in.push_back(static_cast<std::size_t>(i));
  return in;
}

}  // namespace

std::vector<std::size_t> spatially_consistent(const Points2d& points_a, const Points2d& points_b,
                                              std::span<const Correspondence> matches,
                                              const GeometryConfig& config) {
  const Points2d a = gather(points_a, matches, true);
  const Points2d b = gather(points_b, matches, false);
  const auto nn_a = nearest_neighbors(a, config.prefilter_neighbors);
  const auto nn_b = nearest_neighbors(b, config.prefilter_radius);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    std::size_t support = 0;
    for (auto j : nn_a[i])
      if (std::find(nn_b[i].begin(), nn_b[i].end(), j) != nn_b[i].end()) ++support;
    if (support >= config.prefilter_support) keep.push_back(i);
  }
  return keep;
}

std::optional<HomographyEstimate> estimate_homography(const Points2d& points_a,
                                                      const Points2d& points_b,
                                                      std::span<const Correspondence> matches,
                                                      const GeometryConfig& config) {
  if (matches.size() < 4)
    throw ValidationError("homography estimation needs at least 4 correspondences, got " +
                          std::to_string(matches.size()));
  const Points2d a = gather(points_a, matches, true);
  const Points2d b = gather(points_b, matches, false);
  const double tau = config.transfer_error_px;

  std::vector<std::size_t> pool = spatially_consistent(points_a, points_b, matches, config);
  if (pool.size() < 4) {
    pool.resize(matches.size());
    std::iota(pool.begin(), pool.end(), 0);
  }

  std::mt19937_64 rng(config.ransac_seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> best_inliers;
  std::size_t needed = config.max_iterations;
  for (std::size_t iter = 0; iter < needed && iter < config.max_iterations; ++iter) {
    std::array<std::size_t, 4> s{};
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        s[k] = pool[pick(rng)];
        fresh = std::find(s.begin(), s.begin() + k, s[k]) == s.begin() + k;
      } while (!fresh);
    }
    if (degenerate_sample(a, s) || degenerate_sample(b, s)) continue;
    Eigen::Matrix<double, 2, 4> sa, sb;
    for (int k = 0; k < 4; ++k) {
      sa.col(k) = a.col(static_cast<Eigen::Index>(s[k]));
      sb.col(k) = b.col(static_cast<Eigen::Index>(s[k]));
    }
    const auto h = fit_homography_dlt(sa, sb);
    if (!h) continue;
    auto in = inliers_of(*h, a, b, tau);
    if (in.size() > best_inliers.size()) {
      best_inliers = std::move(in);
      // Adaptive stopping on the inlier ratio within the sampling pool.
      std::size_t pool_inliers = 0;
      for (auto p : pool)
        if (std::binary_search(best_inliers.begin(), best_inliers.end(), p)) ++pool_inliers;
      const double w = static_cast<double>(pool_inliers) / static_cast<double>(pool.size());
      const double p_all = std::pow(w, 4.0);
      if (p_all >= 1.0 - 1e-12) {
        needed = iter + 1;
      } else if (p_all > 0) {
        const double n = std::log(1.0 - config.confidence) / std::log(1.0 - p_all);
        needed = static_cast<std::size_t>(std::min<double>(std::ceil(n), static_cast<double>(config.max_iterations)));
      }
    }
  }
  if (best_inliers.size() < 4) return std::nullopt;

  // Refit on all inliers until the inlier set stops growing.
  std::optional<Eigen::Matrix3d> model;
  for (int round = 0; round < 5; ++round) {
    Points2d ia(2, static_cast<Eigen::Index>(best_inliers.size()));
    Points2d ib(2, static_cast<Eigen::Index>(best_inliers.size()));
    for (std::size_t k = 0; k < best_inliers.size(); ++k) {
      ia.col(static_cast<Eigen::Index>(k)) = a.col(static_cast<Eigen::Index>(best_inliers[k]));
      ib.col(static_cast<Eigen::Index>(k)) = b.col(static_cast<Eigen::Index>(best_inliers[k]));
    }
    const auto refit = fit_homography_dlt(ia, ib);
    if (!refit) break;
    auto in = inliers_of(*refit, a, b, tau);
    if (in.size() < best_inliers.size()) break;
    model = refit;
    const bool stable = in == best_inliers;
    best_inliers = std::move(in);
    if (stable) break;
  }
  if (!model || best_inliers.size() < config.min_model_inliers) return std::nullopt;

  HomographyEstimate est;
  est.homography = *model;
  est.inliers.reserve(best_inliers.size());
  for (auto i : best_inliers) est.inliers.push_back(matches[i]);
  return est;
}

std::optional<HomographyEstimate> verify_pair(const ImageRecord& a, const ImageRecord& b,
                                              const GeometryConfig& config) {
  const auto threshold = static_cast<std::size_t>(std::max(config.inlier_threshold, 4));
  if (a.feature_count() < threshold || b.feature_count() < threshold) return std::nullopt;
  const auto matches = match_descriptors(a.descriptors, b.descriptors, config.ratio_test);
  if (matches.size() < threshold) return std::nullopt;
  auto est = estimate_homography(a.positions(), b.positions(), matches, config);
  if (!est || est->inliers.size() < threshold) return std::nullopt;
  return est;
}

std::vector<RankedMatch> verify_and_rerank(const ImageRecord& query, std::vector<RankedMatch> ranked,
                                           const Dataset& dataset, const GeometryConfig& config) {
  const std::size_t depth = std::min(config.verify_depth, ranked.size());
  parallel_for(depth, [&](std::size_t i) {
    auto& m = ranked[i];
    const auto est = verify_pair(query, dataset.at(m.image_id), config);
    if (est) {
      m.verified = true;
      m.inliers = static_cast<int>(est->inliers.size());
      m.homography = est->homography;
    }
  });
  std::stable_partition(ranked.begin(), ranked.end(),
                        [](const RankedMatch& m) { return m.verified; });
  const auto verified_end =
      std::find_if(ranked.begin(), ranked.end(), [](const RankedMatch& m) { return !m.verified; });
  std::sort(ranked.begin(), verified_end, [](const RankedMatch& x, const RankedMatch& y) {
    if (x.inliers != y.inliers) return x.inliers > y.inliers;
    if (x.tfidf_score != y.tfidf_score) return x.tfidf_score > y.tfidf_score;
    return x.image_id < y.image_id;
  });
  return ranked;
}

std::optional<MatchEdge> verify_edge(const ImageRecord& x, const ImageRecord& y,
                                     const GeometryConfig& config) {
  const bool swap = y.id < x.id;
  const ImageRecord& a = swap ? y : x;
  const ImageRecord& b = swap ? x : y;
  auto est = verify_pair(a, b, config);
  if (!est) return std::nullopt;
  MatchEdge e;
  e.a = a.id;
  e.b = b.id;
  e.h_ab = est->homography;
  e.h_ba = normalize_homography(est->homography.inverse());
  e.inliers = static_cast<int>(est->inliers.size());
  e.correspondences = std::move(est->inliers);
  return e;
}

}  // namespace lmr
