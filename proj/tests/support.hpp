// Shared oracles and fixtures for the unit tests and the acceptance runner.
#pragma once

#include "lmr/match_graph.hpp"
#include "lmr/pipeline.hpp"
#include "lmr/synth.hpp"
#include "lmr/vocabulary.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace lmr::test {

// --- polygon oracle, written independently of polygon.hpp ---------------

using Poly = std::vector<Eigen::Vector2d>;

inline double shoelace(const Poly& p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& u = p[i];
    const auto& v = p[(i + 1) % p.size()];
    a += u.x() * v.y() - v.x() * u.y();
  }
  return std::abs(a) / 2;
}

inline Poly frame(double w, double h) { return {{0, 0}, {w, 0}, {w, h}, {0, h}}; }

inline Poly transform(const Eigen::Matrix3d& h, const Poly& p) {
  Poly out;
  for (const auto& q : p) out.push_back((h * q.homogeneous()).hnormalized());
  return out;
}

/// Sutherland-Hodgman against a convex clip polygon of either orientation.
inline Poly intersect(const Poly& subject, const Poly& clip) {
  double orient = 0;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    const auto& u = clip[i];
    const auto& v = clip[(i + 1) % clip.size()];
    orient += u.x() * v.y() - v.x() * u.y();
  }
  const double sign = orient >= 0 ? 1.0 : -1.0;
  Poly out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const auto a = clip[i];
    const auto b = clip[(i + 1) % clip.size()];
    auto side = [&](const Eigen::Vector2d& p) {
      return sign * ((b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()));
    };
    Poly in = std::move(out);
    out.clear();
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto& p = in[k];
      const auto& q = in[(k + 1) % in.size()];
      const double sp = side(p), sq = side(q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
    }
  }
  return out;
}

/// Overlap of a chain of views of one plane: the intersection of all frames
/// in plane coordinates, measured against the first and last frames.
inline double chain_overlap_oracle(const std::vector<Eigen::Matrix3d>& plane_to_image,
                                   const std::vector<Eigen::Vector2d>& sizes) {
  Poly region = transform(plane_to_image.front().inverse(), frame(sizes.front().x(), sizes.front().y()));
  for (std::size_t i = 1; i < plane_to_image.size(); ++i)
    region = intersect(region, transform(plane_to_image[i].inverse(), frame(sizes[i].x(), sizes[i].y())));
  if (region.size() < 3) return 0;
  const double src = shoelace(transform(plane_to_image.front(), region)) / (sizes.front().x() * sizes.front().y());
  const double dst = shoelace(transform(plane_to_image.back(), region)) / (sizes.back().x() * sizes.back().y());
  return std::min(src, dst);
}

// --- retrieval oracle ----------------------------------------------------

struct Scored {
  ImageId id;
  double score;
};

/// Cosine ranking by full scan, descending score then ascending id.
inline std::vector<Scored> brute_force_ranking(const std::vector<ImageId>& ids,
                                               const std::vector<WeightedBovw>& docs,
                                               const WeightedBovw& query, std::size_t k) {
  std::vector<Scored> all;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const double dn = docs[i].norm(), qn = query.norm();
    if (dn == 0 || qn == 0) continue;
    const double dot = docs[i].dot(query);
    bool shares = false;
    for (WeightedBovw::InnerIterator it(query); it; ++it)
      if (it.value() != 0 && docs[i].coeff(it.index()) != 0) shares = true;
    if (!shares) continue;
    all.push_back({ids[i], dot / (dn * qn)});
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// --- graphs ----------------------------------------------------------------

/// Graph over n 100x100 nodes "n00".."nNN" with identity homographies.
inline MatchingGraph weighted_graph(std::size_t n, const std::vector<std::tuple<int, int, int>>& edges,
                                    int threshold = 15) {
  std::vector<GraphNode> nodes;
  auto name = [](std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "n%03zu", i);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < n; ++i) nodes.push_back({name(i), 100, 100});
  std::vector<MatchEdge> es;
  for (auto [a, b, w] : edges) {
    if (a > b) std::swap(a, b);
    MatchEdge e;
    e.a = name(static_cast<std::size_t>(a));
    e.b = name(static_cast<std::size_t>(b));
    e.h_ab = e.h_ba = Eigen::Matrix3d::Identity() / std::sqrt(3.0);
    e.inliers = w;
    es.push_back(e);
  }
  return MatchingGraph(std::move(nodes), std::move(es), threshold);
}

inline ObjectCluster whole_cluster(const MatchingGraph& g, std::size_t iconoid = 0) {
  ObjectCluster c;
  c.iconoid = g.nodes()[iconoid].id;
  c.object_id = "c_" + c.iconoid;
  for (const auto& n : g.nodes()) c.support.push_back({n.id, 1.0});
  return c;
}

// --- generator fixtures ------------------------------------------------------

inline NoiseConfig clean_noise() {
  NoiseConfig n;
  n.descriptor_sigma = 0;
  n.position_sigma = 0;
  n.dropout = 0;
  n.distractors = 0;
  return n;
}

inline GroupConfig group(Archetype a, int count, int views, int queries, std::string category,
                         int features = 200) {
  GroupConfig g;
  g.archetype = a;
  g.count = count;
  g.views = views;
  g.queries = queries;
  g.category = std::move(category);
  g.features = features;
  return g;
}

inline PipelineConfig small_pipeline(std::uint64_t seed = 1) {
  PipelineConfig c;
  c.generator_seed = seed;
  c.vocabulary_size = 256;
  c.vocabulary_sample = 20000;
  c.vocabulary_seed = seed + 1;
  c.geometry.verify_depth = 60;
  c.geometry.ransac_seed = seed + 2;
  c.ransac_seed_set = true;
  c.retrieval_depth = 20;
  c.clustering.rng_seed = seed + 3;
  c.clustering.seed_count = 60;
  c.clustering_seed_set = true;
  c.compaction.rng_seed = seed + 4;
  c.compaction_seed_set = true;
  c.tags.min_cluster_size = 5;
  c.group_queries = false;
  return c;
}

inline Experiment experiment_from(const GeneratorConfig& gen, const PipelineConfig& config) {
  auto data = generate_dataset(gen, config.generator_seed.value_or(0));
  return build_experiment(std::move(data.database), std::move(data.queries), std::move(data.truth), config);
}

/// Jaccard index of two sorted id lists.
inline double jaccard(const std::vector<ImageId>& a, const std::vector<ImageId>& b) {
  std::vector<ImageId> i, u;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(i));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(u));
  return u.empty() ? 1.0 : static_cast<double>(i.size()) / static_cast<double>(u.size());
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lmr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lmr::test
