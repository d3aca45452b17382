#include "lmr/iconoid_shift.hpp"

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace lmr {

using json = nlohmann::json;

std::string to_string(OverlapMode m) { return m == OverlapMode::min_ratio ? "min" : "target"; }

OverlapMode parse_overlap_mode(std::string_view s) {
  if (s == "min") return OverlapMode::min_ratio;
  if (s == "target") return OverlapMode::target_ratio;
  throw ValidationError("unknown overlap mode '" + std::string(s) + "'");
}

HopResult propagate_region(const MatchingGraph& graph, const Polygon<double>& region,
                           const Eigen::Matrix3d& to_origin, double origin_width,
                           double origin_height, std::span<const std::size_t> path,
                           OverlapMode mode) {
  if (path.empty()) throw ValidationError("propagate_region: empty path");
  HopResult r;
  const auto& first = graph.nodes().at(path.front());
  Polygon<double> poly = clip_rectangle<double>(region, first.width, first.height);
  Eigen::Matrix3d back = to_origin;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const auto u = path[k], v = path[k + 1];
    if (!graph.edge(u, v))
      throw ValidationError("path step " + graph.nodes().at(u).id + " -> " + graph.nodes().at(v).id +
                            " is not a graph edge");
    if (polygon_area(poly) <= 0) return r;
    const auto& frame = graph.nodes()[v];
    poly = clip_rectangle<double>(map_polygon<double>(graph.homography(u, v), poly), frame.width,
                                  frame.height);
    back = back * graph.homography(v, u);
  }
  const auto& target = graph.nodes()[path.back()];
  const double area = polygon_area(poly);
  if (area <= 0) return r;
  r.target_ratio = std::min(1.0, area / (static_cast<double>(target.width) * target.height));
  const Polygon<double> in_origin =
      clip_rectangle<double>(map_polygon<double>(normalize_homography(back), poly), origin_width, origin_height);
  r.source_ratio = std::min(1.0, polygon_area(in_origin) / (origin_width * origin_height));
  r.overlap = mode == OverlapMode::min_ratio ? std::min(r.source_ratio, r.target_ratio) : r.target_ratio;
  r.region = std::move(poly);
  return r;
}

double hop_overlap(const MatchingGraph& graph, std::span<const std::size_t> path, OverlapMode mode) {
  if (path.empty()) throw ValidationError("hop_overlap: empty path");
  if (path.size() == 1) return 1.0;
  const auto& s = graph.nodes().at(path.front());
  return propagate_region(graph, rectangle_polygon<double>(s.width, s.height),
                          Eigen::Matrix3d::Identity(), s.width, s.height, path, mode)
      .overlap;
}

double OverlapCache::operator()(std::size_t u, std::size_t v) const {
  if (u == v) return 1.0;
  const auto a = std::min(u, v), b = std::max(u, v);
  const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const auto path = shortest_path(graph_, a, b);
  const double o = path ? hop_overlap(graph_, *path, mode_) : 0.0;
  std::lock_guard lock(mutex_);
  cache_.emplace(key, o);
  return o;
}

std::vector<Candidate> explore(const OverlapCache& overlap, std::size_t center, double floor) {
  const auto& graph = overlap.graph();
  std::vector<Candidate> out{{center, 1.0}};
  std::vector<bool> seen(graph.node_count(), false);
  seen[center] = true;
  std::deque<std::size_t> queue{center};
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (const auto& adj : graph.neighbors(u)) {
      if (seen[adj.node]) continue;
      seen[adj.node] = true;
      const double o = overlap(center, adj.node);
      if (o < floor) continue;
      out.push_back({adj.node, o});
      queue.push_back(adj.node);
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& x, const Candidate& y) { return x.node < y.node; });
  return out;
}

double medoid_score(const OverlapCache& overlap, std::span<const Candidate> candidates,
                    std::size_t y, double beta) {
  double s = 0;
  for (const auto& z : candidates) s += std::max(0.0, overlap(y, z.node) - (1.0 - beta));
  return s;
}

std::size_t medoid_step(const OverlapCache& overlap, std::span<const Candidate> candidates,
                        double beta) {
  if (candidates.empty()) throw ValidationError("medoid_step: empty candidate set");
  std::vector<double> score(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t i) {
    score[i] = medoid_score(overlap, candidates, candidates[i].node, beta);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (score[i] > score[best] ||
        (score[i] == score[best] && candidates[i].node < candidates[best].node))
      best = i;
  return candidates[best].node;
}

bool ObjectCluster::contains(const ImageId& id) const {
  auto it = std::lower_bound(support.begin(), support.end(), id,
                             [](const SupportMember& m, const ImageId& x) { return m.id < x; });
  return it != support.end() && it->id == id;
}

std::vector<ImageId> draw_seeds(const MatchingGraph& graph, std::size_t count, std::uint64_t rng_seed) {
  std::vector<std::size_t> perm(graph.node_count());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(rng_seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  perm.resize(std::min(count, perm.size()));
  std::vector<ImageId> out;
  for (auto p : perm) out.push_back(graph.nodes()[p].id);
  return out;
}

IconoidShift::IconoidShift(const MatchingGraph& graph, IconoidShiftConfig config)
    : graph_(graph), config_(config), overlap_(graph, config.overlap_mode) {
  if (!(config_.beta > 0 && config_.beta < 1)) throw ValidationError("beta must be in (0,1)");
  if (config_.exploration_floor < 0 || config_.exploration_floor > 1)
    throw ValidationError("exploration floor must be in [0,1]");
}

std::vector<std::size_t> IconoidShift::trajectory(std::size_t seed) const {
  std::vector<std::size_t> path{seed};
  std::size_t center = seed;
  for (std::size_t it = 0; it < config_.max_iterations; ++it) {
    const auto candidates = explore(overlap_, center, config_.exploration_floor);
    const auto next = medoid_step(overlap_, candidates, config_.beta);
    if (next == center) return path;
    if (auto pos = std::find(path.begin(), path.end(), next); pos != path.end()) {
      // Cycle: settle on its lowest node.
      path.push_back(*std::min_element(pos, path.end()));
      return path;
    }
    path.push_back(next);
    center = next;
  }
  return path;
}

std::size_t IconoidShift::converge(std::size_t seed) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = converged_.find(seed); it != converged_.end()) return it->second;
  }
  const auto path = trajectory(seed);
  const auto iconoid = path.back();
  std::lock_guard lock(mutex_);
  converged_.emplace(seed, iconoid);
  return iconoid;
}

ObjectCluster IconoidShift::cluster_at(std::size_t iconoid, const ImageId& seed) const {
  ObjectCluster c;
  c.iconoid = graph_.nodes().at(iconoid).id;
  c.object_id = "c_" + c.iconoid;
  c.beta = config_.beta;
  c.seed = seed;
  const double cut = 1.0 - config_.beta;
  for (const auto& cand : explore(overlap_, iconoid, std::min(config_.exploration_floor, cut)))
    if (cand.overlap >= cut) c.support.push_back({graph_.nodes()[cand.node].id, cand.overlap});
  c.below_min_size = c.support.size() < config_.min_support;
  return c;
}

std::vector<ObjectCluster> IconoidShift::run(std::span<const ImageId> seeds) const {
  std::map<std::size_t, ImageId> first_seed;  // iconoid -> first seed producing it
  for (const auto& s : seeds) {
    const auto iconoid = converge(graph_.require(s));
    first_seed.emplace(iconoid, s);
  }
  std::vector<ObjectCluster> out;
  for (const auto& [iconoid, seed] : first_seed) out.push_back(cluster_at(iconoid, seed));
  return out;
}

std::vector<ObjectCluster> run_clustering(const MatchingGraph& graph, const IconoidShiftConfig& config,
                                          std::span<const ImageId> seeds) {
  return IconoidShift(graph, config).run(seeds);
}

namespace {

std::size_t saturation(const std::vector<SweepRow>& rows, std::size_t SweepRow::*field) {
  if (rows.empty()) return 0;
  const auto final_value = rows.back().*field;
  for (const auto& r : rows)
    if (r.*field == final_value) return r.seed_count;
  return rows.back().seed_count;
}

}  // namespace

std::size_t SweepReport::large_saturation() const { return saturation(rows, &SweepRow::large_clusters); }
std::size_t SweepReport::small_saturation() const { return saturation(rows, &SweepRow::small_clusters); }

SweepReport seed_sweep(const MatchingGraph& graph, const IconoidShiftConfig& config,
                       std::span<const std::size_t> seed_counts,
                       const std::unordered_map<ImageId, std::string>& category_of,
                       std::size_t large_size) {
  if (!std::is_sorted(seed_counts.begin(), seed_counts.end()))
    throw ValidationError("seed counts must be ascending");
  SweepReport report;
  if (seed_counts.empty()) return report;
  const IconoidShift engine(graph, config);
  const auto seeds = draw_seeds(graph, seed_counts.back(), config.rng_seed);
  for (const auto count : seed_counts) {
    const std::span<const ImageId> prefix(seeds.data(), std::min(count, seeds.size()));
    const auto clusters = engine.run(prefix);
    SweepRow row;
    row.seed_count = count;
    row.clusters_found = clusters.size();
    std::set<ImageId> covered;
    for (const auto& c : clusters) {
      if (c.below_min_size) continue;
      ++row.clusters_min_size;
      (c.size() >= large_size ? row.large_clusters : row.small_clusters)++;
      for (const auto& m : c.support) covered.insert(m.id);
      auto it = category_of.find(c.iconoid);
      ++row.per_category[it == category_of.end() ? std::string("(none)") : it->second];
    }
    row.images_covered = covered.size();
    report.rows.push_back(std::move(row));
  }
  return report;
}

void save_clusters(const std::filesystem::path& file, std::span<const ObjectCluster> clusters) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& c : clusters) {
    json members = json::array();
    for (const auto& m : c.support) members.push_back({{"id", m.id}, {"overlap", m.overlap}});
    out << json{{"object_id", c.object_id}, {"iconoid", c.iconoid},   {"members", std::move(members)},
                {"beta", c.beta},           {"seed", c.seed},         {"below_min_size", c.below_min_size}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<ObjectCluster> load_clusters(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<ObjectCluster> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ObjectCluster c;
      c.object_id = j.at("object_id").get<std::string>();
      c.iconoid = j.at("iconoid").get<std::string>();
      for (const auto& m : j.at("members"))
        c.support.push_back({m.at("id").get<std::string>(), m.at("overlap").get<double>()});
      c.beta = j.at("beta").get<double>();
      c.seed = j.at("seed").get<std::string>();
      c.below_min_size = j.at("below_min_size").get<bool>();
      std::sort(c.support.begin(), c.support.end(),
                [](const SupportMember& x, const SupportMember& y) { return x.id < y.id; });
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw FormatError(file.string() + ": " + e.what(), line_offset);
    }
  }
  return out;
}

}  // namespace lmr
