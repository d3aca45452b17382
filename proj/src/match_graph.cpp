#include "lmr/match_graph.hpp"

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>

namespace lmr {

using json = nlohmann::json;

MatchingGraph::MatchingGraph(std::vector<GraphNode> nodes, std::vector<MatchEdge> edges,
                             int build_threshold)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), build_threshold_(build_threshold) {
  std::sort(nodes_.begin(), nodes_.end(),
            [](const GraphNode& x, const GraphNode& y) { return x.id < y.id; });
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].width <= 0 || nodes_[i].height <= 0)
      throw ValidationError("graph node '" + nodes_[i].id + "' has an empty frame");
    if (!lookup_.emplace(nodes_[i].id, i).second)
      throw ValidationError("duplicate graph node '" + nodes_[i].id + "'");
  }
  std::sort(edges_.begin(), edges_.end(), [](const MatchEdge& x, const MatchEdge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  adjacency_.assign(nodes_.size(), {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (!(edge.a < edge.b)) throw ValidationError("edge " + edge.a + "-" + edge.b + " not in id order");
    if (e > 0 && edges_[e - 1].a == edge.a && edges_[e - 1].b == edge.b)
      throw ValidationError("duplicate edge " + edge.a + "-" + edge.b);
    if (edge.inliers < build_threshold_)
      throw ValidationError("edge " + edge.a + "-" + edge.b + " below the build threshold");
    const auto u = require(edge.a);
    const auto v = require(edge.b);
    adjacency_[u].push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(e)});
    adjacency_[v].push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(e)});
  }
  for (auto& adj : adjacency_)
    std::sort(adj.begin(), adj.end(), [](const Adjacent& x, const Adjacent& y) { return x.node < y.node; });
}

std::optional<std::size_t> MatchingGraph::node_index(const ImageId& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t MatchingGraph::require(const ImageId& id) const {
  auto i = node_index(id);
  if (!i) throw ValidationError("image '" + id + "' is not in the matching graph");
  return *i;
}

const MatchEdge* MatchingGraph::edge(std::size_t u, std::size_t v) const {
  const auto& adj = adjacency_.at(u);
  auto it = std::lower_bound(adj.begin(), adj.end(), v,
                             [](const Adjacent& x, std::size_t n) { return x.node < n; });
  if (it == adj.end() || it->node != v) return nullptr;
  return &edges_[it->edge];
}

int MatchingGraph::inliers(std::size_t u, std::size_t v) const {
  const auto* e = edge(u, v);
  return e ? e->inliers : 0;
}

const Eigen::Matrix3d& MatchingGraph::homography(std::size_t u, std::size_t v) const {
  const auto* e = edge(u, v);
  if (!e) throw ValidationError("no edge between " + nodes_.at(u).id + " and " + nodes_.at(v).id);
  return u < v ? e->h_ab : e->h_ba;
}

std::vector<std::vector<ImageId>> MatchingGraph::components() const {
  std::vector<int> label(nodes_.size(), -1);
  std::vector<std::vector<ImageId>> out;
  for (std::size_t s = 0; s < nodes_.size(); ++s) {
    if (label[s] >= 0) continue;
    const int c = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<std::size_t> stack{s};
    label[s] = c;
    std::vector<std::size_t> members;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (const auto& n : adjacency_[u])
        if (label[n.node] < 0) {
          label[n.node] = c;
          stack.push_back(n.node);
        }
    }
    std::sort(members.begin(), members.end());
    for (auto m : members) out.back().push_back(nodes_[m].id);
  }
  return out;
}

namespace {

std::uint64_t pair_seed(std::uint64_t seed, const ImageId& a, const ImageId& b) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  auto feed = [&](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  feed(a);
  feed(b);
  return h;
}

}  // namespace

MatchingGraph build_graph(const Dataset& dataset, const InvertedIndex& index,
                          std::span<const WeightedBovw> bovw, const GeometryConfig& config,
                          std::size_t retrieval_depth) {
  if (bovw.size() != dataset.size())
    throw ValidationError("build_graph: one bag of words per image required");
  const std::size_t n = dataset.size();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> found(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& self = dataset.images[i].id;
    for (const auto& m : index.query(bovw[i], retrieval_depth + 1)) {
      if (m.image_id == self) continue;
      const auto j = dataset.find(m.image_id);
      if (!j) continue;
      found[i].emplace_back(std::min(i, *j), std::max(i, *j));
      if (found[i].size() == retrieval_depth) break;
    }
  });
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& f : found) pairs.insert(f.begin(), f.end());
  const std::vector<std::pair<std::size_t, std::size_t>> candidates(pairs.begin(), pairs.end());

  std::vector<std::optional<MatchEdge>> verified(candidates.size());
  parallel_for(candidates.size(), [&](std::size_t k) {
    const auto& x = dataset.images[candidates[k].first];
    const auto& y = dataset.images[candidates[k].second];
    GeometryConfig pc = config;
    pc.ransac_seed = x.id < y.id ? pair_seed(config.ransac_seed, x.id, y.id)
                                 : pair_seed(config.ransac_seed, y.id, x.id);
    verified[k] = verify_edge(x, y, pc);
  });

  std::vector<GraphNode> nodes;
  nodes.reserve(n);
  for (const auto& img : dataset.images) nodes.push_back({img.id, img.width, img.height});
  std::vector<MatchEdge> edges;
  for (auto& e : verified)
    if (e) edges.push_back(std::move(*e));
  return MatchingGraph(std::move(nodes), std::move(edges), config.inlier_threshold);
}

MatchingGraph prune_edges(const MatchingGraph& graph, int min_inliers) {
  if (min_inliers < graph.build_threshold())
    throw ValidationError("prune threshold " + std::to_string(min_inliers) +
                          " is below the build threshold " + std::to_string(graph.build_threshold()));
  std::vector<MatchEdge> kept;
  for (const auto& e : graph.edges())
    if (e.inliers >= min_inliers) kept.push_back(e);
  return MatchingGraph(graph.nodes(), std::move(kept), min_inliers);
}

std::optional<std::vector<std::size_t>> shortest_path(const MatchingGraph& graph, std::size_t a,
                                                      std::size_t b,
                                                      const std::function<bool(std::size_t)>& allowed) {
  const std::size_t n = graph.node_count();
  if (a >= n || b >= n) throw ValidationError("shortest_path: node out of range");
  if (allowed && (!allowed(a) || !allowed(b))) return std::nullopt;
  if (a == b) return std::vector<std::size_t>{a};

  constexpr auto kInf = std::numeric_limits<std::size_t>::max();
  auto bfs = [&](std::size_t s) {
    std::vector<std::size_t> dist(n, kInf);
    std::deque<std::size_t> queue{s};
    dist[s] = 0;
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      for (const auto& adj : graph.neighbors(u)) {
        if (dist[adj.node] != kInf || (allowed && !allowed(adj.node))) continue;
        dist[adj.node] = dist[u] + 1;
        queue.push_back(adj.node);
      }
    }
    return dist;
  };
  const auto da = bfs(a);
  if (da[b] == kInf) return std::nullopt;
  const auto db = bfs(b);
  const std::size_t len = da[b];
  auto on_path = [&](std::size_t v) { return da[v] != kInf && db[v] != kInf && da[v] + db[v] == len; };

  // best[v]: largest bottleneck over shortest continuations v -> b.
  std::vector<std::vector<std::size_t>> layers(len + 1);
  for (std::size_t v = 0; v < n; ++v)
    if (on_path(v)) layers[da[v]].push_back(v);
  std::vector<int> best(n, -1);
  best[b] = std::numeric_limits<int>::max();
  for (std::size_t d = len; d-- > 0;)
    for (auto v : layers[d])
      for (const auto& adj : graph.neighbors(v))
        if (on_path(adj.node) && da[adj.node] == d + 1 && best[adj.node] >= 0)
          best[v] = std::max(best[v], std::min(graph.edges()[adj.edge].inliers, best[adj.node]));
  const int bottleneck = best[a];

  std::vector<std::size_t> path{a};
  std::size_t v = a;
  while (v != b) {
    std::size_t next = kInf;
    for (const auto& adj : graph.neighbors(v)) {  // ascending node index
      if (!on_path(adj.node) || da[adj.node] != da[v] + 1) continue;
      if (graph.edges()[adj.edge].inliers < bottleneck || best[adj.node] < bottleneck) continue;
      next = adj.node;
      break;
    }
    v = next;
    path.push_back(v);
  }
  return path;
}

void save_graph(const std::filesystem::path& file, const MatchingGraph& graph) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  json nodes = json::array();
  for (const auto& n : graph.nodes()) nodes.push_back({n.id, n.width, n.height});
  out << json{{"format", "lmr-graph"},
              {"version", kGraphVersion},
              {"build_threshold", graph.build_threshold()},
              {"nodes", std::move(nodes)}}
             .dump()
      << '\n';
  for (const auto& e : graph.edges()) {
    json matches = json::array();
    for (const auto& c : e.correspondences) matches.push_back({c.a, c.b});
    out << json{{"a", e.a},
                {"b", e.b},
                {"inliers", e.inliers},
                {"h_ab", std::vector<double>(e.h_ab.data(), e.h_ab.data() + 9)},
                {"h_ba", std::vector<double>(e.h_ba.data(), e.h_ba.data() + 9)},
                {"matches", std::move(matches)}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

MatchingGraph load_graph(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  std::uint64_t offset = 0;
  std::vector<GraphNode> nodes;
  std::vector<MatchEdge> edges;
  int threshold = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (header) {
        if (j.at("format") != "lmr-graph") throw FormatError(file.string() + ": not a graph file", 0);
        if (j.at("version").get<int>() != kGraphVersion)
          throw FormatError(file.string() + ": unsupported graph version", 0);
        threshold = j.at("build_threshold").get<int>();
        for (const auto& n : j.at("nodes"))
          nodes.push_back({n.at(0).get<std::string>(), n.at(1).get<int>(), n.at(2).get<int>()});
        header = false;
        continue;
      }
      MatchEdge e;
      e.a = j.at("a").get<std::string>();
      e.b = j.at("b").get<std::string>();
      e.inliers = j.at("inliers").get<int>();
      const auto hab = j.at("h_ab").get<std::vector<double>>();
      const auto hba = j.at("h_ba").get<std::vector<double>>();
      if (hab.size() != 9 || hba.size() != 9) throw FormatError("homography needs 9 entries", line_offset);
      e.h_ab = Eigen::Map<const Eigen::Matrix3d>(hab.data());
      e.h_ba = Eigen::Map<const Eigen::Matrix3d>(hba.data());
      for (const auto& m : j.at("matches"))
        e.correspondences.push_back({m.at(0).get<std::uint32_t>(), m.at(1).get<std::uint32_t>()});
      edges.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError(file.string() + ": " + ex.what(), line_offset);
    }
  }
  if (header) throw FormatError(file.string() + ": missing graph header", 0);
  return MatchingGraph(std::move(nodes), std::move(edges), threshold);
}

}  // namespace lmr
