#include "lmr/compaction.hpp"

#include "lmr/error.hpp"
#include "lmr/recognition.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace lmr {

using json = nlohmann::json;

std::string to_string(CompactionMethod m) {
  switch (m) {
    case CompactionMethod::none: return "none";
    case CompactionMethod::complete_link: return "complete-link";
    case CompactionMethod::kvq: return "kvq";
    case CompactionMethod::dominating_set: return "dominating-set";
    case CompactionMethod::fine_iconoids: return "fine-iconoids";
    case CompactionMethod::random: return "random";
  }
  return "none";
}

CompactionMethod parse_compaction_method(std::string_view s) {
  for (auto m : {CompactionMethod::none, CompactionMethod::complete_link, CompactionMethod::kvq,
                 CompactionMethod::dominating_set, CompactionMethod::fine_iconoids,
                 CompactionMethod::random})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown compaction method '" + std::string(s) + "'");
}

std::vector<std::size_t> greedy_set_cover(std::span<const std::vector<std::size_t>> covers,
                                          std::size_t n) {
  std::vector<bool> covered(n, false);
  std::size_t remaining = n;
  std::vector<std::size_t> chosen;
  while (remaining > 0) {
    std::size_t best = covers.size(), best_gain = 0;
    for (std::size_t u = 0; u < covers.size(); ++u) {
      std::size_t gain = 0;
      for (auto v : covers[u]) gain += !covered[v];
      if (gain > best_gain) {
        best = u;
        best_gain = gain;
      }
    }
    if (best == covers.size()) throw ValidationError("set cover: items cannot be covered");
    chosen.push_back(best);
    for (auto v : covers[best])
      if (!covered[v]) {
        covered[v] = true;
        --remaining;
      }
  }
  return chosen;
}

namespace {

struct Members {
  std::vector<ImageId> ids;                 // sorted
  std::vector<std::optional<std::size_t>> nodes;
};

Members members_of(const ObjectCluster& cluster, const MatchingGraph& graph) {
  Members m;
  for (const auto& s : cluster.support) m.ids.push_back(s.id);
  std::sort(m.ids.begin(), m.ids.end());
  for (const auto& id : m.ids) m.nodes.push_back(graph.node_index(id));
  return m;
}

int score(const MatchingGraph& graph, const Members& m, std::size_t i, std::size_t j) {
  if (!m.nodes[i] || !m.nodes[j]) return 0;
  return graph.inliers(*m.nodes[i], *m.nodes[j]);
}

std::vector<ImageId> with_iconoid(std::vector<ImageId> kept, const ObjectCluster& cluster) {
  kept.push_back(cluster.iconoid);
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  return kept;
}

std::vector<ImageId> cover_reduce(const ObjectCluster& cluster, const MatchingGraph& graph, int radius) {
  const auto m = members_of(cluster, graph);
  const std::size_t n = m.ids.size();
  std::vector<std::vector<std::size_t>> covers(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (u == v || score(graph, m, u, v) >= radius) covers[u].push_back(v);
  std::vector<ImageId> kept;
  for (auto u : greedy_set_cover(covers, n)) kept.push_back(m.ids[u]);
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

std::vector<ImageId> complete_link_reduce(const ObjectCluster& cluster, const MatchingGraph& graph,
                                          int threshold) {
  const auto m = members_of(cluster, graph);
  const std::size_t n = m.ids.size();
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  // link[a][b]: minimum pairwise score between groups a and b.
  std::vector<std::vector<int>> link(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) link[i][j] = i == j ? 0 : score(graph, m, i, j);
  std::vector<bool> alive(n, true);
  for (;;) {
    int best = -1;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b)
        if (alive[b] && link[a][b] > best) {
          best = link[a][b];
          ba = a;
          bb = b;
        }
    }
    if (best < threshold || best <= 0) break;
    groups[ba].insert(groups[ba].end(), groups[bb].begin(), groups[bb].end());
    alive[bb] = false;
    for (std::size_t c = 0; c < n; ++c)
      if (alive[c] && c != ba) link[ba][c] = link[c][ba] = std::min(link[ba][c], link[bb][c]);
  }
  std::vector<ImageId> kept;
  for (std::size_t a = 0; a < n; ++a) {
    if (!alive[a]) continue;
    const auto& g = groups[a];
    if (g.size() < 3) {
      for (auto i : g) kept.push_back(m.ids[i]);
      continue;
    }
    std::size_t best = g.front();
    auto degree = [&](std::size_t i) { return m.nodes[i] ? graph.degree(*m.nodes[i]) : 0; };
    for (auto i : g)
      if (degree(i) > degree(best) || (degree(i) == degree(best) && m.ids[i] < m.ids[best])) best = i;
    kept.push_back(m.ids[best]);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<ImageId> kvq_reduce(const ObjectCluster& cluster, const MatchingGraph& graph, int radius) {
  if (radius <= 0) throw ValidationError("KVQ radius must be positive");
  return cover_reduce(cluster, graph, radius);
}

std::vector<ImageId> dominating_set_reduce(const ObjectCluster& cluster, const MatchingGraph& graph,
                                           int threshold) {
  // Closed neighbourhoods in the threshold-pruned subgraph: the same cover
  // structure as KVQ at radius = threshold.
  return cover_reduce(cluster, graph, threshold);
}

std::vector<ImageId> fine_iconoid_reduce(const ObjectCluster& cluster,
                                         std::span<const ObjectCluster> fine_clusters) {
  std::vector<ImageId> kept;
  for (const auto& f : fine_clusters)
    if (cluster.contains(f.iconoid)) kept.push_back(f.iconoid);
  if (kept.empty()) kept.push_back(cluster.iconoid);
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  return kept;
}

std::vector<ImageId> random_reduce_count(const ObjectCluster& cluster, std::size_t count,
                                         std::uint64_t seed) {
  std::vector<ImageId> others;
  for (const auto& s : cluster.support)
    if (s.id != cluster.iconoid) others.push_back(s.id);
  std::sort(others.begin(), others.end());
  std::mt19937_64 rng(seed);
  std::shuffle(others.begin(), others.end(), rng);
  const std::size_t n = others.size() + 1;
  count = std::clamp<std::size_t>(count, 1, n);
  std::vector<ImageId> kept{cluster.iconoid};
  kept.insert(kept.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(count - 1));
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<ImageId> random_reduce(const ObjectCluster& cluster, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw ValidationError("keep fraction must be in (0,1]");
  const auto n = static_cast<double>(std::max<std::size_t>(cluster.support.size(), 1));
  return random_reduce_count(cluster, static_cast<std::size_t>(std::lround(fraction * n)), seed);
}

namespace {

std::uint64_t cluster_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<std::vector<ImageId>> compact_clusters(std::span<const ObjectCluster> clusters,
                                                   const MatchingGraph& graph,
                                                   const CompactionConfig& config,
                                                   std::span<const ObjectCluster> fine_clusters) {
  std::vector<std::vector<ImageId>> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& cluster = clusters[c];
    std::vector<ImageId> kept;
    switch (config.method) {
      case CompactionMethod::none:
        for (const auto& s : cluster.support) kept.push_back(s.id);
        break;
      case CompactionMethod::complete_link:
        kept = complete_link_reduce(cluster, graph, config.threshold);
        break;
      case CompactionMethod::kvq: kept = kvq_reduce(cluster, graph, config.radius); break;
      case CompactionMethod::dominating_set:
        kept = dominating_set_reduce(cluster, graph, config.threshold);
        break;
      case CompactionMethod::fine_iconoids: kept = fine_iconoid_reduce(cluster, fine_clusters); break;
      case CompactionMethod::random:
        kept = random_reduce(cluster, config.keep_fraction, cluster_seed(config.rng_seed, c));
        break;
    }
    out.push_back(with_iconoid(std::move(kept), cluster));
  }
  return out;
}

std::vector<std::vector<ImageId>> random_matching(std::span<const ObjectCluster> clusters,
                                                  std::span<const std::vector<ImageId>> reference,
                                                  std::uint64_t seed) {
  if (reference.size() != clusters.size()) throw ValidationError("one reference set per cluster required");
  std::vector<std::vector<ImageId>> out;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    out.push_back(random_reduce_count(clusters[c], reference[c].size(), cluster_seed(seed, c)));
  return out;
}

bool covers_all(const ObjectCluster& cluster, const MatchingGraph& graph, std::span<const ImageId> kept,
                int radius) {
  for (const auto& s : cluster.support) {
    if (std::find(kept.begin(), kept.end(), s.id) != kept.end()) continue;
    const auto u = graph.node_index(s.id);
    bool ok = false;
    for (const auto& k : kept) {
      const auto v = graph.node_index(k);
      if (u && v && graph.inliers(*u, *v) >= radius) {
        ok = true;
        break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

ReducedIndex rebuild_reduced_index(const Dataset& database, const Vocabulary& vocabulary,
                                   std::span<const ObjectCluster> clusters,
                                   std::span<const std::vector<ImageId>> kept) {
  std::set<ImageId> all, original;
  for (const auto& k : kept) all.insert(k.begin(), k.end());
  for (const auto& c : clusters)
    for (const auto& s : c.support) original.insert(s.id);
  const std::vector<ImageId> ids(all.begin(), all.end());
  ReducedIndex r;
  r.index = index_images(database, vocabulary, ids);
  r.kept = ids.size();
  r.original = original.size();
  return r;
}

void save_kept(const std::filesystem::path& file, std::span<const ObjectCluster> clusters,
               std::span<const std::vector<ImageId>> kept) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (std::size_t c = 0; c < clusters.size(); ++c)
    out << json{{"object_id", clusters[c].object_id},
                {"iconoid", clusters[c].iconoid},
                {"support", clusters[c].support.size()},
                {"kept", kept[c]}}
               .dump()
        << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<std::vector<ImageId>> load_kept(const std::filesystem::path& file,
                                            std::span<const ObjectCluster> clusters) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::map<std::string, std::vector<ImageId>> by_object;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      by_object[j.at("object_id").get<std::string>()] = j.at("kept").get<std::vector<ImageId>>();
    } catch (const json::exception& e) {
      throw FormatError(file.string() + ": " + e.what(), line_offset);
    }
  }
  std::vector<std::vector<ImageId>> out;
  for (const auto& c : clusters) {
    auto it = by_object.find(c.object_id);
    if (it == by_object.end()) throw ValidationError("kept set missing for " + c.object_id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace lmr
