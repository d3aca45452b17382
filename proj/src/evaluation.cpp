#include "lmr/evaluation.hpp"

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace lmr {

std::vector<QueryGroup> group_queries(const Dataset& queries, const Vocabulary& vocabulary,
                                      const GeometryConfig& geometry, const GroupingConfig& config) {
  std::vector<ImageId> ids;
  for (const auto& q : queries.images) ids.push_back(q.id);
  std::sort(ids.begin(), ids.end());
  std::vector<WeightedBovw> bovw(queries.size());
  const auto index = index_images(queries, vocabulary, ids);
  parallel_for(queries.size(), [&](std::size_t i) {
    bovw[i] = build_bovw(vocabulary.quantize(queries.images[i].descriptors), index.idf());
  });
  GeometryConfig g = geometry;
  g.inlier_threshold = std::max(g.inlier_threshold, config.min_inliers);
  const auto graph = build_graph(queries, index, bovw, g, config.retrieval_depth);

  // Union-find over near-identical views.
  std::vector<std::size_t> parent(graph.node_count());
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : graph.edges()) {
    const std::size_t path[] = {graph.require(e.a), graph.require(e.b)};
    if (hop_overlap(graph, path) < config.min_overlap) continue;
    const auto a = root(path[0]), b = root(path[1]);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<std::size_t, std::vector<ImageId>> comps;
  for (std::size_t v = 0; v < graph.node_count(); ++v) comps[root(v)].push_back(graph.nodes()[v].id);
  std::vector<QueryGroup> out;
  for (auto& [r, members] : comps) {
    std::sort(members.begin(), members.end());
    out.push_back({"g_" + members.front(), members, members.front()});
  }
  return out;
}

std::set<std::string> candidate_filter(const QueryGroup& group, const Dataset& queries,
                                       const RecognitionEngine& engine) {
  std::set<std::string> out;
  for (const auto& id : group.members)
    for (const auto& m : engine.rank_representatives(queries.at(id))) {
      if (!m.verified) break;
      for (auto c : engine.clusters().memberships(m.image_id))
        out.insert(engine.clusters().clusters()[c].object_id);
    }
  return out;
}

void MetricCounts::add(std::span<const Rating> top) {
  ++queries;
  if (!top.empty()) {
    good1 += top[0] == Rating::good;
    ok1 += top[0] != Rating::bad;
  }
  const auto top3 = top.first(std::min<std::size_t>(3, top.size()));
  good3 += std::find(top3.begin(), top3.end(), Rating::good) != top3.end();
  ok3 += std::any_of(top3.begin(), top3.end(), [](Rating r) { return r != Rating::bad; });
}

Metrics MetricCounts::metrics() const {
  Metrics m;
  m.query_count = queries;
  if (queries == 0) return m;
  const double n = static_cast<double>(queries);
  m.good1 = 100.0 * static_cast<double>(good1) / n;
  m.ok1 = 100.0 * static_cast<double>(ok1) / n;
  m.good3 = 100.0 * static_cast<double>(good3) / n;
  m.ok3 = 100.0 * static_cast<double>(ok3) / n;
  return m;
}

MetricReport aggregate(std::span<const QueryOutcome> outcomes) {
  MetricCounts all;
  std::map<std::string, MetricCounts> per;
  for (const auto& o : outcomes) {
    all.add(o.ratings);
    per[o.category].add(o.ratings);
  }
  MetricReport r;
  r.overall = all.metrics();
  for (const auto& [c, counts] : per) r.per_category[c] = counts.metrics();
  return r;
}

bool monotone(const Metrics& m) {
  return m.ok1 >= m.good1 && m.good3 >= m.good1 && m.ok3 >= m.ok1 && m.ok3 >= m.good3;
}

std::map<std::string, std::string> cluster_aliases(std::span<const ObjectCluster> clusters,
                                                   const GroundTruth& truth) {
  std::map<std::string, std::string> out;
  for (const auto& c : clusters)
    if (const auto* img = truth.image(c.iconoid); img && img->object) out[c.object_id] = *img->object;
  return out;
}

Rater truth_rater(const GroundTruth& truth, std::span<const ObjectCluster> clusters) {
  auto aliases = cluster_aliases(clusters, truth);
  return [&truth, aliases = std::move(aliases)](const ImageId& query, const std::string& object_id) {
    const auto* q = truth.image(query);
    auto it = aliases.find(object_id);
    if (!q || !q->object || it == aliases.end()) return Rating::bad;
    return truth.rating(*q->object, it->second);
  };
}

Rater annotation_rater(std::span<const RelevanceAnnotation> annotations,
                       std::map<std::string, std::string> aliases,
                       std::function<bool(const ImageId&, const std::string&)> candidate) {
  std::map<std::pair<ImageId, std::string>, Rating> table;
  for (const auto& a : annotations) table[{a.query_id, a.object_id}] = a.rating;
  return [table = std::move(table), aliases = std::move(aliases), candidate = std::move(candidate)](
             const ImageId& query, const std::string& object_id) {
    if (candidate && !candidate(query, object_id)) return Rating::bad;
    if (auto it = table.find({query, object_id}); it != table.end()) return it->second;
    if (auto alias = aliases.find(object_id); alias != aliases.end())
      if (auto it = table.find({query, alias->second}); it != table.end()) return it->second;
    throw ValidationError("no annotation for query '" + query + "' and object '" + object_id + "'");
  };
}

std::string category_of(const ImageRecord& query) { return query.category.value_or("(none)"); }

std::vector<QueryResult> recognize_all(const Dataset& queries, const RecognitionEngine& engine,
                                       ScoringMethod method) {
  std::vector<QueryResult> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries.images[i];
    out[i] = {q.id, category_of(q), engine.recognize(q, method)};
  }
  return out;
}

std::map<ScoringMethod, std::vector<QueryResult>> recognize_all_methods(const Dataset& queries,
                                                                        const RecognitionEngine& engine) {
  std::map<ScoringMethod, std::vector<QueryResult>> out;
  for (auto m : kAllMethods) out[m].resize(queries.size());
  const auto k = engine.config().top_k;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries.images[i];
    const auto reps = engine.rank_representatives(q);
    const auto icons = engine.rank_iconoids(q);
    const auto& cs = engine.clusters();
    auto set = [&](ScoringMethod m, std::vector<ObjectScore> s) {
      out[m][i] = {q.id, category_of(q), std::move(s)};
    };
    set(ScoringMethod::center, score_center(icons, cs, k));
    set(ScoringMethod::size, score_size(reps, cs, k));
    set(ScoringMethod::voting, score_voting(reps, cs, k));
    set(ScoringMethod::best_match, score_best_match(reps, cs, k));
    set(ScoringMethod::overlap,
        score_overlap(q, reps, cs, engine.graph(), k, engine.config().overlap_mode));
  }
  return out;
}

MetricReport evaluate_recognition(std::span<const QueryResult> results, const Rater& rate) {
  std::vector<QueryOutcome> outcomes;
  for (const auto& r : results) {
    QueryOutcome o{r.query_id, r.category, {}};
    for (const auto& s : r.objects) o.ratings.push_back(rate(r.query_id, s.object_id));
    outcomes.push_back(std::move(o));
  }
  return aggregate(outcomes);
}

MetricReport evaluate_semantics(std::span<const QueryResult> results,
                                std::span<const ClusterNames> names, const GroundTruth& truth) {
  std::map<std::string, std::string> top_tag;
  for (const auto& n : names)
    if (!n.top.empty()) top_tag[n.cluster] = n.top.front().tag;
  std::vector<QueryOutcome> outcomes;
  for (const auto& r : results) {
    QueryOutcome o{r.query_id, r.category, {}};
    const auto* q = truth.image(r.query_id);
    std::vector<std::string> good, ok;
    if (q && q->object) {
      for (const auto& n : truth.accepted_names(*q->object)) good.push_back(normalize_tag(n));
      for (const auto& n : truth.ok_names(*q->object)) ok.push_back(normalize_tag(n));
    }
    for (const auto& s : r.objects) {
      auto it = top_tag.find(s.object_id);
      Rating rating = Rating::bad;
      if (it != top_tag.end()) {
        if (std::find(good.begin(), good.end(), it->second) != good.end())
          rating = Rating::good;
        else if (std::find(ok.begin(), ok.end(), it->second) != ok.end())
          rating = Rating::ok;
      }
      o.ratings.push_back(rating);
    }
    outcomes.push_back(std::move(o));
  }
  return aggregate(outcomes);
}

EndToEndReport combine(MetricReport recognition, MetricReport semantics) {
  EndToEndReport r;
  r.recognition = std::move(recognition);
  r.semantics = std::move(semantics);
  for (const auto& [c, m] : r.recognition.per_category) {
    auto it = r.semantics.per_category.find(c);
    r.gap[c] = m.good1 - (it == r.semantics.per_category.end() ? 0.0 : it->second.good1);
  }
  r.overall_gap = r.recognition.overall.good1 - r.semantics.overall.good1;
  return r;
}

}  // namespace lmr
