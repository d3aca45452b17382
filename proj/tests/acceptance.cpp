// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include "support.hpp"

#include "lmr/compaction.hpp"
#include "lmr/dataset_io.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/geometry.hpp"
#include "lmr/homography.hpp"
#include "lmr/iconoid_shift.hpp"
#include "lmr/inverted_index.hpp"
#include "lmr/kdtree.hpp"
#include "lmr/parallel.hpp"
#include "lmr/pipeline.hpp"
#include "lmr/recognition.hpp"
#include "lmr/tags.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace lmr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------
Outcome retrieval_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t mismatches = 0, queries = 0;
  double worst = 0;
  for (int r = 0; r < 20; ++r) {
    std::mt19937_64 rng(1000 + r);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(50, 500)(rng);
    const std::size_t vocab = 300;
    auto draw_words = [&] {
      std::vector<WordId> w(std::uniform_int_distribution<std::size_t>(5, 60)(rng));
      std::uniform_real_distribution<double> u(0, 1);
      for (auto& x : w) x = static_cast<WordId>(std::min<double>(vocab - 1, vocab * u(rng) * u(rng)));
      return w;
    };
    WordCorpus corpus;
    for (std::size_t i = 0; i < n; ++i) {
      corpus.ids.push_back(fmt("img%04zu", (i * 7919) % 10007));
      const bool duplicate = i > 0 && std::uniform_real_distribution<double>(0, 1)(rng) < 0.05;
      corpus.words.push_back(duplicate ? corpus.words.back() : draw_words());
    }
    const auto index = index_corpus(corpus, vocab);
    std::vector<WeightedBovw> docs;
    for (const auto& w : corpus.words) docs.push_back(build_bovw(w, index.idf()));
    for (int q = 0; q < 25; ++q) {
      const auto words = q % 2 ? corpus.words[rng() % n] : draw_words();
      const auto query = build_bovw(words, index.idf());
      const auto got = index.query(query, 10);
      const auto all = test::brute_force_ranking(corpus.ids, docs, query, n);
      ++queries;
      const std::size_t expect_size = std::min<std::size_t>(10, all.size());
      if (got.size() != expect_size) {
        ++mismatches;
        continue;
      }
      std::map<ImageId, double> oracle_score;
      for (const auto& s : all) oracle_score[s.id] = s.score;
      for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::abs(got[i].tfidf_score - all[i].score));
        const bool same = got[i].image_id == all[i].id;
        const bool tied = oracle_score.contains(got[i].image_id) &&
                          std::abs(oracle_score[got[i].image_id] - all[i].score) < 1e-12;
        if ((!same && !tied) || std::abs(got[i].tfidf_score - all[i].score) >= 1e-9) {
          ++mismatches;
          break;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && worst < 1e-9 && secs < 60,
          fmt("%zu queries over 20 corpora, %zu mismatches, max score delta %.2e, %.1fs", queries, mismatches,
              worst, secs)};
}

// 2 -------------------------------------------------------------------------
Outcome quantizer_exactness() {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> u(0, 1);
  DescriptorMatrix sample(4000, 32);
  for (Eigen::Index i = 0; i < sample.size(); ++i) sample.data()[i] = u(rng);
  const auto vocab = train_vocab(sample, 256, 7);
  DescriptorMatrix probe(10000, 32);
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    if (i % 50 == 0)
      probe.row(i) = vocab.centers().row(static_cast<Eigen::Index>(rng() % vocab.size()));
    else
      for (Eigen::Index d = 0; d < 32; ++d) probe(i, d) = u(rng);
  }
  const auto words = vocab.quantize(probe);
  std::size_t mismatches = 0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      double d = 0;
      for (Eigen::Index k = 0; k < 32; ++k) {
        const double diff = double(probe(i, k)) - double(vocab.centers()(static_cast<Eigen::Index>(c), k));
        d += diff * diff;
      }
      if (d < best_d) best_d = d, best = c;
    }
    mismatches += words[static_cast<std::size_t>(i)] != best;
  }
  return {mismatches == 0, fmt("10000 descriptors vs brute force over K=256: %zu mismatches", mismatches)};
}

// 3 -------------------------------------------------------------------------
Eigen::Matrix3d random_homography(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h(0, 0) += 0.1 * n(rng), h(0, 1) = 0.1 * n(rng), h(0, 2) = 30 * n(rng);
  h(1, 0) = 0.1 * n(rng), h(1, 1) += 0.1 * n(rng), h(1, 2) = 30 * n(rng);
  h(2, 0) = 1e-4 * n(rng), h(2, 1) = 1e-4 * n(rng);
  return h;
}

Outcome homography_recovery() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0, 640), uy(0, 480);
  GeometryConfig config;
  config.ransac_seed = 99;
  double worst = 0;
  int exact_fits = 0;
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    const int n = 4 + t % 17;
    Points2d a(2, n), b(2, n);
    std::vector<Correspondence> m;
    for (int i = 0; i < n; ++i) {
      a.col(i) << ux(rng), uy(rng);
      b.col(i) = (h * a.col(i).homogeneous()).hnormalized();
      m.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i)});
    }
    const auto est = estimate_homography(a, b, m, config);
    if (!est) continue;
    double err = 0;
    for (int i = 0; i < n; ++i)
      err = std::max(err, ((est->homography * a.col(i).homogeneous()).hnormalized() - b.col(i)).norm());
    worst = std::max(worst, err);
    exact_fits += err < 1e-6;
  }
  int recovered = 0;
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    const int inliers = 20, outliers = 10;
    Points2d a(2, inliers + outliers), b(2, inliers + outliers);
    std::normal_distribution<double> noise(0, 0.25);
    std::vector<Correspondence> m;
    std::set<std::uint32_t> truth;
    for (int i = 0; i < inliers + outliers; ++i) {
      a.col(i) << ux(rng), uy(rng);
      const Eigen::Vector2d mapped = (h * a.col(i).homogeneous()).hnormalized();
      if (i < inliers) {
        b.col(i) = mapped + Eigen::Vector2d(noise(rng), noise(rng));
        truth.insert(static_cast<std::uint32_t>(i));
      } else {
        do b.col(i) << ux(rng), uy(rng);
        while ((b.col(i) - mapped).norm() < 40);
      }
      m.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i)});
    }
    // Shuffle so inliers are not a prefix.
    std::shuffle(m.begin(), m.end(), rng);
    config.ransac_seed = 500 + static_cast<std::uint64_t>(t);
    const auto est = estimate_homography(a, b, m, config);
    if (!est) continue;
    std::set<std::uint32_t> got;
    for (const auto& c : est->inliers) got.insert(c.a);
    recovered += got == truth;
  }
  return {exact_fits == 100 && recovered >= 99,
          fmt("exact fits %d/100 (max reprojection %.2e px); 33%% outliers: %d/100 exact inlier sets", exact_fits,
              worst, recovered)};
}

// 4 -------------------------------------------------------------------------
Outcome hop_exactness() {
  GeneratorConfig gen;
  gen.noise = test::clean_noise();
  gen.noise.min_feature_px = 0;
  auto g = test::group(Archetype::panorama, 1, 30, 0, "Panoramas", 2500);
  gen.groups.push_back(g);
  const auto data = generate_dataset(gen, 4);
  const auto& db = data.database;
  GeometryConfig config;
  config.ransac_seed = 4;
  std::vector<GraphNode> nodes;
  for (const auto& img : db.images) nodes.push_back({img.id, img.width, img.height});
  std::vector<std::optional<MatchEdge>> found(db.size() * db.size());
  parallel_for(db.size() * db.size(), [&](std::size_t k) {
    const auto i = k / db.size(), j = k % db.size();
    if (i < j) found[k] = verify_edge(db.images[i], db.images[j], config);
  });
  std::vector<MatchEdge> edges;
  for (auto& e : found)
    if (e) edges.push_back(std::move(*e));
  const MatchingGraph graph(nodes, edges, config.inlier_threshold);

  std::map<std::size_t, std::size_t> checked;
  double worst = 0;
  for (std::size_t a = 0; a < graph.node_count(); ++a)
    for (std::size_t b = a + 1; b < graph.node_count(); ++b) {
      const auto path = shortest_path(graph, a, b);
      if (!path || path->size() - 1 > 4) continue;
      const auto hops = path->size() - 1;
      if (checked[hops] >= 60) continue;
      std::vector<Eigen::Matrix3d> hs;
      std::vector<Eigen::Vector2d> sizes;
      for (auto v : *path) {
        const auto* t = data.truth.image(graph.nodes()[v].id);
        hs.push_back(t->plane_to_image);
        sizes.emplace_back(graph.nodes()[v].width, graph.nodes()[v].height);
      }
      const double oracle = test::chain_overlap_oracle(hs, sizes);
      const double hop = hop_overlap(graph, *path);
      worst = std::max(worst, std::abs(oracle - hop));
      ++checked[hops];
    }
  std::string counts;
  for (auto [h, c] : checked) counts += fmt(" %zu-hop:%zu", h, c);
  const bool chains = checked.contains(2) && checked.contains(3);
  return {worst < 1e-6 && chains, fmt("max |HoP - oracle| %.2e over%s", worst, counts.c_str())};
}

// 5 -------------------------------------------------------------------------
Outcome clustering_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  GeneratorConfig gen;
  gen.noise = test::clean_noise();
  gen.groups.push_back(test::group(Archetype::flat_small, 3, 10, 0, "Paintings"));
  auto config = test::small_pipeline(5);
  config.clustering.seed_count = 30;
  config.clustering.beta = 0.9;
  const auto e = test::experiment_from(gen, config);
  double worst = 1;
  std::set<std::string> objects;
  for (const auto& c : e.clusters) {
    const auto object = *e.truth->image(c.iconoid)->object;
    objects.insert(object);
    std::vector<ImageId> members;
    for (const auto& m : c.support) members.push_back(m.id);
    worst = std::min(worst, test::jaccard(members, e.truth->members(object)));
  }
  const double secs = seconds_since(t0);
  return {e.clusters.size() == 3 && objects.size() == 3 && worst >= 0.9 && secs < 120,
          fmt("%zu clusters over %zu objects, min Jaccard %.3f, %.1fs", e.clusters.size(), objects.size(), worst,
              secs)};
}

// 6 -------------------------------------------------------------------------
Outcome seed_sweep_trend() {
  GeneratorConfig gen;
  gen.groups.push_back(test::group(Archetype::flat_small, 5, 30, 0, "Landmark Objects"));
  gen.groups.push_back(test::group(Archetype::flat_small, 20, 6, 0, "Paintings"));
  auto config = test::small_pipeline(6);
  const auto data = generate_dataset(gen, 6);
  Experiment e;
  e.database = data.database;
  e.vocabulary = run_vocab_stage(e.database, config);
  e.index = run_index_stage(e.database, e.vocabulary);
  e.graph = run_graph_stage(e.database, e.vocabulary, e.index, config);

  std::set<std::string> large_objects;
  for (const auto& o : data.truth.objects)
    if (data.truth.members(o.id).size() >= 10) large_objects.insert(o.id);

  bool all = true;
  std::string detail;
  const IconoidShift shift(e.graph, config.clustering);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto seeds = draw_seeds(e.graph, e.graph.node_count(), 100 + s);
    std::map<std::size_t, std::pair<std::string, bool>> seen;  // iconoid -> (object, big enough)
    std::vector<std::pair<std::size_t, std::size_t>> counts;    // (large, small) per prefix
    std::set<std::string> large, small;
    for (const auto& seed : seeds) {
      const auto icon = shift.converge(e.graph.require(seed));
      if (!seen.contains(icon)) {
        const auto c = shift.cluster_at(icon, seed);
        const auto* img = data.truth.image(c.iconoid);
        seen[icon] = {img && img->object ? *img->object : "", !c.below_min_size};
        if (img && img->object && !c.below_min_size)
          (large_objects.contains(*img->object) ? large : small).insert(*img->object);
      }
      counts.emplace_back(large.size(), small.size());
    }
    std::size_t large_sat = 0, small_sat = 0;
    for (std::size_t k = counts.size(); k-- > 0;) {
      if (counts[k].first == counts.back().first) large_sat = k + 1;
      if (counts[k].second == counts.back().second) small_sat = k + 1;
    }
    all = all && large_sat < small_sat;
    detail += fmt(" seed%llu:%zu<%zu", static_cast<unsigned long long>(100 + s), large_sat, small_sat);
  }
  return {all, "large vs small saturation (seeds):" + detail};
}

// 7 -------------------------------------------------------------------------
std::string alias_of(const std::map<std::string, std::string>& aliases, const std::string& object) {
  auto it = aliases.find(object);
  return it == aliases.end() ? "" : it->second;
}

Outcome scoring_separation() {
  std::string detail;
  bool pass = true;

  {  // facade + detail
    GeneratorConfig gen;
    auto facade = test::group(Archetype::flat_large, 1, 40, 0, "Landmark Buildings", 400);
    auto detail_group = test::group(Archetype::facade_detail, 1, 10, 6, "Building Details");
    detail_group.parent_group = 0;
    gen.groups = {facade, detail_group};
    auto config = test::small_pipeline(71);
    const auto e = test::experiment_from(gen, config);
    const auto aliases = cluster_aliases(e.clusters, *e.truth);
    RecognitionEngine engine(e.database, e.vocabulary, e.graph, e.clusters, config.recognition);
    std::size_t size_facade = 0, overlap_detail = 0;
    for (const auto& q : e.queries.images) {
      const auto qobj = *e.truth->image(q.id)->object;
      const auto parent = *e.truth->object(qobj)->parent;
      const auto s = engine.recognize(q, ScoringMethod::size);
      const auto o = engine.recognize(q, ScoringMethod::overlap);
      size_facade += !s.empty() && alias_of(aliases, s[0].object_id) == parent;
      overlap_detail += !o.empty() && alias_of(aliases, o[0].object_id) == qobj;
    }
    const auto n = e.queries.size();
    pass = pass && n > 0 && size_facade == n && overlap_detail == n;
    detail += fmt("detail queries: size->facade %zu/%zu, overlap->detail %zu/%zu", size_facade, n, overlap_detail, n);
  }
  auto center_vs_voting = [&](GeneratorConfig gen, std::uint64_t seed) {
    auto config = test::small_pipeline(seed);
    const auto e = test::experiment_from(gen, config);
    RecognitionEngine engine(e.database, e.vocabulary, e.graph, e.clusters, config.recognition);
    const auto rate = truth_rater(*e.truth, e.clusters);
    const auto center = evaluate_recognition(recognize_all(e.queries, engine, ScoringMethod::center), rate);
    const auto voting = evaluate_recognition(recognize_all(e.queries, engine, ScoringMethod::voting), rate);
    return std::pair{center.overall.good1, voting.overall.good1};
  };
  {  // flat objects
    GeneratorConfig gen;
    gen.groups.push_back(test::group(Archetype::flat_small, 10, 12, 3, "Paintings"));
    const auto [c, v] = center_vs_voting(gen, 72);
    pass = pass && std::abs(c - v) <= 10;
    detail += fmt("; flat: center %.1f voting %.1f", c, v);
  }
  {  // 3D objects
    GeneratorConfig gen;
    auto g = test::group(Archetype::solid_3d, 8, 60, 8, "Sculptures");
    NoiseConfig noise;
    noise.view_window_deg = 25;
    g.noise = noise;
    gen.groups.push_back(g);
    const auto [c, v] = center_vs_voting(gen, 73);
    pass = pass && v - c >= 20;
    detail += fmt("; 3D: center %.1f voting %.1f", c, v);
  }
  return {pass, detail};
}

// 8 -------------------------------------------------------------------------
std::size_t exhaustive_cover(const std::vector<std::vector<std::size_t>>& covers, std::size_t n) {
  std::vector<std::uint32_t> mask(covers.size(), 0);
  for (std::size_t u = 0; u < covers.size(); ++u)
    for (auto v : covers[u]) mask[u] |= 1u << v;
  const std::uint32_t full = (1u << n) - 1;
  std::size_t best = n;
  for (std::uint32_t s = 1; s < (1u << covers.size()); ++s) {
    const auto size = static_cast<std::size_t>(__builtin_popcount(s));
    if (size >= best) continue;
    std::uint32_t cov = 0;
    for (std::size_t u = 0; u < covers.size(); ++u)
      if (s >> u & 1u) cov |= mask[u];
    if (cov == full) best = size;
  }
  return best;
}

Outcome compaction_validity() {
  std::mt19937_64 rng(8);
  std::size_t violations = 0, bound_failures = 0, instances = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 15)(rng);
    std::vector<std::tuple<int, int, int>> edges;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.4)
          edges.emplace_back(static_cast<int>(a), static_cast<int>(b),
                             std::uniform_int_distribution<int>(15, 80)(rng));
    const auto graph = test::weighted_graph(n, edges);
    const auto cluster = test::whole_cluster(graph, rng() % n);
    const std::vector<ObjectCluster> clusters{cluster};
    auto fine_cfg = test::small_pipeline(8);
    const auto fine = fine_clusters(graph, fine_cfg);
    for (int theta : {15, 30, 50}) {
      for (auto m : {CompactionMethod::complete_link, CompactionMethod::kvq, CompactionMethod::dominating_set,
                     CompactionMethod::fine_iconoids, CompactionMethod::random}) {
        CompactionConfig cc;
        cc.method = m;
        cc.threshold = cc.radius = theta;
        cc.rng_seed = static_cast<std::uint64_t>(t);
        const auto kept = compact_clusters(clusters, graph, cc, fine).front();
        const bool has_iconoid = std::binary_search(kept.begin(), kept.end(), cluster.iconoid);
        bool ok = has_iconoid && !kept.empty();
        for (const auto& k : kept) ok = ok && cluster.contains(k);
        if (m == CompactionMethod::complete_link || m == CompactionMethod::kvq ||
            m == CompactionMethod::dominating_set)
          ok = ok && covers_all(cluster, graph, kept, theta);
        violations += !ok;
      }
      std::vector<std::vector<std::size_t>> covers(n);
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v)
          if (u == v || graph.inliers(u, v) >= theta) covers[u].push_back(v);
      const auto greedy = greedy_set_cover(covers, n).size();
      const auto opt = exhaustive_cover(covers, n);
      ++instances;
      bound_failures += static_cast<double>(greedy) > (1 + std::log(static_cast<double>(n))) * static_cast<double>(opt);
    }
  }
  return {violations == 0 && bound_failures == 0,
          fmt("50 clusters x 3 thresholds x 5 methods: %zu cover violations; greedy bound failures %zu/%zu",
              violations, bound_failures, instances)};
}

// 9 -------------------------------------------------------------------------
Outcome compaction_tradeoff() {
  GeneratorConfig gen;
  gen.groups.push_back(test::group(Archetype::flat_small, 8, 20, 3, "Paintings"));
  auto solid = test::group(Archetype::solid_3d, 6, 30, 4, "Sculptures");
  NoiseConfig noise;
  noise.view_window_deg = 50;
  solid.noise = noise;
  gen.groups.push_back(solid);
  auto config = test::small_pipeline(9);
  config.tradeoff_methods = {CompactionMethod::dominating_set, CompactionMethod::fine_iconoids};
  config.tradeoff_thresholds = {15, 30, 50};
  const auto e = test::experiment_from(gen, config);
  const auto rate = truth_rater(*e.truth, e.clusters);
  const auto rows = run_tradeoff(e.database, e.queries, e.vocabulary, e.graph, e.clusters, rate, config);
  bool pass = true;
  std::string detail;
  auto good1 = [](const TradeoffRow& r, const std::string& cat) {
    auto it = r.report.per_category.find(cat);
    return it == r.report.per_category.end() ? 0.0 : it->second.good1;
  };
  // Random rows are means over draws; allow for float noise only.
  constexpr double eps = 1e-9;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& rnd = rows[i + 1];
    if (rnd.method != "random") continue;
    if (r.method == "dominating-set") {
      pass = pass && r.report.overall.good1 + eps >= rnd.report.overall.good1;
      detail += fmt("ds@%s kept %zu: %.1f vs random %.1f; ", r.param.c_str(), r.kept, r.report.overall.good1,
                    rnd.report.overall.good1);
    } else if (r.method == "fine-iconoids") {
      const double ff = good1(r, "Paintings"), rf = good1(rnd, "Paintings");
      const double f3 = good1(r, "Sculptures"), r3 = good1(rnd, "Sculptures");
      pass = pass && ff + eps >= rf && f3 <= r3 + 5;
      detail += fmt("fine kept %zu: flat %.1f vs %.1f, 3D %.1f vs %.1f", r.kept, ff, rf, f3, r3);
    }
  }
  return {pass, detail};
}

// 10 ------------------------------------------------------------------------
Outcome tag_desiderata() {
  Dataset db;
  ObjectCluster c;
  c.object_id = "c_a";
  auto add = [&](const std::string& id, const std::string& owner, std::vector<std::string> tags, bool in_c) {
    ImageRecord r;
    r.id = id;
    r.width = r.height = 100;
    r.owner = owner;
    r.tags = std::move(tags);
    db.images.push_back(r);
    if (in_c) c.support.push_back({id, 1.0});
  };
  for (int u = 0; u < 10; ++u) add(fmt("a%02d", u), fmt("user%d", u), {"Tour Eiffel"}, true);
  for (int k = 0; k < 50; ++k) add(fmt("s%02d", k), "spammer", {"myshots"}, true);
  std::sort(c.support.begin(), c.support.end(), [](auto& a, auto& b) { return a.id < b.id; });
  c.iconoid = c.support.front().id;
  const std::vector<ObjectCluster> clusters{c};
  TagMiningConfig config;
  config.min_cluster_size = 1;
  const auto stats = compute_tag_stats(clusters, db, config);
  const auto scores = score_tags(0, clusters, stats);
  double correct = -1, spam = -1;
  for (const auto& s : scores) {
    if (s.tag == "tour eiffel") correct = s.score;
    if (s.tag == "myshots") spam = s.score;
  }
  ImageRecord img;
  img.tags = {"Paris", "Louvre", "DSC002342.JPG"};
  const auto pre = preprocess_tags(img, config);
  const bool cleaned = pre == std::vector<std::string>{"louvre"};
  return {spam < correct && cleaned,
          fmt("spam score %.2f < correct %.2f; {Paris, Louvre, DSC002342.JPG} -> %zu tag(s)%s", spam, correct,
              pre.size(), cleaned ? " [louvre]" : "")};
}

// 11 ------------------------------------------------------------------------
Outcome metric_algebra() {
  std::mt19937_64 rng(11);
  std::size_t failures = 0;
  const std::vector<std::string> cats{"Paintings", "Sculptures", "Murals", "Windows"};
  for (int t = 0; t < 1000; ++t) {
    std::vector<QueryOutcome> outs(rng() % 60);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      outs[i].query_id = fmt("q%03zu", i);
      outs[i].category = cats[rng() % cats.size()];
      outs[i].ratings.resize(rng() % 6);
      for (auto& r : outs[i].ratings) r = static_cast<Rating>(rng() % 3);
    }
    const auto rep = aggregate(outs);
    bool ok = monotone(rep.overall);
    for (const auto& [c, m] : rep.per_category) ok = ok && monotone(m);
    for (auto field : {&Metrics::good1, &Metrics::ok1, &Metrics::good3, &Metrics::ok3}) {
      double weighted = 0;
      std::size_t n = 0;
      for (const auto& [c, m] : rep.per_category) {
        weighted += m.*field * static_cast<double>(m.query_count);
        n += m.query_count;
      }
      const double mean = n ? weighted / static_cast<double>(n) : 0.0;
      ok = ok && n == rep.overall.query_count && std::abs(mean - rep.overall.*field) < 1e-9;
    }
    failures += !ok;
  }
  return {failures == 0, fmt("1000 randomized fixtures, %zu violations", failures)};
}

// 12 ------------------------------------------------------------------------
Outcome end_to_end_gap() {
  const auto t0 = std::chrono::steady_clock::now();
  auto run = [](GeneratorConfig gen, std::uint64_t seed) {
    auto config = test::small_pipeline(seed);
    const auto e = test::experiment_from(gen, config);
    const auto out = evaluate_experiment(e, truth_rater(*e.truth, e.clusters), config);
    return *out.end_to_end;
  };
  GeneratorConfig clean;
  clean.groups.push_back(test::group(Archetype::flat_small, 8, 14, 3, "Paintings"));
  clean.groups.push_back(test::group(Archetype::flat_large, 3, 16, 3, "Landmark Buildings", 300));
  const auto c = run(clean, 121);
  GeneratorConfig murals;
  auto m = test::group(Archetype::flat_small, 8, 14, 3, "Murals");
  m.tag_model = TagModel::generic;
  murals.groups.push_back(m);
  const auto mu = run(murals, 122);
  const double secs = seconds_since(t0);
  const double clean_gap = std::abs(c.overall_gap);
  return {clean_gap <= 2 && mu.overall_gap > 30 && secs < 300,
          fmt("clean: recognition %.1f semantic %.1f; murals: recognition %.1f semantic %.1f (gap %.1f); %.1fs",
              c.recognition.overall.good1, c.semantics.overall.good1, mu.recognition.overall.good1,
              mu.semantics.overall.good1, mu.overall_gap, secs)};
}

// 13 ------------------------------------------------------------------------
Outcome determinism() {
  const auto config = load_pipeline_config(fs::path(LMR_SOURCE_DIR) / "configs" / "demo.json");
  std::string reports[2];
  const std::size_t threads[2] = {1, 3};
  for (int i = 0; i < 2; ++i) {
    set_thread_count(threads[i]);
    Run run(test::temp_dir(fmt("determinism_%d", i)), config);
    run.end_to_end();
    reports[i] = run.report_json();
  }
  set_thread_count(0);
  return {reports[0] == reports[1] && reports[0].size() > 100,
          fmt("two end-to-end runs (1 and 3 threads): report.json %zu bytes, %s", reports[0].size(),
              reports[0] == reports[1] ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"retrieval oracle equivalence", retrieval_oracle},
      {"quantizer exactness", quantizer_exactness},
      {"homography recovery", homography_recovery},
      {"HoP exactness", hop_exactness},
      {"clustering recovery", clustering_recovery},
      {"seed-sweep trend", seed_sweep_trend},
      {"scoring-method separation", scoring_separation},
      {"compaction validity", compaction_validity},
      {"compaction tradeoff trend", compaction_tradeoff},
      {"tag-mining desiderata", tag_desiderata},
      {"metric algebra", metric_algebra},
      {"end-to-end gap reproduction", end_to_end_gap},
      {"determinism", determinism},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
