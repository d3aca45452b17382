#include "lmr/pipeline.hpp"

#include "lmr/dataset_io.hpp"
#include "lmr/digest.hpp"
#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

#include "json_util.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace lmr {

namespace fs = std::filesystem;
using detail::check_keys;
using detail::get_to;
using json = nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
void get_seed(const json& j, const char* key, T& out, bool& set) {
  if (j.contains(key)) {
    get_to(j, key, out);
    set = true;
  }
}

json metrics_json(const Metrics& m) {
  return {{"query_count", m.query_count}, {"good1", m.good1}, {"ok1", m.ok1},
          {"good3", m.good3},             {"ok3", m.ok3}};
}

json report_json_of(const MetricReport& r) {
  json j = metrics_json(r.overall);
  json per = json::object();
  for (const auto& [c, m] : r.per_category) per[c] = metrics_json(m);
  j["per_category"] = per;
  return j;
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

std::uint64_t content_digest(const fs::path& p) {
  if (!fs::is_directory(p)) return fnv1a(read_text(p));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = kFnvOffset;
  for (const auto& f : files) {
    h = fnv1a(f.filename().string(), h);
    h = fnv1a(read_text(f), h);
  }
  return h;
}

std::vector<std::size_t> default_sweep(std::size_t nodes) {
  std::vector<std::size_t> out;
  for (std::size_t s = 1; s < nodes; s = std::max(s + 1, s * 2)) out.push_back(s);
  out.push_back(nodes);
  return out;
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir,
                                     std::optional<std::uint64_t> rng_seed) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("pipeline config: ") + e.what(), e.byte);
  }
  check_keys(j,
             {"dataset", "vocabulary", "geometry", "graph", "clustering", "recognition", "compaction",
              "tags", "evaluation"},
             "config");
  PipelineConfig c;
  const json empty = json::object();
  auto section = [&](const char* key) -> const json& { return j.contains(key) ? j[key] : empty; };

  const auto& d = section("dataset");
  check_keys(d, {"generator", "generator_file", "seed", "database", "queries", "ground_truth"}, "dataset");
  if (d.contains("generator") && d.contains("generator_file"))
    throw ValidationError("dataset: give either 'generator' or 'generator_file'");
  if (d.contains("generator")) c.generator = parse_generator_config(d["generator"].dump());
  if (d.contains("generator_file"))
    c.generator = load_generator_config(resolve(base_dir, d["generator_file"].get<std::string>()));
  if (d.contains("seed")) c.generator_seed = d["seed"].get<std::uint64_t>();
  auto path_of = [&](const json& s, const char* key, std::optional<fs::path>& out) {
    if (s.contains(key) && !s[key].is_null()) {
      if (!s[key].is_string()) throw ValidationError(std::string("'") + key + "' must be a path string");
      out = resolve(base_dir, s[key].get<std::string>());
    }
  };
  path_of(d, "database", c.database_dir);
  path_of(d, "queries", c.queries_dir);
  path_of(d, "ground_truth", c.ground_truth_file);
  if (c.generator && (c.database_dir || c.queries_dir))
    throw ValidationError("dataset: a generator and ingested directories are mutually exclusive");
  if (!c.generator && !(c.database_dir && c.queries_dir))
    throw ValidationError("dataset: needs a generator or both 'database' and 'queries'");

  const auto& v = section("vocabulary");
  check_keys(v, {"size", "sample", "seed", "max_iterations"}, "vocabulary");
  get_to(v, "size", c.vocabulary_size);
  get_to(v, "sample", c.vocabulary_sample);
  get_to(v, "max_iterations", c.kmeans_iterations);
  if (v.contains("seed")) c.vocabulary_seed = v["seed"].get<std::uint64_t>();

  const auto& g = section("geometry");
  check_keys(g,
             {"ratio_test", "inlier_threshold", "verify_depth", "ransac_seed", "transfer_error_px",
              "confidence", "max_iterations", "min_model_inliers", "prefilter_neighbors",
              "prefilter_support", "prefilter_radius"},
             "geometry");
  auto& gc = c.geometry;
  get_to(g, "ratio_test", gc.ratio_test);
  get_to(g, "inlier_threshold", gc.inlier_threshold);
  get_to(g, "verify_depth", gc.verify_depth);
  get_seed(g, "ransac_seed", gc.ransac_seed, c.ransac_seed_set);
  get_to(g, "transfer_error_px", gc.transfer_error_px);
  get_to(g, "confidence", gc.confidence);
  get_to(g, "max_iterations", gc.max_iterations);
  get_to(g, "min_model_inliers", gc.min_model_inliers);
  get_to(g, "prefilter_neighbors", gc.prefilter_neighbors);
  get_to(g, "prefilter_support", gc.prefilter_support);
  get_to(g, "prefilter_radius", gc.prefilter_radius);
  if (gc.ratio_test <= 0 || gc.ratio_test > 1) throw ValidationError("geometry.ratio_test must be in (0,1]");
  if (gc.inlier_threshold < 4) throw ValidationError("geometry.inlier_threshold must be at least 4");

  const auto& gr = section("graph");
  check_keys(gr, {"retrieval_depth", "min_inliers"}, "graph");
  get_to(gr, "retrieval_depth", c.retrieval_depth);
  get_to(gr, "min_inliers", c.graph_min_inliers);

  const auto& cl = section("clustering");
  check_keys(cl,
             {"beta", "seeds", "rng_seed", "max_iterations", "exploration_floor", "min_support",
              "overlap_mode", "sweep", "large_size"},
             "clustering");
  auto& cc = c.clustering;
  get_to(cl, "beta", cc.beta);
  get_to(cl, "seeds", cc.seed_count);
  get_seed(cl, "rng_seed", cc.rng_seed, c.clustering_seed_set);
  get_to(cl, "max_iterations", cc.max_iterations);
  get_to(cl, "exploration_floor", cc.exploration_floor);
  get_to(cl, "min_support", cc.min_support);
  if (cl.contains("overlap_mode")) cc.overlap_mode = parse_overlap_mode(cl["overlap_mode"].get<std::string>());
  get_to(cl, "sweep", c.sweep_seed_counts);
  get_to(cl, "large_size", c.sweep_large_size);
  if (cc.beta <= 0 || cc.beta >= 1) throw ValidationError("clustering.beta must be in (0,1)");

  const auto& r = section("recognition");
  check_keys(r, {"method", "top_k", "include_small_clusters", "overlap_mode"}, "recognition");
  if (r.contains("method")) c.method = parse_method(r["method"].get<std::string>());
  get_to(r, "top_k", c.recognition.top_k);
  get_to(r, "include_small_clusters", c.recognition.include_small_clusters);
  if (r.contains("overlap_mode"))
    c.recognition.overlap_mode = parse_overlap_mode(r["overlap_mode"].get<std::string>());

  const auto& co = section("compaction");
  check_keys(co,
             {"method", "threshold", "radius", "fine_beta", "keep_fraction", "rng_seed",
              "tradeoff_methods", "tradeoff_thresholds", "random_draws"},
             "compaction");
  auto& cp = c.compaction;
  if (co.contains("method")) cp.method = parse_compaction_method(co["method"].get<std::string>());
  get_to(co, "threshold", cp.threshold);
  get_to(co, "radius", cp.radius);
  get_to(co, "fine_beta", cp.fine_beta);
  get_to(co, "keep_fraction", cp.keep_fraction);
  get_seed(co, "rng_seed", cp.rng_seed, c.compaction_seed_set);
  if (co.contains("tradeoff_methods"))
    for (const auto& m : co["tradeoff_methods"]) c.tradeoff_methods.push_back(parse_compaction_method(m.get<std::string>()));
  get_to(co, "tradeoff_thresholds", c.tradeoff_thresholds);
  get_to(co, "random_draws", c.random_draws);
  if (c.random_draws == 0) throw ValidationError("compaction.random_draws must be at least 1");

  const auto& t = section("tags");
  check_keys(t, {"stoplist", "stoplist_terms", "min_cluster_size", "top_k"}, "tags");
  if (t.contains("stoplist_terms")) {
    c.tags.stoplist.clear();
    for (const auto& term : t["stoplist_terms"]) c.tags.stoplist.push_back(normalize_tag(term.get<std::string>()));
  }
  // A stoplist file takes precedence over inline terms.
  path_of(t, "stoplist", c.stoplist_file);
  if (c.stoplist_file) c.tags.stoplist = load_stoplist(*c.stoplist_file);
  get_to(t, "min_cluster_size", c.tags.min_cluster_size);
  get_to(t, "top_k", c.tags.top_k);

  const auto& e = section("evaluation");
  check_keys(e, {"annotations", "group_queries", "grouping", "candidate_filter"}, "evaluation");
  path_of(e, "annotations", c.annotations_file);
  get_to(e, "group_queries", c.group_queries);
  get_to(e, "candidate_filter", c.candidate_filter);
  if (e.contains("grouping")) {
    const auto& q = e["grouping"];
    check_keys(q, {"min_inliers", "min_overlap", "retrieval_depth"}, "evaluation.grouping");
    get_to(q, "min_inliers", c.grouping.min_inliers);
    get_to(q, "min_overlap", c.grouping.min_overlap);
    get_to(q, "retrieval_depth", c.grouping.retrieval_depth);
  }

  if (rng_seed)
    apply_rng_seed(c, *rng_seed);
  else
    require_seeds(c);
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& file, std::optional<std::uint64_t> rng_seed) {
  return parse_pipeline_config(read_text(file), file.parent_path(), rng_seed);
}

void apply_rng_seed(PipelineConfig& c, std::uint64_t seed) {
  if (c.generator) c.generator_seed = derive_seed(seed, 1);
  c.vocabulary_seed = derive_seed(seed, 2);
  c.geometry.ransac_seed = derive_seed(seed, 3);
  c.clustering.rng_seed = derive_seed(seed, 4);
  c.compaction.rng_seed = derive_seed(seed, 5);
  c.ransac_seed_set = c.clustering_seed_set = c.compaction_seed_set = true;
}

void require_seeds(const PipelineConfig& c) {
  auto missing = [](const char* key) {
    throw ValidationError(std::string("missing seed '") + key + "' (or pass --rng-seed)");
  };
  if (c.generator && !c.generator_seed) missing("dataset.seed");
  if (!c.vocabulary_seed) missing("vocabulary.seed");
  if (!c.ransac_seed_set) missing("geometry.ransac_seed");
  if (!c.clustering_seed_set) missing("clustering.rng_seed");
  if (!c.compaction_seed_set) missing("compaction.rng_seed");
}

namespace {

json config_to_json(const PipelineConfig& c) {
  auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json d = json::object();
  if (c.generator) {
    d["generator"] = json::parse(generator_config_json(*c.generator));
    d["seed"] = c.generator_seed.value_or(0);
  } else {
    d["database"] = opt_path(c.database_dir);
    d["queries"] = opt_path(c.queries_dir);
    d["ground_truth"] = opt_path(c.ground_truth_file);
  }
  const auto& g = c.geometry;
  std::vector<std::string> methods;
  for (auto m : c.tradeoff_methods) methods.push_back(to_string(m));
  json stoplist = c.stoplist_file ? json(c.stoplist_file->string()) : json(nullptr);
  return {
      {"dataset", d},
      {"vocabulary",
       {{"size", c.vocabulary_size}, {"sample", c.vocabulary_sample}, {"seed", c.vocabulary_seed.value_or(0)},
        {"max_iterations", c.kmeans_iterations}}},
      {"geometry",
       {{"ratio_test", g.ratio_test},
        {"inlier_threshold", g.inlier_threshold},
        {"verify_depth", g.verify_depth},
        {"ransac_seed", g.ransac_seed},
        {"transfer_error_px", g.transfer_error_px},
        {"confidence", g.confidence},
        {"max_iterations", g.max_iterations},
        {"min_model_inliers", g.min_model_inliers},
        {"prefilter_neighbors", g.prefilter_neighbors},
        {"prefilter_support", g.prefilter_support},
        {"prefilter_radius", g.prefilter_radius}}},
      {"graph", {{"retrieval_depth", c.retrieval_depth}, {"min_inliers", c.graph_min_inliers}}},
      {"clustering",
       {{"beta", c.clustering.beta},
        {"seeds", c.clustering.seed_count},
        {"rng_seed", c.clustering.rng_seed},
        {"max_iterations", c.clustering.max_iterations},
        {"exploration_floor", c.clustering.exploration_floor},
        {"min_support", c.clustering.min_support},
        {"overlap_mode", to_string(c.clustering.overlap_mode)},
        {"sweep", c.sweep_seed_counts},
        {"large_size", c.sweep_large_size}}},
      {"recognition",
       {{"method", to_string(c.method)},
        {"top_k", c.recognition.top_k},
        {"include_small_clusters", c.recognition.include_small_clusters},
        {"overlap_mode", to_string(c.recognition.overlap_mode)}}},
      {"compaction",
       {{"method", to_string(c.compaction.method)},
        {"threshold", c.compaction.threshold},
        {"radius", c.compaction.radius},
        {"fine_beta", c.compaction.fine_beta},
        {"keep_fraction", c.compaction.keep_fraction},
        {"rng_seed", c.compaction.rng_seed},
        {"tradeoff_methods", methods},
        {"tradeoff_thresholds", c.tradeoff_thresholds},
        {"random_draws", c.random_draws}}},
      {"tags",
       {{"stoplist", stoplist},
        {"stoplist_terms", c.tags.stoplist},
        {"min_cluster_size", c.tags.min_cluster_size},
        {"top_k", c.tags.top_k}}},
      {"evaluation",
       {{"annotations", opt_path(c.annotations_file)},
        {"group_queries", c.group_queries},
        {"grouping",
         {{"min_inliers", c.grouping.min_inliers},
          {"min_overlap", c.grouping.min_overlap},
          {"retrieval_depth", c.grouping.retrieval_depth}}},
        {"candidate_filter", c.candidate_filter}}},
  };
}

}  // namespace

std::string pipeline_config_json(const PipelineConfig& config) { return config_to_json(config).dump(2); }

std::string config_digest(const PipelineConfig& config) {
  return hex64(fnv1a(config_to_json(config).dump()));
}

// ---------------------------------------------------------------------------
// In-memory stages

Vocabulary run_vocab_stage(const Dataset& database, const PipelineConfig& config) {
  const auto seed = config.vocabulary_seed.value_or(0);
  const auto sample = sample_descriptors(database, config.vocabulary_sample, seed);
  KMeansOptions options;
  options.max_iterations = config.kmeans_iterations;
  return train_vocab(sample, config.vocabulary_size, seed, options);
}

InvertedIndex run_index_stage(const Dataset& database, const Vocabulary& vocabulary) {
  WordCorpus corpus;
  corpus.words.resize(database.size());
  for (const auto& img : database.images) corpus.ids.push_back(img.id);
  parallel_for(database.size(), [&](std::size_t i) {
    corpus.words[i] = vocabulary.quantize(database.images[i].descriptors);
  });
  return index_corpus(corpus, vocabulary.size());
}

MatchingGraph run_graph_stage(const Dataset& database, const Vocabulary& vocabulary,
                              const InvertedIndex& index, const PipelineConfig& config) {
  std::vector<WeightedBovw> bovw(database.size());
  parallel_for(database.size(), [&](std::size_t i) {
    bovw[i] = build_bovw(vocabulary.quantize(database.images[i].descriptors), index.idf());
  });
  return build_graph(database, index, bovw, config.geometry, config.retrieval_depth);
}

std::vector<ObjectCluster> run_cluster_stage(const MatchingGraph& graph, const PipelineConfig& config) {
  const auto seeds = draw_seeds(graph, config.clustering.seed_count, config.clustering.rng_seed);
  return run_clustering(graph, config.clustering, seeds);
}

SweepReport run_sweep_stage(const MatchingGraph& graph, const Dataset& database,
                            const PipelineConfig& config) {
  std::unordered_map<ImageId, std::string> category;
  for (const auto& img : database.images) category[img.id] = category_of(img);
  const auto counts =
      config.sweep_seed_counts.empty() ? default_sweep(graph.node_count()) : config.sweep_seed_counts;
  return seed_sweep(graph, config.clustering, counts, category, config.sweep_large_size);
}

std::vector<ClusterNames> run_tags_stage(std::span<const ObjectCluster> clusters, const Dataset& database,
                                         const PipelineConfig& config) {
  return name_clusters(clusters, database, config.tags);
}

std::vector<ObjectCluster> fine_clusters(const MatchingGraph& graph, const PipelineConfig& config) {
  auto fine = config.clustering;
  fine.beta = config.compaction.fine_beta;
  fine.min_support = 1;
  std::vector<ImageId> seeds;
  for (const auto& n : graph.nodes()) seeds.push_back(n.id);
  return run_clustering(graph, fine, seeds);
}

namespace {

void accumulate(Metrics& sum, const Metrics& m) {
  sum.query_count = m.query_count;
  sum.good1 += m.good1;
  sum.ok1 += m.ok1;
  sum.good3 += m.good3;
  sum.ok3 += m.ok3;
}

void scale(Metrics& m, double n) {
  m.good1 /= n;
  m.ok1 /= n;
  m.good3 /= n;
  m.ok3 /= n;
}

/// Mean metrics over rows that differ only in their random draw.
TradeoffRow average_rows(std::vector<TradeoffRow> draws) {
  TradeoffRow out = draws.front();
  out.report = {};
  const double n = static_cast<double>(draws.size());
  double kept = 0, postings = 0;
  for (const auto& d : draws) {
    accumulate(out.report.overall, d.report.overall);
    for (const auto& [c, m] : d.report.per_category) accumulate(out.report.per_category[c], m);
    kept += static_cast<double>(d.kept);
    postings += static_cast<double>(d.index_size);
  }
  scale(out.report.overall, n);
  for (auto& [c, m] : out.report.per_category) scale(m, n);
  out.kept = static_cast<std::size_t>(std::lround(kept / n));
  out.index_size = static_cast<std::size_t>(std::lround(postings / n));
  return out;
}

}  // namespace

std::vector<TradeoffRow> run_tradeoff(const Dataset& database, const Dataset& queries,
                                      const Vocabulary& vocabulary, const MatchingGraph& graph,
                                      std::span<const ObjectCluster> clusters, const Rater& rate,
                                      const PipelineConfig& config) {
  std::vector<ObjectCluster> all(clusters.begin(), clusters.end());
  auto evaluate = [&](std::string method, std::string param, std::vector<std::vector<ImageId>> reps) {
    RecognitionEngine engine(database, vocabulary, graph, all, config.recognition, std::move(reps));
    const auto results = recognize_all(queries, engine, config.method);
    TradeoffRow row;
    row.method = std::move(method);
    row.param = std::move(param);
    row.kept = engine.representative_index().size();
    row.index_size = engine.representative_index().posting_count();
    row.report = evaluate_recognition(results, rate);
    return row;
  };

  std::vector<TradeoffRow> rows;
  rows.push_back(evaluate("none", "-", {}));
  const auto original = rows.front().kept;

  auto methods = config.tradeoff_methods;
  if (methods.empty())
    methods = {CompactionMethod::complete_link, CompactionMethod::kvq, CompactionMethod::dominating_set,
               CompactionMethod::fine_iconoids};
  auto thresholds = config.tradeoff_thresholds;
  if (thresholds.empty()) thresholds = {15, 30, 50};

  std::vector<ObjectCluster> fine;
  char buf[64];
  for (auto m : methods) {
    if (m == CompactionMethod::none) continue;
    std::vector<std::pair<std::string, CompactionConfig>> variants;
    auto base = config.compaction;
    base.method = m;
    if (m == CompactionMethod::fine_iconoids) {
      if (fine.empty()) fine = fine_clusters(graph, config);
      std::snprintf(buf, sizeof buf, "beta=%.2f", base.fine_beta);
      variants.emplace_back(buf, base);
    } else if (m == CompactionMethod::random) {
      std::snprintf(buf, sizeof buf, "fraction=%.2f", base.keep_fraction);
      variants.emplace_back(buf, base);
    } else {
      for (int t : thresholds) {
        auto v = base;
        v.threshold = v.radius = t;
        variants.emplace_back(std::to_string(t), v);
      }
    }
    for (const auto& [param, cc] : variants) {
      auto kept = compact_clusters(clusters, graph, cc, fine);
      rows.push_back(evaluate(to_string(m), param, kept));
      if (m == CompactionMethod::random) continue;
      std::vector<TradeoffRow> draws;
      for (std::size_t d = 0; d < config.random_draws; ++d)
        draws.push_back(evaluate("random", to_string(m) + "@" + param,
                                 random_matching(clusters, kept, derive_seed(config.compaction.rng_seed, d))));
      rows.push_back(average_rows(std::move(draws)));
    }
  }
  for (auto& r : rows) r.original = original;
  return rows;
}

Experiment build_experiment(Dataset database, Dataset queries, std::optional<GroundTruth> truth,
                            const PipelineConfig& config) {
  Experiment e;
  e.database = std::move(database);
  e.queries = std::move(queries);
  e.truth = std::move(truth);
  e.vocabulary = run_vocab_stage(e.database, config);
  e.index = run_index_stage(e.database, e.vocabulary);
  e.graph = run_graph_stage(e.database, e.vocabulary, e.index, config);
  e.clusters = run_cluster_stage(e.graph, config);
  e.names = run_tags_stage(e.clusters, e.database, config);
  return e;
}

Rater make_rater(const Experiment& e, const std::vector<RelevanceAnnotation>* annotations) {
  if (annotations) {
    std::map<std::string, std::string> aliases;
    if (e.truth) aliases = cluster_aliases(e.clusters, *e.truth);
    return annotation_rater(*annotations, std::move(aliases));
  }
  if (!e.truth) throw ValidationError("no annotations and no ground truth to rate recognition results");
  return truth_rater(*e.truth, e.clusters);
}

EvaluationOutcome evaluate_experiment(const Experiment& e, const Rater& rate, const PipelineConfig& config) {
  EvaluationOutcome out;
  RecognitionEngine engine(e.database, e.vocabulary, e.graph, e.clusters, config.recognition);

  Rater rater = rate;
  if (config.group_queries || config.candidate_filter) {
    const auto groups = group_queries(e.queries, e.vocabulary, config.geometry, config.grouping);
    out.query_groups = groups.size();
    if (config.candidate_filter) {
      auto candidates = std::make_shared<std::map<ImageId, std::set<std::string>>>();
      for (const auto& g : groups) {
        const auto set = candidate_filter(g, e.queries, engine);
        for (const auto& q : g.members) (*candidates)[q] = set;
      }
      rater = [rate, candidates](const ImageId& q, const std::string& object) {
        auto it = candidates->find(q);
        if (it == candidates->end() || !it->second.contains(object)) return Rating::bad;
        return rate(q, object);
      };
    }
  }

  out.results = recognize_all_methods(e.queries, engine);
  for (const auto& [m, results] : out.results) out.recognition[m] = evaluate_recognition(results, rater);
  if (e.truth) {
    auto semantics = evaluate_semantics(out.results.at(config.method), e.names, *e.truth);
    out.end_to_end = combine(out.recognition.at(config.method), std::move(semantics));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run directory

namespace {

const std::map<std::string, std::vector<std::string>>& stage_sections() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"generate", {"dataset"}},
      {"ingest", {"dataset"}},
      {"vocab", {"dataset", "vocabulary"}},
      {"index", {"dataset", "vocabulary"}},
      {"graph", {"dataset", "vocabulary", "geometry", "graph"}},
      {"cluster", {"dataset", "vocabulary", "geometry", "graph", "clustering"}},
      {"seeds-sweep", {"dataset", "vocabulary", "geometry", "graph", "clustering"}},
      {"tags", {"dataset", "vocabulary", "geometry", "graph", "clustering", "tags"}},
      {"compact",
       {"dataset", "vocabulary", "geometry", "graph", "clustering", "recognition", "compaction", "evaluation"}},
      {"recognize", {"dataset", "vocabulary", "geometry", "graph", "clustering", "recognition"}},
      {"evaluate",
       {"dataset", "vocabulary", "geometry", "graph", "clustering", "recognition", "tags", "evaluation"}},
  };
  return s;
}

json cluster_summary(std::span<const ObjectCluster> clusters, std::size_t nodes) {
  std::size_t usable = 0, covered = 0;
  std::set<ImageId> members;
  for (const auto& c : clusters) {
    if (!c.below_min_size) ++usable;
    for (const auto& m : c.support) members.insert(m.id);
  }
  covered = members.size();
  return {{"clusters", clusters.size()}, {"clusters_min_size", usable}, {"images_covered", covered},
          {"graph_nodes", nodes}};
}

}  // namespace

Run::Run(fs::path dir, PipelineConfig config) : dir_(std::move(dir)), config_(std::move(config)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create run directory " + dir_.string() + ": " + ec.message());
  load_manifest();
}

void Run::log(const std::string& stage, const std::string& message) const {
  std::cerr << "lmr[" << stage << "] " << message << '\n';
}

std::string Run::stage_digest(const std::string& stage) const {
  const auto full = config_to_json(config_);
  json part = json::object();
  for (const auto& s : stage_sections().at(stage)) part[s] = full[s];
  return hex64(fnv1a(part.dump()));
}

void Run::load_manifest() {
  const auto file = path("run_manifest.json");
  if (fs::exists(file)) {
    manifest_text_ = read_text(file);
    try {
      auto m = json::parse(manifest_text_);
      if (m.value("format", "") != "lmr-run") throw FormatError("run_manifest.json: not an lmr run manifest", 0);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("run_manifest.json: ") + e.what(), e.byte);
    }
  } else {
    manifest_text_ = json{{"format", "lmr-run"}, {"version", 1}, {"artifacts", json::object()}}.dump();
  }
}

void Run::save_manifest() const {
  auto m = json::parse(manifest_text_);
  m["config_digest"] = config_digest(config_);
  write_text(path("run_manifest.json"), m.dump(2) + "\n");
  write_text(path("config.json"), pipeline_config_json(config_) + "\n");
}

void Run::record(const std::string& artifact, const std::string& stage) {
  auto m = json::parse(manifest_text_);
  const auto digest = hex64(content_digest(path(artifact)));
  m["artifacts"][artifact] = {{"stage", stage}, {"config_digest", stage_digest(stage)}, {"digest", digest}};
  manifest_text_ = m.dump();
  save_manifest();
  log(stage, "wrote " + artifact + " digest=" + digest);
}

fs::path Run::require(const std::string& artifact, const std::string& stage) const {
  const auto p = path(artifact);
  if (!fs::exists(p))
    throw DependencyError("missing artifact '" + artifact + "' in " + dir_.string() + ": run `lmr " + stage +
                              "` first",
                          stage);
  const auto m = json::parse(manifest_text_);
  const auto& arts = m["artifacts"];
  if (!arts.contains(artifact)) {
    log(stage, "warning: " + artifact + " is not recorded in run_manifest.json");
    return p;
  }
  const auto& entry = arts[artifact];
  const auto producer = entry.value("stage", stage);
  if (stage_sections().contains(producer) && entry.value("config_digest", "") != stage_digest(producer))
    log(producer, "warning: " + artifact + " was produced under a different configuration");
  if (entry.value("digest", "") != hex64(content_digest(p)))
    log(producer, "warning: " + artifact + " was modified after it was written");
  return p;
}

void Run::merge_report(const std::string& key, const std::string& json_text) {
  const auto file = path("report.json");
  json report = json::object();
  if (fs::exists(file)) {
    try {
      report = json::parse(read_text(file));
    } catch (const json::parse_error&) {
      report = json::object();
    }
  }
  report[key] = json::parse(json_text);
  report["config_digest"] = config_digest(config_);
  write_text(file, report.dump(2) + "\n");
}

std::string Run::report_json() const {
  const auto file = path("report.json");
  return fs::exists(file) ? read_text(file) : std::string("{}\n");
}

static std::string dataset_stage(const PipelineConfig& c) { return c.generator ? "generate" : "ingest"; }

Dataset Run::load_database() const {
  return load_dataset(require("database", dataset_stage(config_))).read_all();
}

Dataset Run::load_queries() const {
  return load_dataset(require("queries", dataset_stage(config_))).read_all();
}

std::optional<GroundTruth> Run::load_truth() const {
  const auto p = path("ground_truth.jsonl");
  if (!fs::exists(p)) return std::nullopt;
  return load_ground_truth(require("ground_truth.jsonl", dataset_stage(config_)));
}

void Run::generate() {
  if (!config_.generator) throw ValidationError("config has no generator section; use `lmr ingest`");
  log("generate", "seed=" + std::to_string(config_.generator_seed.value_or(0)));
  const auto data = generate_dataset(*config_.generator, config_.generator_seed.value_or(0));
  save_dataset(path("database"), data.database);
  save_dataset(path("queries"), data.queries);
  save_ground_truth(path("ground_truth.jsonl"), data.truth);
  save_annotations(path("annotations.csv"), data.truth.annotations());
  for (const char* a : {"database", "queries", "ground_truth.jsonl", "annotations.csv"}) record(a, "generate");
  merge_report("dataset", json{{"images", data.database.size()},
                               {"queries", data.queries.size()},
                               {"objects", data.truth.objects.size()}}
                              .dump());
}

void Run::ingest() {
  if (!config_.database_dir || !config_.queries_dir)
    throw ValidationError("config has no dataset.database/dataset.queries; use `lmr generate`");
  const auto db = load_dataset(*config_.database_dir).read_all();
  const auto qs = load_dataset(*config_.queries_dir).read_all();
  if (db.descriptor_dim != qs.descriptor_dim)
    throw ValidationError("database and queries disagree on descriptor dimension");
  log("ingest", std::to_string(db.size()) + " images, " + std::to_string(qs.size()) + " queries");
  save_dataset(path("database"), db);
  save_dataset(path("queries"), qs);
  record("database", "ingest");
  record("queries", "ingest");
  if (config_.ground_truth_file) {
    save_ground_truth(path("ground_truth.jsonl"), load_ground_truth(*config_.ground_truth_file));
    record("ground_truth.jsonl", "ingest");
  }
  merge_report("dataset", json{{"images", db.size()}, {"queries", qs.size()}}.dump());
}

void Run::vocab() {
  const auto db = load_database();
  log("vocab", "K=" + std::to_string(config_.vocabulary_size) +
                   " seed=" + std::to_string(config_.vocabulary_seed.value_or(0)));
  save_vocab(path("vocab.bin"), run_vocab_stage(db, config_));
  record("vocab.bin", "vocab");
}

void Run::index() {
  const auto vocab = load_vocab(require("vocab.bin", "vocab"));
  const auto db = load_database();
  const auto index = run_index_stage(db, vocab);
  log("index", std::to_string(index.size()) + " images, " + std::to_string(index.posting_count()) + " postings");
  save_index(path("index.bin"), index);
  record("index.bin", "index");
}

void Run::graph() {
  const auto index = load_index(require("index.bin", "index"));
  const auto vocab = load_vocab(require("vocab.bin", "vocab"));
  const auto db = load_database();
  const auto graph = run_graph_stage(db, vocab, index, config_);
  log("graph", std::to_string(graph.node_count()) + " nodes, " + std::to_string(graph.edge_count()) +
                   " edges, threshold " + std::to_string(config_.geometry.inlier_threshold));
  save_graph(path("graph.jsonl"), graph);
  record("graph.jsonl", "graph");
  merge_report("graph", json{{"nodes", graph.node_count()}, {"edges", graph.edge_count()}}.dump());
}

void Run::prune(int min_inliers) {
  const auto graph = load_graph(require("graph.jsonl", "graph"));
  const auto pruned = prune_edges(graph, min_inliers);
  log("graph", "pruned to " + std::to_string(pruned.edge_count()) + " edges at " + std::to_string(min_inliers));
  save_graph(path("graph.jsonl"), pruned);
  record("graph.jsonl", "graph");
  merge_report("graph", json{{"nodes", pruned.node_count()}, {"edges", pruned.edge_count()},
                             {"min_inliers", min_inliers}}
                            .dump());
}

void Run::cluster() {
  const auto graph = load_graph(require("graph.jsonl", "graph"));
  log("cluster", "beta=" + std::to_string(config_.clustering.beta) + " seeds=" +
                     std::to_string(config_.clustering.seed_count) +
                     " rng_seed=" + std::to_string(config_.clustering.rng_seed));
  const auto clusters = run_cluster_stage(graph, config_);
  save_clusters(path("clusters.jsonl"), clusters);
  record("clusters.jsonl", "cluster");
  merge_report("clusters", cluster_summary(clusters, graph.node_count()).dump());
}

void Run::seeds_sweep() {
  const auto graph = load_graph(require("graph.jsonl", "graph"));
  const auto db = load_database();
  const auto sweep = run_sweep_stage(graph, db, config_);
  std::ofstream csv(path("sweep.csv"), std::ios::trunc);
  if (!csv) throw IoError("cannot write sweep.csv");
  csv << "seeds,clusters,clusters_min_size,images_covered,large_clusters,small_clusters\n";
  json rows = json::array();
  for (const auto& r : sweep.rows) {
    csv << r.seed_count << ',' << r.clusters_found << ',' << r.clusters_min_size << ',' << r.images_covered
        << ',' << r.large_clusters << ',' << r.small_clusters << '\n';
    rows.push_back({{"seeds", r.seed_count},
                    {"clusters", r.clusters_found},
                    {"clusters_min_size", r.clusters_min_size},
                    {"images_covered", r.images_covered},
                    {"large_clusters", r.large_clusters},
                    {"small_clusters", r.small_clusters},
                    {"per_category", r.per_category}});
  }
  csv.close();
  record("sweep.csv", "seeds-sweep");
  merge_report("seed_sweep", json{{"rows", rows},
                                  {"large_saturation", sweep.large_saturation()},
                                  {"small_saturation", sweep.small_saturation()}}
                                 .dump());
}

void Run::tags() {
  const auto clusters = load_clusters(require("clusters.jsonl", "cluster"));
  const auto db = load_database();
  const auto names = run_tags_stage(clusters, db, config_);
  save_tags_csv(path("tags.csv"), names);
  record("tags.csv", "tags");
  json top = json::object();
  for (const auto& n : names)
    top[n.cluster] = n.top.empty() ? json(nullptr) : json(n.top.front().tag);
  merge_report("tags", json{{"named_clusters", names.size()}, {"top_tag", top}}.dump());
}

void Run::compact() {
  const auto clusters = load_clusters(require("clusters.jsonl", "cluster"));
  const auto graph = load_graph(require("graph.jsonl", "graph"));
  const auto vocab = load_vocab(require("vocab.bin", "vocab"));
  Experiment e;
  e.database = load_database();
  e.queries = load_queries();
  e.truth = load_truth();
  e.clusters = clusters;

  std::vector<ObjectCluster> fine;
  if (config_.compaction.method == CompactionMethod::fine_iconoids) fine = fine_clusters(graph, config_);
  const auto kept = compact_clusters(clusters, graph, config_.compaction, fine);
  save_kept(path("kept.jsonl"), clusters, kept);
  record("kept.jsonl", "compact");

  std::optional<std::vector<RelevanceAnnotation>> annotations;
  if (config_.annotations_file) annotations = load_annotations(*config_.annotations_file);
  const auto rate = make_rater(e, annotations ? &*annotations : nullptr);
  const auto rows = run_tradeoff(e.database, e.queries, vocab, graph, clusters, rate, config_);
  std::ofstream csv(path("tradeoff.csv"), std::ios::trunc);
  if (!csv) throw IoError("cannot write tradeoff.csv");
  csv << "method,param,kept,index_size,good1,ok1,good3,ok3\n";
  json jrows = json::array();
  char buf[160];
  for (const auto& r : rows) {
    const auto& m = r.report.overall;
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.2f,%.2f,%.2f,%.2f", r.kept, r.index_size, m.good1, m.ok1,
                  m.good3, m.ok3);
    csv << r.method << ',' << r.param << ',' << buf << '\n';
    jrows.push_back({{"method", r.method},
                     {"param", r.param},
                     {"kept", r.kept},
                     {"original", r.original},
                     {"index_size", r.index_size},
                     {"metrics", report_json_of(r.report)}});
  }
  csv.close();
  record("tradeoff.csv", "compact");
  merge_report("tradeoff", jrows.dump());
}

void Run::recognize(std::optional<ScoringMethod> method, std::optional<std::size_t> top_k,
                    const fs::path& queries_dir) {
  require("index.bin", "index");
  const auto clusters = load_clusters(require("clusters.jsonl", "cluster"));
  const auto graph = load_graph(require("graph.jsonl", "graph"));
  const auto vocab = load_vocab(require("vocab.bin", "vocab"));
  const auto db = load_database();
  const auto queries = queries_dir.empty() ? load_queries() : load_dataset(queries_dir).read_all();
  auto rc = config_.recognition;
  if (top_k) rc.top_k = *top_k;
  const auto m = method.value_or(config_.method);
  RecognitionEngine engine(db, vocab, graph, clusters, rc);
  const auto results = recognize_all(queries, engine, m);
  std::ofstream out(path("recognition.jsonl"), std::ios::trunc);
  if (!out) throw IoError("cannot write recognition.jsonl");
  for (const auto& r : results) {
    json objects = json::array();
    for (const auto& s : r.objects)
      objects.push_back({{"object_id", s.object_id}, {"score", s.score}, {"rank", s.rank}, {"verified", s.verified}});
    out << json{{"query", r.query_id}, {"method", to_string(m)}, {"objects", objects}}.dump() << '\n';
  }
  out.close();
  log("recognize", std::to_string(results.size()) + " queries, method " + to_string(m));
  record("recognition.jsonl", "recognize");
}

void Run::evaluate(std::optional<ScoringMethod> method, const fs::path& annotations_path) {
  require("index.bin", "index");
  Experiment e;
  e.clusters = load_clusters(require("clusters.jsonl", "cluster"));
  e.graph = load_graph(require("graph.jsonl", "graph"));
  e.vocabulary = load_vocab(require("vocab.bin", "vocab"));
  e.database = load_database();
  e.queries = load_queries();
  e.truth = load_truth();
  if (e.truth) e.names = load_tags_csv(require("tags.csv", "tags"));

  fs::path ann = annotations_path;
  if (ann.empty() && config_.annotations_file) ann = *config_.annotations_file;
  if (ann.empty() && !e.truth && fs::exists(path("annotations.csv"))) ann = path("annotations.csv");
  std::optional<std::vector<RelevanceAnnotation>> annotations;
  if (!ann.empty()) annotations = load_annotations(ann);
  const auto rate = make_rater(e, annotations ? &*annotations : nullptr);

  auto cfg = config_;
  if (method) cfg.method = *method;
  const auto outcome = evaluate_experiment(e, rate, cfg);
  json rec = json::object();
  for (const auto& [m, report] : outcome.recognition) {
    if (method && m != *method) continue;
    if (!monotone(report.overall)) throw Error("metric monotonicity violated for " + to_string(m));
    rec[to_string(m)] = report_json_of(report);
  }
  log("evaluate", "method " + to_string(cfg.method) + " good-1 " +
                      std::to_string(outcome.recognition.at(cfg.method).overall.good1));
  merge_report("recognition", rec.dump());
  if (config_.group_queries) merge_report("query_groups", json(outcome.query_groups).dump());
  if (outcome.end_to_end) {
    const auto& ee = *outcome.end_to_end;
    merge_report("end_to_end", json{{"method", to_string(cfg.method)},
                                    {"recognition", report_json_of(ee.recognition)},
                                    {"semantics", report_json_of(ee.semantics)},
                                    {"gap", ee.gap},
                                    {"overall_gap", ee.overall_gap}}
                                   .dump());
  }
  record("report.json", "evaluate");
}

std::vector<std::pair<ImageId, std::vector<RankedMatch>>> Run::query_index(const fs::path& features_dir,
                                                                        std::size_t k) const {
  const auto index = load_index(require("index.bin", "index"));
  const auto vocab = load_vocab(require("vocab.bin", "vocab"));
  const auto queries = load_dataset(features_dir).read_all();
  std::vector<std::pair<ImageId, std::vector<RankedMatch>>> out;
  for (const auto& q : queries.images)
    out.emplace_back(q.id, index.query(build_bovw(vocab.quantize(q.descriptors), index.idf()), k));
  return out;
}

void Run::end_to_end() {
  if (config_.generator)
    generate();
  else
    ingest();
  vocab();
  index();
  graph();
  cluster();
  if (!config_.sweep_seed_counts.empty()) seeds_sweep();
  tags();
  recognize(std::nullopt, std::nullopt);
  evaluate(std::nullopt);
  if (!config_.tradeoff_methods.empty()) compact();
  record("report.json", "evaluate");
}

}  // namespace lmr
