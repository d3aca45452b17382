// Command-line driver: one subcommand per pipeline stage, all sharing a run
// directory (--out) and a pipeline config (--config).

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"
#include "lmr/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kValidation = 3, kFormat = 4, kIo = 5, kDependency = 6 };

struct Options {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> rng_seed;
  std::optional<std::size_t> threads;

  std::string method;
  std::optional<std::size_t> top_k;
  std::string queries;
  std::string annotations;
  std::optional<int> min_inliers;
  std::optional<double> beta;
  std::optional<std::size_t> seeds;
  std::optional<std::uint64_t> cluster_seed;
  std::string compaction;
  std::optional<int> threshold;
};

lmr::Run open_run(const Options& o) {
  if (o.config.empty()) throw lmr::ValidationError("--config is required");
  auto config = lmr::load_pipeline_config(o.config, o.rng_seed);
  if (o.beta) config.clustering.beta = *o.beta;
  if (o.seeds) config.clustering.seed_count = *o.seeds;
  if (o.cluster_seed) config.clustering.rng_seed = *o.cluster_seed;
  if (!o.compaction.empty()) config.compaction.method = lmr::parse_compaction_method(o.compaction);
  if (o.threshold) config.compaction.threshold = config.compaction.radius = *o.threshold;
  return lmr::Run(o.out, std::move(config));
}

std::optional<lmr::ScoringMethod> method_of(const Options& o) {
  if (o.method.empty()) return std::nullopt;
  return lmr::parse_method(o.method);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object mining, recognition and index compaction over local-feature photo collections"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Pipeline config (JSON)");
  app.add_option("--out", o.out, "Run directory")->capture_default_str();
  app.add_option("--rng-seed", o.rng_seed, "Derive every stage seed from this value");
  app.add_option("--threads", o.threads, "Worker threads (default: LMR_THREADS or all cores)");

  auto* generate = app.add_subcommand("generate", "Render a synthetic dataset with ground truth");
  auto* ingest = app.add_subcommand("ingest", "Validate and import dataset directories");
  auto* vocab = app.add_subcommand("vocab", "Train the visual vocabulary");
  auto* index = app.add_subcommand("index", "Build (or query) the inverted index");
  index->require_subcommand(0, 1);
  index->add_subcommand("build", "Build the index over the database");
  auto* index_query = index->add_subcommand("query", "tf-idf top-k for each image of a feature directory");
  index_query->add_option("features", o.queries, "Dataset directory of query features")->required();
  index_query->add_option("--top-k", o.top_k, "Results per query");
  auto* graph = app.add_subcommand("graph", "Build (or prune) the matching graph");
  graph->require_subcommand(0, 1);
  graph->add_subcommand("build", "Verify retrieval candidates into a matching graph");
  auto* graph_prune = graph->add_subcommand("prune", "Drop edges below an inlier count");
  graph_prune->add_option("--min-inliers", o.min_inliers, "Minimum inliers")->required();
  auto* cluster = app.add_subcommand("cluster", "Iconoid Shift clustering");
  cluster->require_subcommand(0, 1);
  auto* cluster_run = cluster->add_subcommand("run", "Run clustering");
  for (auto* c : {cluster, cluster_run}) {
    c->add_option("--beta", o.beta, "Kernel bandwidth");
    c->add_option("--seeds", o.seeds, "Number of seeds");
    c->add_option("--rng-seed", o.cluster_seed, "Seed-drawing RNG seed");
  }
  auto* sweep = app.add_subcommand("seeds-sweep", "Clusters found versus seed count");
  auto* compact = app.add_subcommand("compact", "Reduce cluster representatives and report the tradeoff");
  compact->add_option("--method", o.compaction, "none|complete-link|kvq|dominating-set|fine-iconoids|random");
  compact->add_option("--threshold", o.threshold, "Inlier threshold / radius");
  auto* tags = app.add_subcommand("tags", "Mine cluster names from user tags");
  auto* recognize = app.add_subcommand("recognize", "Recognize query images");
  recognize->add_option("--method", o.method, "center|size|voting|best-match|overlap");
  recognize->add_option("--top-k", o.top_k, "Objects per query");
  recognize->add_option("queries", o.queries, "Dataset directory of query features (default: run queries)");
  auto* evaluate = app.add_subcommand("evaluate", "Score recognition and semantics");
  evaluate->add_option("--method", o.method, "Restrict the report to one method");
  evaluate->add_option("--annotations", o.annotations, "annotations.csv");
  auto* end_to_end = app.add_subcommand("end-to-end", "Run every stage and write report.json");
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (o.threads) lmr::set_thread_count(*o.threads);
    auto run = open_run(o);
    if (generate->parsed()) run.generate();
    if (ingest->parsed()) run.ingest();
    if (vocab->parsed()) run.vocab();
    if (index->parsed()) {
      if (index_query->parsed()) {
        for (const auto& [id, ranking] : run.query_index(o.queries, o.top_k.value_or(10))) {
          std::cout << id;
          for (const auto& m : ranking) std::cout << ' ' << m.image_id << ':' << m.tfidf_score;
          std::cout << '\n';
        }
      } else {
        run.index();
      }
    }
    if (graph->parsed()) {
      if (graph_prune->parsed())
        run.prune(*o.min_inliers);
      else
        run.graph();
    }
    if (cluster->parsed()) run.cluster();
    if (sweep->parsed()) run.seeds_sweep();
    if (compact->parsed()) run.compact();
    if (tags->parsed()) run.tags();
    if (recognize->parsed()) run.recognize(method_of(o), o.top_k, o.queries);
    if (evaluate->parsed()) run.evaluate(method_of(o), o.annotations);
    if (end_to_end->parsed()) run.end_to_end();
  } catch (const lmr::DependencyError& e) {
    std::cerr << "lmr: " << e.what() << '\n';
    return kDependency;
  } catch (const lmr::ValidationError& e) {
    std::cerr << "lmr: invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const lmr::FormatError& e) {
    std::cerr << "lmr: format error: " << e.what() << '\n';
    return kFormat;
  } catch (const lmr::IoError& e) {
    std::cerr << "lmr: I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "lmr: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
