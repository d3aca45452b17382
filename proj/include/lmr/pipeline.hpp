#pragma once

#include "lmr/compaction.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/geometry.hpp"
#include "lmr/iconoid_shift.hpp"
#include "lmr/match_graph.hpp"
#include "lmr/recognition.hpp"
#include "lmr/synth.hpp"
#include "lmr/tags.hpp"
#include "lmr/vocabulary.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lmr {

struct PipelineConfig {
  // Either a generator or ingested dataset directories.
  std::optional<GeneratorConfig> generator;
  std::optional<std::uint64_t> generator_seed;
  std::optional<std::filesystem::path> database_dir;
  std::optional<std::filesystem::path> queries_dir;
  std::optional<std::filesystem::path> ground_truth_file;

  std::size_t vocabulary_size = 512;
  std::size_t vocabulary_sample = 100000;
  std::size_t kmeans_iterations = 25;
  std::optional<std::uint64_t> vocabulary_seed;

  GeometryConfig geometry;
  bool ransac_seed_set = false;
  std::size_t retrieval_depth = 30;
  int graph_min_inliers = 15;

  IconoidShiftConfig clustering;
  bool clustering_seed_set = false;
  std::vector<std::size_t> sweep_seed_counts;
  std::size_t sweep_large_size = 10;

  RecognitionConfig recognition;
  ScoringMethod method = ScoringMethod::voting;

  CompactionConfig compaction;
  bool compaction_seed_set = false;
  std::vector<CompactionMethod> tradeoff_methods;
  std::vector<int> tradeoff_thresholds;
  std::size_t random_draws = 5;  // random baselines averaged per tradeoff row

  TagMiningConfig tags;
  std::optional<std::filesystem::path> stoplist_file;

  std::optional<std::filesystem::path> annotations_file;
  bool group_queries = true;
  GroupingConfig grouping;
  bool candidate_filter = false;
};

/// Parses a JSON pipeline config; unknown keys are rejected and every
/// stochastic stage must carry a seed unless `rng_seed` supplies one.
/// Relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir = {},
                                     std::optional<std::uint64_t> rng_seed = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& file,
                                    std::optional<std::uint64_t> rng_seed = {});
/// Overrides every stage seed with one derived from `seed`.
void apply_rng_seed(PipelineConfig& config, std::uint64_t seed);
/// Canonical JSON (sorted keys, all defaults spelled out).
std::string pipeline_config_json(const PipelineConfig& config);
std::string config_digest(const PipelineConfig& config);

/// Throws ValidationError naming the first missing stage seed.
void require_seeds(const PipelineConfig& config);

// In-memory stages.

Vocabulary run_vocab_stage(const Dataset& database, const PipelineConfig& config);
InvertedIndex run_index_stage(const Dataset& database, const Vocabulary& vocabulary);
MatchingGraph run_graph_stage(const Dataset& database, const Vocabulary& vocabulary,
                              const InvertedIndex& index, const PipelineConfig& config);
std::vector<ObjectCluster> run_cluster_stage(const MatchingGraph& graph, const PipelineConfig& config);
SweepReport run_sweep_stage(const MatchingGraph& graph, const Dataset& database,
                            const PipelineConfig& config);
std::vector<ClusterNames> run_tags_stage(std::span<const ObjectCluster> clusters, const Dataset& database,
                                         const PipelineConfig& config);

struct TradeoffRow {
  std::string method;
  std::string param;
  std::size_t kept = 0;
  std::size_t original = 0;
  std::size_t index_size = 0;  // postings
  MetricReport report;
};

/// Fine clusters for fine-iconoid reduction: every node seeded at fine_beta.
std::vector<ObjectCluster> fine_clusters(const MatchingGraph& graph, const PipelineConfig& config);

/// Baseline plus each configured method/threshold and a random reduction
/// matched to its per-cluster kept counts, evaluated with `config.method`.
/// Random rows average `random_draws` independent draws.
std::vector<TradeoffRow> run_tradeoff(const Dataset& database, const Dataset& queries,
                                      const Vocabulary& vocabulary, const MatchingGraph& graph,
                                      std::span<const ObjectCluster> clusters, const Rater& rate,
                                      const PipelineConfig& config);

/// Everything the evaluation needs, held in memory.
struct Experiment {
  Dataset database;
  Dataset queries;
  std::optional<GroundTruth> truth;
  Vocabulary vocabulary;
  InvertedIndex index;
  MatchingGraph graph;
  std::vector<ObjectCluster> clusters;
  std::vector<ClusterNames> names;
};

/// Runs vocab through tags on an in-memory dataset.
Experiment build_experiment(Dataset database, Dataset queries, std::optional<GroundTruth> truth,
                            const PipelineConfig& config);

struct EvaluationOutcome {
  std::map<ScoringMethod, MetricReport> recognition;
  std::map<ScoringMethod, std::vector<QueryResult>> results;
  std::optional<EndToEndReport> end_to_end;  // needs ground truth
  std::size_t query_groups = 0;
};

EvaluationOutcome evaluate_experiment(const Experiment& experiment, const Rater& rate,
                                      const PipelineConfig& config);

/// Ground-truth rater when truth is present, otherwise the annotations.
Rater make_rater(const Experiment& experiment, const std::vector<RelevanceAnnotation>* annotations);

// On-disk runs.

/// One run directory: artifacts plus run_manifest.json recording, per
/// artifact, the producing stage, that stage's config digest and a content
/// digest. Reading an artifact produced under a different config, or
/// modified since, logs a warning.
class Run {
public:
  Run(std::filesystem::path dir, PipelineConfig config);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const PipelineConfig& config() const noexcept { return config_; }

  void generate();
  void ingest();
  void vocab();
  void index();
  void graph();
  void prune(int min_inliers);
  /// Unverified tf-idf top-k for every image of a feature directory.
  std::vector<std::pair<ImageId, std::vector<RankedMatch>>> query_index(
      const std::filesystem::path& features_dir, std::size_t k) const;
  void cluster();
  void seeds_sweep();
  void compact();
  void tags();
  /// Recognizes every query of `queries_dir` (the run's queries when empty)
  /// and writes recognition.jsonl.
  void recognize(std::optional<ScoringMethod> method, std::optional<std::size_t> top_k,
                 const std::filesystem::path& queries_dir = {});
  void evaluate(std::optional<ScoringMethod> method, const std::filesystem::path& annotations = {});
  void end_to_end();

  /// Deterministic report built from the current artifacts.
  std::string report_json() const;

private:
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  std::filesystem::path require(const std::string& artifact, const std::string& stage) const;
  void record(const std::string& artifact, const std::string& stage);
  std::string stage_digest(const std::string& stage) const;
  void load_manifest();
  void save_manifest() const;
  void log(const std::string& stage, const std::string& message) const;
  void merge_report(const std::string& key, const std::string& json_text);

  Dataset load_database() const;
  Dataset load_queries() const;
  std::optional<GroundTruth> load_truth() const;

  std::filesystem::path dir_;
  PipelineConfig config_;
  std::string manifest_text_;
};

}  // namespace lmr
