#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LMR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string capture(const std::string& args) {
  const std::string cmd = std::string(LMR_CLI_PATH) + " " + args + " 2>/dev/null";
  std::string out;
  if (FILE* p = popen(cmd.c_str(), "r")) {
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    pclose(p);
  }
  return out;
}

fs::path write_config(const fs::path& dir, bool seeds = true) {
  nlohmann::json j = {
      {"dataset",
       {{"seed", 3},
        {"generator",
         {{"descriptor_dim", 16},
          {"groups", {{{"archetype", "flat-small"}, {"count", 2}, {"views", 6}, {"queries", 2}, {"category", "Paintings"}}}}}}}},
      {"vocabulary", {{"size", 64}, {"sample", 5000}}},
      {"geometry", {{"verify_depth", 20}}},
      {"clustering", {{"seeds", 12}}},
      {"tags", {{"min_cluster_size", 3}}},
      {"evaluation", {{"group_queries", false}}}};
  if (seeds) {
    j["vocabulary"]["seed"] = 1;
    j["geometry"]["ransac_seed"] = 2;
    j["clustering"]["rng_seed"] = 3;
    j["compaction"] = {{"rng_seed", 4}};
  }
  const auto file = dir / (seeds ? "config.json" : "noseed.json");
  std::ofstream(file) << j.dump(2);
  return file;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits 0 for every subcommand") {
    CHECK(run("--help") == 0);
    for (const char* sub : {"generate", "ingest", "vocab", "index", "graph", "cluster", "seeds-sweep", "compact",
                            "tags", "recognize", "evaluate", "end-to-end"})
      CHECK_MESSAGE(run(std::string(sub) + " --help") == 0, sub);
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("recognize --top-k notanumber") == 2);
  }

  TEST_CASE("config problems map to validation and format codes") {
    const auto dir = lmr::test::temp_dir("cli_config");
    CHECK(run("vocab") == 3);
    CHECK(run("--config " + write_config(dir, false).string() + " --out " + (dir / "r").string() + " generate") == 3);
    std::ofstream(dir / "broken.json") << "{\"dataset\": ";
    CHECK(run("--config " + (dir / "broken.json").string() + " generate") == 4);
    CHECK(run("--config " + (dir / "nothere.json").string() + " generate") == 5);
  }

  TEST_CASE("stages out of order exit 6") {
    const auto dir = lmr::test::temp_dir("cli_order");
    const auto cfg = write_config(dir);
    const auto out = " --config " + cfg.string() + " --out " + (dir / "run").string();
    CHECK(run(out + " recognize") == 6);
    CHECK(run(out + " generate") == 0);
    CHECK(run(out + " index") == 6);
    CHECK(run(out + " graph") == 6);
  }

  TEST_CASE("stage by stage run writes every artifact") {
    const auto dir = lmr::test::temp_dir("cli_stages");
    const auto cfg = write_config(dir);
    const auto out = " --config " + cfg.string() + " --out " + (dir / "run").string();
    for (const char* stage : {"generate", "vocab", "index", "graph", "cluster", "tags", "recognize", "evaluate"})
      REQUIRE_MESSAGE(run(out + " " + stage) == 0, stage);
    for (const char* f : {"vocab.bin", "index.bin", "graph.jsonl", "clusters.jsonl", "tags.csv", "recognition.jsonl",
                          "report.json", "run_manifest.json"})
      CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
    std::ifstream in(dir / "run" / "run_manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest["format"] == "lmr-run");
    const auto q = capture(out + " index query " + (dir / "run" / "queries").string() + " --top-k 2");
    std::istringstream lines(q);
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) ++count;
    CHECK(count == 4);
    CHECK(run(out + " graph prune --min-inliers 30") == 0);
    CHECK(run(out + " cluster --seeds 4 --rng-seed 9") == 0);
  }

  TEST_CASE("--rng-seed fills missing stage seeds") {
    const auto dir = lmr::test::temp_dir("cli_rngseed");
    const auto cfg = write_config(dir, false);
    CHECK(run("--config " + cfg.string() + " --rng-seed 5 --out " + (dir / "run").string() + " generate") == 0);
  }
}
