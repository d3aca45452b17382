#include "support.hpp"

#include "lmr/error.hpp"
#include "lmr/tags.hpp"

#include <doctest.h>

#include <fstream>

using namespace lmr;

namespace {

struct Fixture {
  Dataset db;
  std::vector<ObjectCluster> clusters;

  void add(const std::string& id, const std::string& owner, std::vector<std::string> tags, int cluster) {
    ImageRecord r;
    r.id = id;
    r.width = r.height = 10;
    r.owner = owner;
    r.tags = std::move(tags);
    db.images.push_back(r);
    if (cluster < 0) return;
    if (clusters.size() <= static_cast<std::size_t>(cluster)) clusters.resize(static_cast<std::size_t>(cluster) + 1);
    auto& c = clusters[static_cast<std::size_t>(cluster)];
    c.object_id = "c_" + std::to_string(cluster);
    c.support.push_back({id, 1.0});
    std::sort(c.support.begin(), c.support.end(), [](auto& a, auto& b) { return a.id < b.id; });
    c.iconoid = c.support.front().id;
  }
};

}  // namespace

TEST_SUITE("tag-mining") {
  TEST_CASE("normalisation and filename filter") {
    CHECK(normalize_tag("  Notre Dame\t") == "notre dame");
    CHECK(is_camera_filename("dsc002342.jpg"));
    CHECK(is_camera_filename("img_1234.jpeg"));
    CHECK(is_camera_filename("20090612"));
    CHECK_FALSE(is_camera_filename("louvre"));
    CHECK_FALSE(is_camera_filename("route 66"));
  }

  TEST_CASE("preprocessing drops stop words and filenames and adds the title") {
    ImageRecord r;
    r.tags = {"Paris", "Louvre", "DSC002342.JPG", ""};
    r.title = "Mona Lisa";
    CHECK(preprocess_tags(r, TagMiningConfig{}) == std::vector<std::string>{"louvre", "mona lisa"});
  }

  TEST_CASE("score is U(c,t)^2 / U(t)") {
    CHECK(tag_score(10, 10) == 10.0);
    CHECK(tag_score(3, 12) == doctest::Approx(0.75));
    CHECK(tag_score(0, 5) == 0.0);
    CHECK(tag_score(0, 0) == 0.0);
  }

  TEST_CASE("users are counted once no matter how many photos they tag") {
    Fixture f;
    for (int i = 0; i < 4; ++i) f.add("a" + std::to_string(i), "u" + std::to_string(i), {"eiffel"}, 0);
    for (int i = 0; i < 30; ++i) f.add("s" + std::to_string(i + 10), "spam", {"spam tag"}, 0);
    const auto stats = compute_tag_stats(f.clusters, f.db, TagMiningConfig{});
    CHECK(stats.per_cluster[0].at("eiffel").users == 4);
    CHECK(stats.per_cluster[0].at("spam tag").users == 1);
    CHECK(stats.per_cluster[0].at("spam tag").occurrences == 30);
    const auto scores = score_tags(0, f.clusters, stats);
    CHECK(scores.front().tag == "eiffel");
  }

  TEST_CASE("generic tags spread over many clusters lose to specific ones") {
    Fixture f;
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 4; ++i)
        f.add("i" + std::to_string(c) + std::to_string(i), "u" + std::to_string(c * 4 + i),
              {"museum", "name" + std::to_string(c)}, c);
    // Six more users mention "museum" outside any cluster.
    for (int i = 0; i < 6; ++i) f.add("x" + std::to_string(i), "v" + std::to_string(i), {"museum"}, -1);
    const auto stats = compute_tag_stats(f.clusters, f.db, TagMiningConfig{});
    CHECK(stats.global.at("museum").users == 26);
    for (std::size_t c = 0; c < 5; ++c) {
      const auto s = score_tags(c, f.clusters, stats);
      CHECK(s.front().tag == "name" + std::to_string(c));
      CHECK(s.front().score == doctest::Approx(4.0));
    }
  }

  TEST_CASE("naming respects the minimum cluster size and top k") {
    Fixture f;
    for (int i = 0; i < 6; ++i) f.add("a" + std::to_string(i), "u" + std::to_string(i), {"alpha", "beta", "gamma", "delta"}, 0);
    for (int i = 0; i < 3; ++i) f.add("b" + std::to_string(i), "w" + std::to_string(i), {"small"}, 1);
    TagMiningConfig config;
    const auto names = name_clusters(f.clusters, f.db, config);
    REQUIRE(names.size() == 1);
    CHECK(names[0].cluster == "c_0");
    CHECK(names[0].top.size() == 3);
    CHECK(names[0].distinct_users == 6);
    const auto dir = test::temp_dir("tags_rt");
    save_tags_csv(dir / "t.csv", names);
    const auto back = load_tags_csv(dir / "t.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].top.size() == 3);
    CHECK(back[0].top[0].tag == names[0].top[0].tag);
  }

  TEST_CASE("stoplist files are normalised and skip comments") {
    const auto dir = test::temp_dir("stoplist");
    std::ofstream(dir / "s.txt") << "# comment\nRome\n\n  italy \n";
    CHECK(load_stoplist(dir / "s.txt") == std::vector<std::string>{"rome", "italy"});
    CHECK_THROWS_AS(load_stoplist(dir / "missing.txt"), IoError);
  }
}
