#include "support.hpp"

#include "lmr/error.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/recognition.hpp"

#include <doctest.h>

using namespace lmr;

namespace {

ObjectCluster cluster(const std::string& name, std::vector<std::string> members) {
  ObjectCluster c;
  c.object_id = name;
  c.iconoid = members.front();
  std::sort(members.begin(), members.end());
  for (auto& m : members) c.support.push_back({m, 1.0});
  return c;
}

RankedMatch verified(const std::string& id, int inliers) {
  RankedMatch m;
  m.image_id = id;
  m.verified = true;
  m.inliers = inliers;
  m.tfidf_score = 0.1;
  return m;
}

RankedMatch unverified(const std::string& id, double score) {
  RankedMatch m;
  m.image_id = id;
  m.tfidf_score = score;
  return m;
}

// Object A: 5 images, B: 3 images, C: 2 images; "s" is shared by A and B.
ClusterSet three_clusters() {
  return ClusterSet({cluster("c_A", {"a1", "a2", "a3", "a4", "s"}), cluster("c_B", {"b1", "b2", "s"}),
                     cluster("c_C", {"c1", "c2"})});
}

}  // namespace

TEST_SUITE("recognition") {
  TEST_CASE("cluster set membership and representatives") {
    const auto cs = three_clusters();
    CHECK(cs.memberships("s").size() == 2);
    CHECK(cs.memberships("zzz").empty());
    CHECK(cs.find("c_B") == std::optional<std::size_t>(1));
    CHECK(cs.all_representatives().size() == 9);
    CHECK(cs.iconoids() == std::vector<ImageId>{"a1", "b1", "c1"});
  }

  TEST_CASE("voting counts verified representatives per object") {
    const auto cs = three_clusters();
    const std::vector<RankedMatch> r{verified("c1", 90), verified("b1", 50), verified("b2", 40),
                                     verified("a3", 30), unverified("a1", 0.9)};
    const auto out = score_voting(r, cs, 3);
    REQUIRE(out.size() == 3);
    CHECK(out[0].object_id == "c_B");
    CHECK(out[0].score == 2);
    CHECK(out[1].object_id == "c_C");  // one vote, better rank than c_A
    CHECK(out[2].object_id == "c_A");
    CHECK(out[0].rank == 1);
    CHECK(score_voting(r, cs, 1).size() == 1);
  }

  TEST_CASE("voting falls back to the top unverified match") {
    const auto cs = three_clusters();
    const std::vector<RankedMatch> r{unverified("x", 0.9), unverified("s", 0.5), unverified("c1", 0.4)};
    const auto out = score_voting(r, cs, 3);
    REQUIRE(out.size() == 2);
    CHECK(out[0].object_id == "c_A");  // tie broken by the larger cluster
    CHECK(out[1].object_id == "c_B");
    CHECK_FALSE(out[0].verified);
  }

  TEST_CASE("size ranks by cluster size among verified hits") {
    const auto cs = three_clusters();
    const std::vector<RankedMatch> r{verified("c1", 90), verified("b1", 50)};
    const auto out = score_size(r, cs, 3);
    REQUIRE(out.size() == 2);
    CHECK(out[0].object_id == "c_B");
    CHECK(out[0].score == 3);
    CHECK(out[1].object_id == "c_C");
  }

  TEST_CASE("best match takes objects in ranking order") {
    const auto cs = three_clusters();
    const std::vector<RankedMatch> r{verified("s", 90), verified("c2", 50), verified("a1", 40)};
    const auto out = score_best_match(r, cs, 3);
    REQUIRE(out.size() == 3);
    CHECK(out[0].object_id == "c_A");
    CHECK(out[1].object_id == "c_B");
    CHECK(out[2].object_id == "c_C");
    CHECK(out[0].score == 90);
  }

  TEST_CASE("center only counts iconoid matches") {
    const auto cs = three_clusters();
    const std::vector<RankedMatch> r{verified("b1", 60), verified("a1", 40), unverified("c1", 0.9)};
    const auto out = score_center(r, cs, 3);
    REQUIRE(out.size() == 2);
    CHECK(out[0].object_id == "c_B");
    CHECK(out[1].object_id == "c_A");
  }

  TEST_CASE("method names round trip") {
    for (auto m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_method("psychic"), ValidationError);
  }

  TEST_CASE("engine recognises synthetic queries") {
    GeneratorConfig gen;
    gen.groups.push_back(test::group(Archetype::flat_small, 4, 10, 3, "Paintings"));
    auto config = test::small_pipeline(21);
    const auto e = test::experiment_from(gen, config);
    RecognitionEngine engine(e.database, e.vocabulary, e.graph, e.clusters, config.recognition);
    const auto rate = truth_rater(*e.truth, e.clusters);
    const auto all = recognize_all_methods(e.queries, engine);
    for (auto m : kAllMethods) {
      const auto report = evaluate_recognition(all.at(m), rate);
      CHECK_MESSAGE(report.overall.good1 >= 90, to_string(m));
      CHECK(report.overall.query_count == 12);
      // Shared rankings give the same answers as one method at a time.
      const auto single = recognize_all(e.queries, engine, m);
      for (std::size_t q = 0; q < single.size(); ++q) {
        REQUIRE(single[q].objects.size() == all.at(m)[q].objects.size());
        for (std::size_t k = 0; k < single[q].objects.size(); ++k)
          CHECK(single[q].objects[k].object_id == all.at(m)[q].objects[k].object_id);
      }
    }
  }
}
