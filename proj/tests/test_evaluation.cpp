#include "support.hpp"

#include "lmr/error.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/pipeline.hpp"

#include <doctest.h>

using namespace lmr;

TEST_SUITE("eval-harness") {
  TEST_CASE("metric counts") {
    MetricCounts c;
    c.add(std::vector<Rating>{Rating::good, Rating::bad});
    c.add(std::vector<Rating>{Rating::ok, Rating::good});
    c.add(std::vector<Rating>{Rating::bad, Rating::bad, Rating::ok, Rating::good});
    c.add(std::vector<Rating>{});
    const auto m = c.metrics();
    CHECK(m.query_count == 4);
    CHECK(m.good1 == doctest::Approx(25));
    CHECK(m.ok1 == doctest::Approx(50));
    CHECK(m.good3 == doctest::Approx(50));
    CHECK(m.ok3 == doctest::Approx(75));
    CHECK(monotone(m));
    CHECK(MetricCounts{}.metrics().good1 == 0);
  }

  TEST_CASE("aggregate weights categories by query count") {
    std::vector<QueryOutcome> outs{{"q1", "A", {Rating::good}}, {"q2", "A", {Rating::bad}},
                                   {"q3", "A", {Rating::good}}, {"q4", "B", {Rating::bad}}};
    const auto r = aggregate(outs);
    CHECK(r.per_category.at("A").good1 == doctest::Approx(200.0 / 3));
    CHECK(r.per_category.at("B").good1 == 0);
    CHECK(r.overall.good1 == doctest::Approx(50));
    Metrics broken;
    broken.good1 = 60;
    broken.ok1 = 50;
    CHECK_FALSE(monotone(broken));
  }

  TEST_CASE("annotation rater resolves aliases and rejects unannotated pairs") {
    const std::vector<RelevanceAnnotation> a{{"q1", "o1", Rating::good}, {"q1", "o2", Rating::ok}};
    const auto rate = annotation_rater(a, {{"c_x", "o1"}, {"c_y", "o2"}});
    CHECK(rate("q1", "c_x") == Rating::good);
    CHECK(rate("q1", "c_y") == Rating::ok);
    CHECK(rate("q1", "o1") == Rating::good);
    CHECK_THROWS_AS(rate("q2", "c_x"), ValidationError);
    const auto filtered = annotation_rater(a, {{"c_x", "o1"}}, [](const ImageId&, const std::string& o) { return o != "c_x"; });
    CHECK(filtered("q1", "c_x") == Rating::bad);
  }

  TEST_CASE("combine reports the recognition minus semantic gap") {
    MetricReport rec, sem;
    rec.overall.good1 = 80;
    sem.overall.good1 = 30;
    rec.per_category["Murals"].good1 = 90;
    sem.per_category["Murals"].good1 = 10;
    const auto e = combine(rec, sem);
    CHECK(e.overall_gap == 50);
    CHECK(e.gap.at("Murals") == 80);
  }

  TEST_CASE("exact duplicate queries are grouped") {
    GeneratorConfig gen;
    gen.duplicate_query_rate = 1.0;
    gen.groups.push_back(test::group(Archetype::flat_small, 3, 6, 2, "Paintings"));
    auto config = test::small_pipeline(31);
    const auto d = generate_dataset(gen, 31);
    const auto vocab = run_vocab_stage(d.database, config);
    const auto groups = group_queries(d.queries, vocab, config.geometry, config.grouping);
    CHECK(groups.size() == 6);
    for (const auto& g : groups) {
      REQUIRE(g.members.size() == 2);
      CHECK(g.representative == g.members.front());
      CHECK(g.group_id == "g_" + g.representative);
      const auto* a = d.truth.image(g.members[0]);
      const auto* b = d.truth.image(g.members[1]);
      CHECK((a->duplicate_of == b->id || b->duplicate_of == a->id));
    }
  }

  TEST_CASE("truth rater goes through the cluster's iconoid") {
    GeneratorConfig gen;
    gen.groups.push_back(test::group(Archetype::flat_small, 2, 8, 1, "Paintings"));
    auto config = test::small_pipeline(32);
    const auto e = test::experiment_from(gen, config);
    const auto rate = truth_rater(*e.truth, e.clusters);
    const auto aliases = cluster_aliases(e.clusters, *e.truth);
    for (const auto& q : e.queries.images)
      for (const auto& c : e.clusters) {
        const bool same = aliases.at(c.object_id) == *e.truth->image(q.id)->object;
        CHECK(rate(q.id, c.object_id) == (same ? Rating::good : Rating::bad));
      }
  }

  TEST_CASE("pipeline config validation") {
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"generator": {"groups": []}}, "bogus": 1})"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"generator": {"groups": []}}})"), ValidationError);
    const auto c = parse_pipeline_config(R"({"dataset": {"generator": {"groups": []}}})", {}, 5);
    CHECK(c.vocabulary_seed.has_value());
    CHECK(c.clustering_seed_set);
    const auto c2 = parse_pipeline_config(pipeline_config_json(c));
    CHECK(pipeline_config_json(c2) == pipeline_config_json(c));
    CHECK(config_digest(c2) == config_digest(c));
    auto c3 = c;
    c3.clustering.beta = 0.8;
    CHECK(config_digest(c3) != config_digest(c));
    CHECK_THROWS_AS(parse_pipeline_config("{"), FormatError);
    const auto inline_stop = parse_pipeline_config(
        R"({"dataset": {"generator": {"groups": []}}, "tags": {"stoplist_terms": ["Rome"]}})", {}, 5);
    CHECK(inline_stop.tags.stoplist == std::vector<std::string>{"rome"});
  }
}
