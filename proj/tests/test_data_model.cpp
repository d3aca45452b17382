#include "support.hpp"

#include "lmr/dataset_io.hpp"
#include "lmr/error.hpp"

#include <doctest.h>

#include <fstream>

using namespace lmr;

namespace {

Dataset tiny_dataset() {
  Dataset d;
  d.descriptor_dim = 4;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  for (int i = 0; i < 3; ++i) {
    ImageRecord r;
    r.id = "img" + std::to_string(i);
    r.width = 640;
    r.height = 480;
    r.owner = "u" + std::to_string(i % 2);
    r.title = i == 1 ? "Notre Dame" : "";
    r.tags = {"paris", "notre dame"};
    if (i == 2) r.category = "Paintings";
    std::vector<LocalFeature> fs(static_cast<std::size_t>(5 + i));
    for (auto& f : fs) {
      f.x = u(rng) * 640;
      f.y = u(rng) * 480;
      f.scale = 1 + u(rng);
      f.orientation = u(rng);
      f.descriptor = Eigen::VectorXf::NullaryExpr(4, [&] { return u(rng); });
    }
    r.set_features(fs, 4);
    d.images.push_back(r);
  }
  return d;
}

}  // namespace

TEST_SUITE("data-model") {
  TEST_CASE("dataset round trip is exact") {
    const auto dir = test::temp_dir("dm_roundtrip");
    const auto d = tiny_dataset();
    save_dataset(dir, d);
    const auto back = load_dataset(dir).read_all();
    REQUIRE(back.size() == d.size());
    CHECK(back.descriptor_dim == 4);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& a = d.images[i];
      const auto& b = back.images[i];
      CHECK(a.id == b.id);
      CHECK(a.owner == b.owner);
      CHECK(a.title == b.title);
      CHECK(a.tags == b.tags);
      CHECK(a.category == b.category);
      CHECK(a.keypoints == b.keypoints);
      CHECK(a.descriptors == b.descriptors);
    }
  }

  TEST_CASE("random access reader matches read_all") {
    const auto dir = test::temp_dir("dm_reader");
    save_dataset(dir, tiny_dataset());
    const auto reader = load_dataset(dir);
    const auto all = reader.read_all();
    CHECK(reader.read(2).descriptors == all.images[2].descriptors);
    CHECK(all.find("img1") == std::optional<std::size_t>(1));
    CHECK_THROWS_AS(all.at("nope"), ValidationError);
  }

  TEST_CASE("truncated descriptor store is a format error with an offset") {
    const auto dir = test::temp_dir("dm_truncated");
    save_dataset(dir, tiny_dataset());
    const auto bin = dir / "descriptors.bin";
    std::filesystem::resize_file(bin, std::filesystem::file_size(bin) - 7);
    try {
      load_dataset(dir).read_all();
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() > 0);
    }
  }

  TEST_CASE("bad magic is rejected at offset 0") {
    const auto dir = test::temp_dir("dm_magic");
    save_dataset(dir, tiny_dataset());
    std::fstream f(dir / "descriptors.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    try {
      load_dataset(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }

  TEST_CASE("malformed manifest line reports its byte offset") {
    const auto dir = test::temp_dir("dm_manifest");
    save_dataset(dir, tiny_dataset());
    std::ifstream in(dir / "manifest.jsonl");
    std::string header;
    std::getline(in, header);
    in.close();
    std::ofstream(dir / "manifest.jsonl") << header << "\n{not json\n";
    try {
      load_dataset(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == header.size() + 1);
    }
  }

  TEST_CASE("duplicate ids and unknown categories are validation errors") {
    auto d = tiny_dataset();
    d.images[1].id = d.images[0].id;
    CHECK_THROWS_AS(save_dataset(test::temp_dir("dm_dup"), d), ValidationError);
    d = tiny_dataset();
    d.images[0].category = "Spaceships";
    CHECK_THROWS_AS(save_dataset(test::temp_dir("dm_cat"), d), ValidationError);
  }

  TEST_CASE("annotations round trip and reject bad ratings") {
    const auto dir = test::temp_dir("dm_ann");
    std::vector<RelevanceAnnotation> a{{"q1", "c_a", Rating::good}, {"q1", "c_b", Rating::ok}, {"q2", "c_a", Rating::bad}};
    save_annotations(dir / "a.csv", a);
    const auto back = load_annotations(dir / "a.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[1].rating == Rating::ok);
    CHECK_THROWS_AS(parse_rating("great"), ValidationError);
    std::ofstream(dir / "bad.csv") << "query_id,object_id,rating\nq1,c_a\n";
    CHECK_THROWS_AS(load_annotations(dir / "bad.csv"), FormatError);
  }

  TEST_CASE("taxonomy has 13 categories") {
    CHECK(default_taxonomy().size() == 13);
  }
}
