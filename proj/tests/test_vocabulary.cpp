#include "support.hpp"

#include "lmr/error.hpp"
#include "lmr/kdtree.hpp"
#include "lmr/vocabulary.hpp"

#include <doctest.h>

using namespace lmr;

namespace {

DescriptorMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, int levels = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  DescriptorMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = levels ? static_cast<float>(rng() % static_cast<unsigned>(levels)) : u(rng);
  return m;
}

std::pair<std::uint32_t, double> linear_scan(const DescriptorMatrix& pts, const float* q) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double d = 0;
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
      const double diff = double(q[k]) - double(pts(i, k));
      d += diff * diff;
    }
    if (d < best_d) best_d = d, best = static_cast<std::uint32_t>(i);
  }
  return {best, best_d};
}

}  // namespace

TEST_SUITE("vocabulary") {
  TEST_CASE("kd-tree nearest equals a linear scan") {
    const auto pts = random_matrix(700, 12, 1);
    const KdTree tree(pts);
    const auto queries = random_matrix(500, 12, 2);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      const auto [idx, d] = linear_scan(pts, queries.row(i).data());
      const auto n = tree.nearest(queries.row(i).data());
      CHECK(n.index == idx);
      CHECK(n.squared_distance == d);
    }
  }

  TEST_CASE("ties resolve to the lowest index") {
    // Integer grid: many exact distance ties.
    const auto pts = random_matrix(300, 3, 3, 3);
    const KdTree tree(pts, 2);
    const auto queries = random_matrix(300, 3, 4, 3);
    for (Eigen::Index i = 0; i < queries.rows(); ++i)
      CHECK(tree.nearest(queries.row(i).data()).index == linear_scan(pts, queries.row(i).data()).first);
  }

  TEST_CASE("knn is sorted by distance then index") {
    const auto pts = random_matrix(200, 4, 5, 4);
    const KdTree tree(pts);
    const auto q = random_matrix(1, 4, 6, 4);
    const auto nn = tree.knn(q.row(0).data(), 15);
    REQUIRE(nn.size() == 15);
    for (std::size_t i = 1; i < nn.size(); ++i)
      CHECK((nn[i - 1].squared_distance < nn[i].squared_distance ||
             (nn[i - 1].squared_distance == nn[i].squared_distance && nn[i - 1].index < nn[i].index)));
    CHECK(nn[0].index == linear_scan(pts, q.row(0).data()).first);
    CHECK(tree.knn(q.row(0).data(), 1000).size() == 200);
  }

  TEST_CASE("k-means is deterministic and yields k distinct centers") {
    const auto sample = random_matrix(2000, 8, 7);
    const auto a = train_vocab(sample, 40, 11);
    const auto b = train_vocab(sample, 40, 11);
    CHECK(a.size() == 40);
    CHECK(a.centers() == b.centers());
    const auto words = a.quantize(sample);
    std::set<WordId> used(words.begin(), words.end());
    CHECK(used.size() == 40);
  }

  TEST_CASE("vocabulary file round trip preserves quantization") {
    const auto sample = random_matrix(1000, 8, 8);
    const auto v = train_vocab(sample, 25, 3);
    const auto dir = test::temp_dir("vocab_rt");
    save_vocab(dir / "v.bin", v);
    const auto back = load_vocab(dir / "v.bin");
    CHECK(back.centers() == v.centers());
    CHECK(back.quantize(sample) == v.quantize(sample));
    std::filesystem::resize_file(dir / "v.bin", 20);
    CHECK_THROWS_AS(load_vocab(dir / "v.bin"), FormatError);
  }

  TEST_CASE("bag of words is L2-normalised tf-idf") {
    const std::vector<double> idf{0.0, 1.0, 2.0, 0.5};
    const std::vector<WordId> words{1, 1, 2, 0, 3, 3, 3};
    const auto v = build_bovw(words, idf);
    const double w1 = 2.0 / 7, w2 = 2.0 / 7, w3 = 1.5 / 7;
    const double n = std::sqrt(w1 * w1 + w2 * w2 + w3 * w3);
    CHECK(v.nonZeros() == 3);
    CHECK(v.coeff(0) == 0.0);
    CHECK(v.coeff(1) == doctest::Approx(w1 / n));
    CHECK(v.coeff(2) == doctest::Approx(w2 / n));
    CHECK(v.coeff(3) == doctest::Approx(w3 / n));
    CHECK(build_bovw(std::vector<WordId>{0, 0}, idf).nonZeros() == 0);
    CHECK_THROWS_AS(build_bovw(std::vector<WordId>{9}, idf), ValidationError);
  }

  TEST_CASE("too small samples are rejected") {
    CHECK_THROWS_AS(train_vocab(random_matrix(5, 4, 1), 10, 1), ValidationError);
  }
}
