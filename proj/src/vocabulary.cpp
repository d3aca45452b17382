#include "lmr/vocabulary.hpp"

#include "lmr/binary_io.hpp"
#include "lmr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace lmr {

Vocabulary::Vocabulary(DescriptorMatrix centers, std::uint64_t seed)
    : tree_(std::move(centers)), seed_(seed) {
  if (tree_.size() == 0) throw ValidationError("vocabulary needs at least one center");
}

WordId Vocabulary::quantize(const float* descriptor) const {
  return tree_.nearest(descriptor).index;
}

std::vector<WordId> Vocabulary::quantize(const DescriptorMatrix& descriptors) const {
  if (descriptors.rows() > 0 && static_cast<std::size_t>(descriptors.cols()) != dim())
    throw ValidationError("descriptor dimension " + std::to_string(descriptors.cols()) +
                          " does not match vocabulary dimension " + std::to_string(dim()));
  std::vector<WordId> words(static_cast<std::size_t>(descriptors.rows()));
  for (Eigen::Index i = 0; i < descriptors.rows(); ++i)
    words[static_cast<std::size_t>(i)] = quantize(descriptors.row(i).data());
  return words;
}

namespace {

std::size_t count_distinct_rows(const DescriptorMatrix& m) {
  std::set<std::vector<float>> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows.emplace(m.row(i).data(), m.row(i).data() + m.cols());
  return rows.size();
}

// k-means++: each next center is drawn with probability proportional to the
// squared distance to the closest center chosen so far.
DescriptorMatrix seed_centers(const DescriptorMatrix& sample, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(sample.rows());
  const auto dim = static_cast<std::size_t>(sample.cols());
  DescriptorMatrix centers(static_cast<Eigen::Index>(k), sample.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centers.row(0) = sample.row(static_cast<Eigen::Index>(first));
  for (std::size_t c = 1; c < k; ++c) {
    const float* last = centers.row(static_cast<Eigen::Index>(c - 1)).data();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(sample.row(static_cast<Eigen::Index>(i)).data(), last, dim));
      total += d2[i];
    }
    double target = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0) continue;
      pick = i;
      target -= d2[i];
      if (target < 0) break;
    }
    centers.row(static_cast<Eigen::Index>(c)) = sample.row(static_cast<Eigen::Index>(pick));
  }
  return centers;
}

}  // namespace

Vocabulary train_vocab(const DescriptorMatrix& sample, std::size_t k, std::uint64_t seed,
                       const KMeansOptions& options) {
  if (k == 0) throw ValidationError("vocabulary size must be at least 1");
  const auto n = static_cast<std::size_t>(sample.rows());
  if (k > n)
    throw ValidationError("vocabulary size " + std::to_string(k) + " exceeds sample size " +
                          std::to_string(n));
  if (count_distinct_rows(sample) < k)
    throw ValidationError("sample has fewer distinct descriptors than the vocabulary size " +
                          std::to_string(k));

  std::mt19937_64 rng(seed);
  DescriptorMatrix centers = seed_centers(sample, k, rng);
  const auto dim = static_cast<std::size_t>(sample.cols());
  std::vector<std::uint32_t> assignment(n);
  std::vector<double> dist(n);

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    const KdTree tree(centers);
    for (std::size_t i = 0; i < n; ++i) {
      const auto nb = tree.nearest(sample.row(static_cast<Eigen::Index>(i)).data());
      assignment[i] = nb.index;
      dist[i] = nb.squared_distance;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), sample.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assignment[i]) += sample.row(static_cast<Eigen::Index>(i)).cast<double>();
      ++counts[assignment[i]];
    }

    // Empty clusters take over the points farthest from their centers.
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && counts[assignment[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      if (far == n) continue;
      taken[far] = true;
      const auto row = sample.row(static_cast<Eigen::Index>(far)).cast<double>();
      sums.row(assignment[far]) -= row;
      --counts[assignment[far]];
      sums.row(static_cast<Eigen::Index>(c)) = row;
      counts[c] = 1;
      assignment[far] = static_cast<std::uint32_t>(c);
    }

    double max_shift = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const Eigen::RowVectorXf updated =
          (sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c])).cast<float>();
      max_shift = std::max(max_shift, std::sqrt(squared_distance(
                                          updated.data(), centers.row(static_cast<Eigen::Index>(c)).data(), dim)));
      centers.row(static_cast<Eigen::Index>(c)) = updated;
    }
    if (max_shift < options.tolerance) break;
  }
  return Vocabulary(std::move(centers), seed);
}

DescriptorMatrix sample_descriptors(const Dataset& dataset, std::size_t max_rows,
                                    std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& im : dataset.images) total += im.feature_count();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> refs;
  refs.reserve(total);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (std::size_t f = 0; f < dataset.images[i].feature_count(); ++f)
      refs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(f));
  if (refs.size() > max_rows) {
    std::mt19937_64 rng(seed);
    std::shuffle(refs.begin(), refs.end(), rng);
    refs.resize(max_rows);
    std::sort(refs.begin(), refs.end());
  }
  DescriptorMatrix out(static_cast<Eigen::Index>(refs.size()), dataset.descriptor_dim);
  for (std::size_t r = 0; r < refs.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) =
        dataset.images[refs[r].first].descriptors.row(refs[r].second);
  return out;
}

std::vector<double> compute_idf(std::span<const std::vector<WordId>> corpus,
                                std::size_t vocabulary_size) {
  std::vector<double> idf(vocabulary_size, 0.0);
  if (corpus.empty()) return idf;
  std::vector<std::size_t> doc_freq(vocabulary_size, 0);
  std::vector<std::size_t> last_doc(vocabulary_size, static_cast<std::size_t>(-1));
  for (std::size_t d = 0; d < corpus.size(); ++d)
    for (WordId w : corpus[d]) {
      if (w >= vocabulary_size)
        throw ValidationError("word id " + std::to_string(w) + " outside vocabulary");
      if (last_doc[w] != d) {
        last_doc[w] = d;
        ++doc_freq[w];
      }
    }
  const double n = static_cast<double>(corpus.size());
  for (std::size_t w = 0; w < vocabulary_size; ++w)
    if (doc_freq[w] > 0) idf[w] = std::log(n / static_cast<double>(doc_freq[w]));
  return idf;
}

WeightedBovw build_bovw(std::span<const WordId> words, const std::vector<double>& idf) {
  WeightedBovw v(static_cast<Eigen::Index>(idf.size()));
  if (words.empty()) return v;
  std::vector<WordId> sorted(words.begin(), words.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(sorted.size());
  double norm2 = 0;
  std::vector<std::pair<WordId, double>> entries;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const WordId w = sorted[i];
    if (w >= idf.size()) throw ValidationError("word id " + std::to_string(w) + " outside vocabulary");
    const double weight = static_cast<double>(j - i) / total * idf[w];
    if (weight > 0) {
      entries.emplace_back(w, weight);
      norm2 += weight * weight;
    }
    i = j;
  }
  if (norm2 <= 0) return v;
  const double norm = std::sqrt(norm2);
  v.reserve(static_cast<Eigen::Index>(entries.size()));
  for (const auto& [w, weight] : entries) v.insertBack(static_cast<Eigen::Index>(w)) = weight / norm;
  return v;
}

void save_vocab(const std::filesystem::path& file, const Vocabulary& vocab) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write("LMVC", 4);
  binary::write<std::uint16_t>(out, kVocabularyVersion);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.size()));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.dim()));
  binary::write<std::uint64_t>(out, vocab.seed());
  const auto& c = vocab.centers();
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index d = 0; d < c.cols(); ++d) binary::write<float>(out, c(i, d));
  if (!out) throw IoError("failed writing " + file.string());
}

Vocabulary load_vocab(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  binary::expect_magic(in, "LMVC");
  const auto version = binary::read<std::uint16_t>(in, "vocabulary version");
  if (version != kVocabularyVersion)
    throw FormatError("unsupported vocabulary version " + std::to_string(version), 4);
  const auto k = binary::read<std::uint32_t>(in, "vocabulary size");
  const auto dim = binary::read<std::uint32_t>(in, "vocabulary dimension");
  const auto seed = binary::read<std::uint64_t>(in, "vocabulary seed");
  DescriptorMatrix centers(k, dim);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (Eigen::Index d = 0; d < centers.cols(); ++d)
      centers(i, d) = binary::read<float>(in, "vocabulary center");
  return Vocabulary(std::move(centers), seed);
}

}  // namespace lmr
