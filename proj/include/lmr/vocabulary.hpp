#pragma once

#include "lmr/kdtree.hpp"
#include "lmr/types.hpp"

#include <Eigen/SparseCore>

#include <filesystem>
#include <span>
#include <vector>

namespace lmr {

/// tf-idf weighted, L2-normalised visual-word histogram.
using WeightedBovw = Eigen::SparseVector<double>;

struct KMeansOptions {
  std::size_t max_iterations = 30;
  double tolerance = 1e-5;  // max center movement (L2) to stop
};

/// Visual-word dictionary. Quantisation is exact nearest-center under L2
/// (kd-tree accelerated), ties resolved to the lowest word id.
class Vocabulary {
public:
  Vocabulary() = default;
  Vocabulary(DescriptorMatrix centers, std::uint64_t seed);

  std::size_t size() const noexcept { return tree_.size(); }
  std::size_t dim() const noexcept { return tree_.dim(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const DescriptorMatrix& centers() const noexcept { return tree_.points(); }

  WordId quantize(const float* descriptor) const;
  std::vector<WordId> quantize(const DescriptorMatrix& descriptors) const;

private:
  KdTree tree_;
  std::uint64_t seed_ = 0;
};

/// Lloyd's k-means with k-means++ seeding. Deterministic for a given seed.
Vocabulary train_vocab(const DescriptorMatrix& sample, std::size_t k, std::uint64_t seed,
                       const KMeansOptions& options = {});

/// Rows drawn uniformly without replacement from all dataset features.
DescriptorMatrix sample_descriptors(const Dataset& dataset, std::size_t max_rows,
                                    std::uint64_t seed);

/// idf_w = ln(N / n_w); 0 for words that never occur.
std::vector<double> compute_idf(std::span<const std::vector<WordId>> corpus,
                                std::size_t vocabulary_size);

/// tf = count / total words, weight = tf * idf, then L2 normalised.
WeightedBovw build_bovw(std::span<const WordId> words, const std::vector<double>& idf);

inline constexpr std::uint16_t kVocabularyVersion = 1;
void save_vocab(const std::filesystem::path& file, const Vocabulary& vocab);
Vocabulary load_vocab(const std::filesystem::path& file);

}  // namespace lmr
