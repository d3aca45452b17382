#pragma once

#include "lmr/types.hpp"
#include "lmr/vocabulary.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace lmr {

/// One retrieved image. `homography` maps query pixels into the match.
struct RankedMatch {
  ImageId image_id;
  double tfidf_score = 0;
  bool verified = false;
  int inliers = 0;
  std::optional<Eigen::Matrix3d> homography;
};

struct IndexedImage {
  ImageId id;
  WeightedBovw bovw;
};

/// Inverted file over WeightedBovw vectors. Documents are numbered in
/// ascending image_id order, so posting lists sorted by document number are
/// sorted by image_id.
class InvertedIndex {
public:
  struct Posting {
    std::uint32_t doc = 0;
    double weight = 0;
  };

  InvertedIndex() = default;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }
  const std::vector<ImageId>& ids() const noexcept { return ids_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  std::span<const Posting> postings(WordId w) const { return postings_.at(w); }
  std::size_t posting_count() const noexcept;
  bool contains(const ImageId& id) const;

  /// Top-k by cosine similarity; ties by ascending image_id. Only images
  /// sharing at least one word with the query are returned.
  std::vector<RankedMatch> query(const WeightedBovw& query, std::size_t k) const;

  friend InvertedIndex build_index(std::span<const IndexedImage> images, std::vector<double> idf);
  friend void save_index(const std::filesystem::path&, const InvertedIndex&);
  friend InvertedIndex load_index(const std::filesystem::path&);

private:
  std::vector<ImageId> ids_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<double> idf_;
  std::vector<double> norms_;
};

/// Throws ValidationError on duplicate ids.
InvertedIndex build_index(std::span<const IndexedImage> images, std::vector<double> idf);

/// Quantised word lists of a corpus, as consumed by index_corpus.
struct WordCorpus {
  std::vector<ImageId> ids;
  std::vector<std::vector<WordId>> words;
};

/// Computes idf over the corpus, weights every image and indexes it.
InvertedIndex index_corpus(const WordCorpus& corpus, std::size_t vocabulary_size);

inline constexpr std::uint16_t kIndexVersion = 1;
void save_index(const std::filesystem::path& file, const InvertedIndex& index);
InvertedIndex load_index(const std::filesystem::path& file);

}  // namespace lmr
