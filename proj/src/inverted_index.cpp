#include "lmr/inverted_index.hpp"

#include "lmr/binary_io.hpp"
#include "lmr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lmr {

std::size_t InvertedIndex::posting_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : postings_) n += p.size();
  return n;
}

bool InvertedIndex::contains(const ImageId& id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

InvertedIndex build_index(std::span<const IndexedImage> images, std::vector<double> idf) {
  InvertedIndex index;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return images[a].id < images[b].id; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (images[order[i]].id == images[order[i - 1]].id)
      throw ValidationError("duplicate image id '" + images[order[i]].id + "' in index");

  index.idf_ = std::move(idf);
  index.postings_.assign(index.idf_.size(), {});
  index.ids_.reserve(images.size());
  index.norms_.reserve(images.size());
  for (std::size_t doc = 0; doc < order.size(); ++doc) {
    const auto& im = images[order[doc]];
    index.ids_.push_back(im.id);
    index.norms_.push_back(im.bovw.norm());
    for (WeightedBovw::InnerIterator it(im.bovw); it; ++it) {
      const auto w = static_cast<std::size_t>(it.index());
      if (w >= index.postings_.size())
        throw ValidationError("image '" + im.id + "' uses a word outside the idf table");
      if (it.value() > 0)
        index.postings_[w].push_back({static_cast<std::uint32_t>(doc), it.value()});
    }
  }
  return index;
}

InvertedIndex index_corpus(const WordCorpus& corpus, std::size_t vocabulary_size) {
  auto idf = compute_idf(corpus.words, vocabulary_size);
  std::vector<IndexedImage> images;
  images.reserve(corpus.ids.size());
  for (std::size_t i = 0; i < corpus.ids.size(); ++i)
    images.push_back({corpus.ids[i], build_bovw(corpus.words[i], idf)});
  return build_index(images, std::move(idf));
}

std::vector<RankedMatch> InvertedIndex::query(const WeightedBovw& q, std::size_t k) const {
  std::vector<RankedMatch> result;
  if (k == 0 || ids_.empty()) return result;
  std::vector<double> acc(ids_.size(), 0.0);
  std::vector<char> touched(ids_.size(), 0);
  std::vector<std::uint32_t> hits;
  for (WeightedBovw::InnerIterator it(q); it; ++it) {
    const auto w = static_cast<std::size_t>(it.index());
    if (w >= postings_.size()) continue;
    for (const auto& p : postings_[w]) {
      acc[p.doc] += it.value() * p.weight;
      if (!touched[p.doc]) {
        touched[p.doc] = 1;
        hits.push_back(p.doc);
      }
    }
  }
  const double qnorm = q.norm();
  if (hits.empty() || qnorm <= 0) return result;
  auto score = [&](std::uint32_t d) { return acc[d] / (qnorm * norms_[d]); };
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    const double sa = score(a), sb = score(b);
    return sa > sb || (sa == sb && a < b);
  };
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    better);
  result.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    RankedMatch m;
    m.image_id = ids_[hits[i]];
    m.tfidf_score = score(hits[i]);
    result.push_back(std::move(m));
  }
  return result;
}

void save_index(const std::filesystem::path& file, const InvertedIndex& index) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write("LMIX", 4);
  binary::write<std::uint16_t>(out, kIndexVersion);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(index.idf_.size()));
  binary::write<std::uint64_t>(out, index.ids_.size());
  for (std::size_t d = 0; d < index.ids_.size(); ++d) {
    binary::write_string(out, index.ids_[d]);
    binary::write<double>(out, index.norms_[d]);
  }
  for (double v : index.idf_) binary::write<double>(out, v);
  for (const auto& list : index.postings_) {
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      binary::write<std::uint32_t>(out, p.doc);
      binary::write<double>(out, p.weight);
    }
  }
  if (!out) throw IoError("failed writing " + file.string());
}

InvertedIndex load_index(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  binary::expect_magic(in, "LMIX");
  const auto version = binary::read<std::uint16_t>(in, "index version");
  if (version != kIndexVersion)
    throw FormatError("unsupported index version " + std::to_string(version), 4);
  InvertedIndex index;
  const auto k = binary::read<std::uint32_t>(in, "vocabulary size");
  const auto n = binary::read<std::uint64_t>(in, "document count");
  for (std::uint64_t d = 0; d < n; ++d) {
    index.ids_.push_back(binary::read_string(in, "image id"));
    index.norms_.push_back(binary::read<double>(in, "norm"));
  }
  index.idf_.resize(k);
  for (auto& v : index.idf_) v = binary::read<double>(in, "idf");
  index.postings_.resize(k);
  for (auto& list : index.postings_) {
    const auto count = binary::read<std::uint32_t>(in, "posting count");
    list.resize(count);
    for (auto& p : list) {
      const auto offset = static_cast<std::uint64_t>(in.tellg());
      p.doc = binary::read<std::uint32_t>(in, "posting doc");
      p.weight = binary::read<double>(in, "posting weight");
      if (p.doc >= n) throw FormatError("posting references unknown document", offset);
    }
  }
  return index;
}

}  // namespace lmr
