#pragma once

#include "lmr/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lmr {

inline constexpr std::uint16_t kDescriptorStoreVersion = 1;

/// Per-image metadata line of manifest.jsonl.
struct ImageMeta {
  ImageId id;
  int width = 0;
  int height = 0;
  std::string owner;
  std::string title;
  std::vector<std::string> tags;
  std::optional<std::string> category;
  ImageSource source = ImageSource::ingested;
  std::uint64_t offset = 0;  // byte offset of the image block in descriptors.bin
  std::uint64_t feature_count = 0;
};

struct DatasetManifest {
  std::uint32_t descriptor_dim = 128;
  std::vector<std::string> taxonomy = default_taxonomy();
  std::vector<ImageMeta> images;

  std::size_t size() const noexcept { return images.size(); }
};

ImageMeta meta_of(const ImageRecord& record);
DatasetManifest manifest_of(const Dataset& dataset);

/// Random-access reader over a dataset directory. Immutable; read() may be
/// called concurrently since every call opens its own stream.
class DatasetReader {
public:
  explicit DatasetReader(std::filesystem::path dir);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  ImageRecord read(std::size_t i) const;
  Dataset read_all() const;

private:
  std::filesystem::path dir_;
  DatasetManifest manifest_;
};

/// Validates the descriptor store header and every block extent.
DatasetReader load_dataset(const std::filesystem::path& dir);

/// Writes manifest.jsonl and descriptors.bin. Offsets in `manifest` are
/// recomputed; everything else must agree with `records`.
void save_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                  std::span<const ImageRecord> records);
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

void save_annotations(const std::filesystem::path& file,
                      std::span<const RelevanceAnnotation> annotations);
std::vector<RelevanceAnnotation> load_annotations(const std::filesystem::path& file);

}  // namespace lmr
