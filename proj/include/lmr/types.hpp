#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lmr {

using ImageId = std::string;
using WordId = std::uint32_t;

/// n x D descriptors, one feature per row.
using DescriptorMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// n x 4 keypoints: x, y, scale, orientation.
using KeypointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;

template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;
using Points2d = Points2<double>;

struct LocalFeature {
  double x = 0;
  double y = 0;
  double scale = 1;
  double orientation = 0;
  Eigen::VectorXf descriptor;
};

enum class ImageSource { ingested, synthetic };

/// The 13 query categories used for per-category reporting.
std::vector<std::string> default_taxonomy();

struct ImageRecord {
  ImageId id;
  int width = 0;
  int height = 0;
  KeypointMatrix keypoints;
  DescriptorMatrix descriptors;
  std::string owner;
  std::string title;
  std::vector<std::string> tags;
  std::optional<std::string> category;
  ImageSource source = ImageSource::ingested;

  std::size_t feature_count() const noexcept {
    return static_cast<std::size_t>(keypoints.rows());
  }
  LocalFeature feature(std::size_t i) const;
  void set_features(std::span<const LocalFeature> features, std::size_t dim);
  /// 2 x n feature positions.
  Points2d positions() const { return keypoints.leftCols<2>().transpose(); }
};

struct Dataset {
  std::uint32_t descriptor_dim = 128;
  std::vector<std::string> taxonomy = default_taxonomy();
  std::vector<ImageRecord> images;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  /// Position of an image by id; rebuilt lazily when images change size.
  std::optional<std::size_t> find(const ImageId& id) const;
  const ImageRecord& at(const ImageId& id) const;

private:
  mutable std::unordered_map<ImageId, std::size_t> lookup_;
  mutable std::size_t lookup_size_ = 0;
  mutable std::shared_ptr<std::mutex> lookup_mutex_ = std::make_shared<std::mutex>();
};

enum class Rating { bad = 0, ok = 1, good = 2 };

std::string to_string(Rating r);
Rating parse_rating(const std::string& s);

struct RelevanceAnnotation {
  ImageId query_id;
  std::string object_id;
  Rating rating = Rating::bad;
};

}  // namespace lmr
