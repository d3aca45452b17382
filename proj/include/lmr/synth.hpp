#pragma once

#include "lmr/types.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmr {

enum class Archetype { flat_small, flat_large, solid_3d, facade_detail, panorama };
enum class TagModel { clean, noisy, generic };

std::string to_string(Archetype a);
Archetype parse_archetype(std::string_view s);
std::string to_string(TagModel m);
TagModel parse_tag_model(std::string_view s);

struct NoiseConfig {
  double descriptor_sigma = 0.02;
  double position_sigma = 0.25;
  double dropout = 0.1;
  int distractors = 15;
  double viewpoint_drift = 0.0;   // descriptor shift per degree of yaw/pitch
  double min_feature_px = 1.5;    // features projecting smaller are undetected
  double view_window_deg = 0.0;   // solid-3d relief: 0 disables
};

struct TagConfig {
  double p_correct = 0.9;
  double p_misspell = 0.0;
  double p_generic = 0.3;
  double p_parent_name = 0.3;     // detail views tagged with the parent's name
  double p_title_name = 0.2;
  double filename_rate = 0.1;
  double spam_rate = 0.0;         // fraction of objects with one spamming owner
  int spam_views = 0;
};

struct GroupConfig {
  Archetype archetype = Archetype::flat_small;
  int count = 0;
  int views = 0;                  // 0: power law between views_min and views_max
  int views_min = 5;
  int views_max = 40;
  double exponent = 1.0;
  int queries = 0;
  int features = 200;
  std::string category = "Other";
  TagModel tag_model = TagModel::clean;
  std::optional<double> max_angle_deg;
  std::optional<NoiseConfig> noise;
  std::optional<int> parent_group;  // facade-detail: index of a flat-large group
  double detail_fraction = 0.04;    // detail area / parent plane area
  int detail_features = 40;         // extra parent features inside each detail
};

struct GeneratorConfig {
  std::uint32_t descriptor_dim = 32;
  int image_width = 640;
  int image_height = 480;
  double focal = 600.0;
  int owner_pool = 200;
  double descriptor_margin = 0.5;
  NoiseConfig noise;
  TagConfig tags;
  std::vector<GroupConfig> groups;
  int distractor_images = 0;
  int distractor_features = 150;
  double duplicate_query_rate = 0.0;
};

GeneratorConfig parse_generator_config(std::string_view json_text);
GeneratorConfig load_generator_config(const std::filesystem::path& file);
std::string generator_config_json(const GeneratorConfig& config);

struct PlaneFeature {
  Eigen::Vector2d position;
  double size = 1;          // object units
  double orientation = 0;
  double preferred_yaw = 0; // degrees, used with view_window_deg
  Eigen::VectorXf prototype;
  Eigen::VectorXf drift_u;
  Eigen::VectorXf drift_v;
  int object = -1;          // index into Scene::objects
};

/// A planar surface carrying the constellations of one or more objects.
struct ScenePlane {
  std::string id;
  double width = 0;
  double height = 0;
  std::vector<PlaneFeature> features;
};

struct SceneObject {
  std::string object_id;
  Archetype archetype = Archetype::flat_small;
  std::string true_name;
  std::optional<std::string> parent;
  std::string category;
  double popularity = 0;
  TagModel tag_model = TagModel::clean;
  std::vector<int> planes;       // indices into Scene::planes (faces for solid-3d)
  Eigen::AlignedBox2d region;    // extent within its first plane
};

struct ViewSpec {
  int object = -1;
  int plane = -1;
  Eigen::Matrix3d plane_to_image = Eigen::Matrix3d::Identity();
  double yaw = 0;
  double pitch = 0;
  int width = 640;
  int height = 480;
  NoiseConfig noise;
  std::string owner;
  std::string title;
  std::vector<std::string> tags;
};

/// Plane -> image homography of a camera looking at plane point `target`
/// from distance focal/scale, rotated by yaw, pitch, roll (degrees).
Eigen::Matrix3d camera_homography(double focal, int width, int height, Eigen::Vector2d target,
                                  double scale, double yaw, double pitch, double roll);

struct RenderedView {
  ImageRecord record;
  std::vector<int> sources;  // plane feature index per feature, -1 for distractors
};

RenderedView render_view(const ScenePlane& plane, const ViewSpec& view, std::uint32_t dim,
                         std::uint64_t seed);

struct TruthObject {
  std::string id;
  Archetype archetype = Archetype::flat_small;
  std::string true_name;
  std::optional<std::string> parent;
  std::string category;
  double popularity = 0;
};

struct TruthImage {
  ImageId id;
  bool is_query = false;
  std::optional<std::string> object;
  std::string plane;
  Eigen::Matrix3d plane_to_image = Eigen::Matrix3d::Identity();
  std::optional<ImageId> duplicate_of;
  std::vector<int> sources;
};

class GroundTruth {
public:
  std::vector<TruthObject> objects;
  std::vector<TruthImage> images;

  const TruthObject* object(const std::string& id) const;
  const TruthImage* image(const ImageId& id) const;
  /// good: same object; ok: detail <-> parent; bad otherwise.
  Rating rating(const std::string& query_object, const std::string& object) const;
  /// a -> b image homography when both views show the same plane.
  std::optional<Eigen::Matrix3d> true_homography(const ImageId& a, const ImageId& b) const;
  /// Names counted as a correct label for a query of `object`: its own and,
  /// for details, the parent's.
  std::vector<std::string> accepted_names(const std::string& object) const;
  /// Names of objects rated ok for a query of `object`.
  std::vector<std::string> ok_names(const std::string& object) const;
  /// Every (query, object) pair with its rating.
  std::vector<RelevanceAnnotation> annotations() const;
  /// Database images showing each object.
  std::vector<ImageId> members(const std::string& object) const;

private:
  mutable std::unordered_map<std::string, std::size_t> object_lookup_;
  mutable std::unordered_map<ImageId, std::size_t> image_lookup_;
  mutable std::shared_ptr<std::mutex> lookup_mutex_ = std::make_shared<std::mutex>();
};

void save_ground_truth(const std::filesystem::path& file, const GroundTruth& truth);
GroundTruth load_ground_truth(const std::filesystem::path& file);

struct Scene {
  std::vector<ScenePlane> planes;
  std::vector<SceneObject> objects;
};

struct GeneratedData {
  Scene scene;
  Dataset database;
  Dataset queries;
  GroundTruth truth;
};

/// Deterministic in (config, seed). Throws ValidationError on infeasible
/// configurations.
GeneratedData generate_dataset(const GeneratorConfig& config, std::uint64_t seed);

}  // namespace lmr
