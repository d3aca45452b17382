#include "lmr/synth.hpp"

#include "lmr/error.hpp"
#include "lmr/homography.hpp"

#include "json_util.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace lmr {

using json = nlohmann::json;

std::string to_string(Archetype a) {
  switch (a) {
    case Archetype::flat_small: return "flat-small";
    case Archetype::flat_large: return "flat-large";
    case Archetype::solid_3d: return "solid-3d";
    case Archetype::facade_detail: return "facade-detail";
    case Archetype::panorama: return "panorama";
  }
  return "flat-small";
}

Archetype parse_archetype(std::string_view s) {
  for (auto a : {Archetype::flat_small, Archetype::flat_large, Archetype::solid_3d,
                 Archetype::facade_detail, Archetype::panorama})
    if (to_string(a) == s) return a;
  throw ValidationError("unknown archetype '" + std::string(s) + "'");
}

std::string to_string(TagModel m) {
  switch (m) {
    case TagModel::clean: return "clean";
    case TagModel::noisy: return "noisy";
    case TagModel::generic: return "generic";
  }
  return "clean";
}

TagModel parse_tag_model(std::string_view s) {
  for (auto m : {TagModel::clean, TagModel::noisy, TagModel::generic})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown tag model '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// config

namespace {

using detail::check_keys;
using detail::get_to;

NoiseConfig parse_noise(const json& j, NoiseConfig n) {
  check_keys(j,
             {"descriptor_sigma", "position_sigma", "dropout", "distractors", "viewpoint_drift",
              "min_feature_px", "view_window_deg"},
             "noise");
  get_to(j, "descriptor_sigma", n.descriptor_sigma);
  get_to(j, "position_sigma", n.position_sigma);
  get_to(j, "dropout", n.dropout);
  get_to(j, "distractors", n.distractors);
  get_to(j, "viewpoint_drift", n.viewpoint_drift);
  get_to(j, "min_feature_px", n.min_feature_px);
  get_to(j, "view_window_deg", n.view_window_deg);
  if (n.dropout < 0 || n.dropout >= 1) throw ValidationError("noise.dropout must be in [0,1)");
  if (n.descriptor_sigma < 0 || n.position_sigma < 0 || n.distractors < 0)
    throw ValidationError("noise levels must be non-negative");
  return n;
}

json noise_json(const NoiseConfig& n) {
  return {{"descriptor_sigma", n.descriptor_sigma}, {"position_sigma", n.position_sigma},
          {"dropout", n.dropout},                   {"distractors", n.distractors},
          {"viewpoint_drift", n.viewpoint_drift},   {"min_feature_px", n.min_feature_px},
          {"view_window_deg", n.view_window_deg}};
}

}  // namespace

GeneratorConfig parse_generator_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("generator config: ") + e.what(), e.byte);
  }
  GeneratorConfig c;
  check_keys(j,
             {"descriptor_dim", "image_width", "image_height", "focal", "owner_pool",
              "descriptor_margin", "noise", "tags", "groups", "distractor_images",
              "distractor_features", "duplicate_query_rate"},
             "generator");
  get_to(j, "descriptor_dim", c.descriptor_dim);
  get_to(j, "image_width", c.image_width);
  get_to(j, "image_height", c.image_height);
  get_to(j, "focal", c.focal);
  get_to(j, "owner_pool", c.owner_pool);
  get_to(j, "descriptor_margin", c.descriptor_margin);
  get_to(j, "distractor_images", c.distractor_images);
  get_to(j, "distractor_features", c.distractor_features);
  get_to(j, "duplicate_query_rate", c.duplicate_query_rate);
  if (j.contains("noise")) c.noise = parse_noise(j["noise"], c.noise);
  if (j.contains("tags")) {
    const auto& t = j["tags"];
    check_keys(t,
               {"p_correct", "p_misspell", "p_generic", "p_parent_name", "p_title_name",
                "filename_rate", "spam_rate", "spam_views"},
               "tags");
    get_to(t, "p_correct", c.tags.p_correct);
    get_to(t, "p_misspell", c.tags.p_misspell);
    get_to(t, "p_generic", c.tags.p_generic);
    get_to(t, "p_parent_name", c.tags.p_parent_name);
    get_to(t, "p_title_name", c.tags.p_title_name);
    get_to(t, "filename_rate", c.tags.filename_rate);
    get_to(t, "spam_rate", c.tags.spam_rate);
    get_to(t, "spam_views", c.tags.spam_views);
  }
  if (j.contains("groups")) {
    for (const auto& g : j["groups"]) {
      check_keys(g,
                 {"archetype", "count", "views", "views_min", "views_max", "exponent", "queries",
                  "features", "category", "tag_model", "max_angle_deg", "noise", "parent_group",
                  "detail_fraction", "detail_features"},
                 "group");
      GroupConfig gc;
      if (g.contains("archetype")) gc.archetype = parse_archetype(g["archetype"].get<std::string>());
      if (g.contains("tag_model")) gc.tag_model = parse_tag_model(g["tag_model"].get<std::string>());
      get_to(g, "count", gc.count);
      get_to(g, "views", gc.views);
      get_to(g, "views_min", gc.views_min);
      get_to(g, "views_max", gc.views_max);
      get_to(g, "exponent", gc.exponent);
      get_to(g, "queries", gc.queries);
      get_to(g, "features", gc.features);
      get_to(g, "category", gc.category);
      get_to(g, "detail_fraction", gc.detail_fraction);
      get_to(g, "detail_features", gc.detail_features);
      if (g.contains("max_angle_deg")) gc.max_angle_deg = g["max_angle_deg"].get<double>();
      if (g.contains("parent_group")) gc.parent_group = g["parent_group"].get<int>();
      if (g.contains("noise")) gc.noise = parse_noise(g["noise"], c.noise);
      c.groups.push_back(std::move(gc));
    }
  }
  if (c.descriptor_dim == 0) throw ValidationError("descriptor_dim must be positive");
  if (c.image_width <= 0 || c.image_height <= 0 || c.focal <= 0)
    throw ValidationError("image frame and focal length must be positive");
  if (c.owner_pool <= 0) throw ValidationError("owner_pool must be positive");
  return c;
}

GeneratorConfig load_generator_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_generator_config(ss.str());
}

std::string generator_config_json(const GeneratorConfig& c) {
  json groups = json::array();
  for (const auto& g : c.groups) {
    json jg = {{"archetype", to_string(g.archetype)},
               {"count", g.count},
               {"views", g.views},
               {"views_min", g.views_min},
               {"views_max", g.views_max},
               {"exponent", g.exponent},
               {"queries", g.queries},
               {"features", g.features},
               {"category", g.category},
               {"tag_model", to_string(g.tag_model)},
               {"detail_fraction", g.detail_fraction},
               {"detail_features", g.detail_features}};
    if (g.max_angle_deg) jg["max_angle_deg"] = *g.max_angle_deg;
    if (g.noise) jg["noise"] = noise_json(*g.noise);
    if (g.parent_group) jg["parent_group"] = *g.parent_group;
    groups.push_back(std::move(jg));
  }
  json j = {{"descriptor_dim", c.descriptor_dim},
            {"image_width", c.image_width},
            {"image_height", c.image_height},
            {"focal", c.focal},
            {"owner_pool", c.owner_pool},
            {"descriptor_margin", c.descriptor_margin},
            {"noise", noise_json(c.noise)},
            {"tags",
             {{"p_correct", c.tags.p_correct},
              {"p_misspell", c.tags.p_misspell},
              {"p_generic", c.tags.p_generic},
              {"p_parent_name", c.tags.p_parent_name},
              {"p_title_name", c.tags.p_title_name},
              {"filename_rate", c.tags.filename_rate},
              {"spam_rate", c.tags.spam_rate},
              {"spam_views", c.tags.spam_views}}},
            {"groups", std::move(groups)},
            {"distractor_images", c.distractor_images},
            {"distractor_features", c.distractor_features},
            {"duplicate_query_rate", c.duplicate_query_rate}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// rendering

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal(double sigma) {
    return sigma > 0 ? std::normal_distribution<double>(0.0, sigma)(engine) : 0.0;
  }
  bool chance(double p) { return uniform(0, 1) < p; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine); }
  std::mt19937_64 engine;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXf random_unit(Rng& rng, std::uint32_t dim) {
  Eigen::VectorXf v(dim);
  for (std::uint32_t d = 0; d < dim; ++d) v[d] = static_cast<float>(rng.normal(1.0));
  const float n = v.norm();
  return n > 0 ? Eigen::VectorXf(v / n) : v;
}

}  // namespace

Eigen::Matrix3d camera_homography(double focal, int width, int height, Eigen::Vector2d target,
                                  double scale, double yaw, double pitch, double roll) {
  Eigen::Matrix3d k;
  k << focal, 0, width / 2.0, 0, focal, height / 2.0, 0, 0, 1;
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(roll * kDeg, Eigen::Vector3d::UnitZ()) *
                             Eigen::AngleAxisd(pitch * kDeg, Eigen::Vector3d::UnitX()) *
                             Eigen::AngleAxisd(yaw * kDeg, Eigen::Vector3d::UnitY()))
                                .toRotationMatrix();
  const double distance = focal / scale;
  Eigen::Matrix3d m;
  m.col(0) = r.col(0);
  m.col(1) = r.col(1);
  m.col(2) = Eigen::Vector3d(0, 0, distance);
  Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
  shift(0, 2) = -target.x();
  shift(1, 2) = -target.y();
  Eigen::Matrix3d h = normalize_homography(k * m * shift);
  // Keep the sign under which points in front of the camera have w > 0.
  if ((h * target.homogeneous()).z() < 0) h = -h;
  return h;
}

RenderedView render_view(const ScenePlane& plane, const ViewSpec& view, std::uint32_t dim,
                         std::uint64_t seed) {
  Rng rng(seed);
  const auto& noise = view.noise;
  const Eigen::Matrix3d& h = view.plane_to_image;
  std::vector<LocalFeature> features;
  std::vector<int> sources;
  for (std::size_t i = 0; i < plane.features.size(); ++i) {
    const auto& f = plane.features[i];
    const Eigen::Vector3d p = h * f.position.homogeneous();
    if (p.z() <= 0) continue;
    const Eigen::Vector2d px = p.head<2>() / p.z();
    if (px.x() < 0 || px.y() < 0 || px.x() >= view.width || px.y() >= view.height) continue;
    Eigen::Matrix2d jac = (h.topLeftCorner<2, 2>() - px * h.block<1, 2>(2, 0)) / p.z();
    const double local_scale = std::sqrt(std::abs(jac.determinant()));
    if (f.size * local_scale < noise.min_feature_px) continue;
    if (noise.view_window_deg > 0 && std::abs(view.yaw - f.preferred_yaw) > noise.view_window_deg)
      continue;
    if (noise.dropout > 0 && rng.chance(noise.dropout)) continue;

    LocalFeature lf;
    lf.x = px.x() + rng.normal(noise.position_sigma);
    lf.y = px.y() + rng.normal(noise.position_sigma);
    lf.scale = f.size * local_scale;
    double o = f.orientation + std::atan2(jac(1, 0), jac(0, 0));
    o = std::fmod(o, 2 * std::numbers::pi);
    if (o < 0) o += 2 * std::numbers::pi;
    lf.orientation = o;
    lf.descriptor = f.prototype;
    if (noise.viewpoint_drift != 0)
      lf.descriptor += static_cast<float>(noise.viewpoint_drift * view.yaw) * f.drift_u +
                       static_cast<float>(noise.viewpoint_drift * view.pitch) * f.drift_v;
    for (std::uint32_t d = 0; d < dim; ++d)
      lf.descriptor[d] = std::max(0.0f, lf.descriptor[d] + static_cast<float>(rng.normal(noise.descriptor_sigma)));
    if (lf.x < 0 || lf.y < 0 || lf.x >= view.width || lf.y >= view.height) continue;
    features.push_back(std::move(lf));
    sources.push_back(static_cast<int>(i));
  }
  for (int k = 0; k < noise.distractors; ++k) {
    LocalFeature lf;
    lf.x = rng.uniform(0, view.width);
    lf.y = rng.uniform(0, view.height);
    lf.scale = rng.uniform(1.5, 6.0);
    lf.orientation = rng.uniform(0, 2 * std::numbers::pi);
    lf.descriptor.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) lf.descriptor[d] = static_cast<float>(rng.uniform(0, 1));
    features.push_back(std::move(lf));
    sources.push_back(-1);
  }
  RenderedView out;
  out.record.width = view.width;
  out.record.height = view.height;
  out.record.owner = view.owner;
  out.record.title = view.title;
  out.record.tags = view.tags;
  out.record.source = ImageSource::synthetic;
  out.record.set_features(features, dim);
  out.sources = std::move(sources);
  return out;
}

// ---------------------------------------------------------------------------
// ground truth

const TruthObject* GroundTruth::object(const std::string& id) const {
  std::lock_guard lock(*lookup_mutex_);
  auto it = object_lookup_.find(id);
  if (it == object_lookup_.end() || it->second >= objects.size() || objects[it->second].id != id) {
    object_lookup_.clear();
    for (std::size_t i = 0; i < objects.size(); ++i) object_lookup_.emplace(objects[i].id, i);
    it = object_lookup_.find(id);
  }
  return it == object_lookup_.end() ? nullptr : &objects[it->second];
}

const TruthImage* GroundTruth::image(const ImageId& id) const {
  std::lock_guard lock(*lookup_mutex_);
  auto it = image_lookup_.find(id);
  if (it == image_lookup_.end() || it->second >= images.size() || images[it->second].id != id) {
    image_lookup_.clear();
    for (std::size_t i = 0; i < images.size(); ++i) image_lookup_.emplace(images[i].id, i);
    it = image_lookup_.find(id);
  }
  return it == image_lookup_.end() ? nullptr : &images[it->second];
}

Rating GroundTruth::rating(const std::string& query_object, const std::string& object_id) const {
  if (query_object == object_id) return Rating::good;
  const auto* q = object(query_object);
  const auto* o = object(object_id);
  if (!q || !o) return Rating::bad;
  if ((q->parent && *q->parent == o->id) || (o->parent && *o->parent == q->id)) return Rating::ok;
  return Rating::bad;
}

std::optional<Eigen::Matrix3d> GroundTruth::true_homography(const ImageId& a,
                                                            const ImageId& b) const {
  const auto* ia = image(a);
  const auto* ib = image(b);
  if (!ia || !ib || ia->plane.empty() || ia->plane != ib->plane) return std::nullopt;
  return normalize_homography(ib->plane_to_image * ia->plane_to_image.inverse());
}

std::vector<std::string> GroundTruth::accepted_names(const std::string& object_id) const {
  std::vector<std::string> names;
  if (const auto* o = object(object_id)) {
    names.push_back(o->true_name);
    if (o->parent)
      if (const auto* p = object(*o->parent)) names.push_back(p->true_name);
  }
  return names;
}

std::vector<std::string> GroundTruth::ok_names(const std::string& object_id) const {
  std::vector<std::string> names;
  for (const auto& o : objects)
    if (rating(object_id, o.id) == Rating::ok) names.push_back(o.true_name);
  return names;
}

std::vector<RelevanceAnnotation> GroundTruth::annotations() const {
  std::vector<RelevanceAnnotation> out;
  for (const auto& img : images) {
    if (!img.is_query || !img.object) continue;
    for (const auto& o : objects) out.push_back({img.id, o.id, rating(*img.object, o.id)});
  }
  return out;
}

std::vector<ImageId> GroundTruth::members(const std::string& object_id) const {
  std::vector<ImageId> out;
  for (const auto& img : images)
    if (!img.is_query && img.object && *img.object == object_id) out.push_back(img.id);
  return out;
}

void save_ground_truth(const std::filesystem::path& file, const GroundTruth& truth) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& o : truth.objects) {
    json j = {{"kind", "object"},         {"id", o.id},
              {"archetype", to_string(o.archetype)}, {"true_name", o.true_name},
              {"parent", o.parent ? json(*o.parent) : json(nullptr)},
              {"category", o.category},   {"popularity", o.popularity}};
    out << j.dump() << '\n';
  }
  for (const auto& img : truth.images) {
    std::vector<double> h(img.plane_to_image.data(), img.plane_to_image.data() + 9);
    json j = {{"kind", "image"},
              {"id", img.id},
              {"is_query", img.is_query},
              {"object", img.object ? json(*img.object) : json(nullptr)},
              {"plane", img.plane},
              {"plane_to_image", h},
              {"duplicate_of", img.duplicate_of ? json(*img.duplicate_of) : json(nullptr)},
              {"sources", img.sources}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + file.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  GroundTruth truth;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("kind") == "object") {
        TruthObject o;
        o.id = j.at("id").get<std::string>();
        o.archetype = parse_archetype(j.at("archetype").get<std::string>());
        o.true_name = j.at("true_name").get<std::string>();
        if (!j.at("parent").is_null()) o.parent = j.at("parent").get<std::string>();
        o.category = j.at("category").get<std::string>();
        o.popularity = j.at("popularity").get<double>();
        truth.objects.push_back(std::move(o));
      } else {
        TruthImage img;
        img.id = j.at("id").get<std::string>();
        img.is_query = j.at("is_query").get<bool>();
        if (!j.at("object").is_null()) img.object = j.at("object").get<std::string>();
        img.plane = j.at("plane").get<std::string>();
        const auto h = j.at("plane_to_image").get<std::vector<double>>();
        if (h.size() != 9) throw ValidationError("plane_to_image needs 9 entries");
        img.plane_to_image = Eigen::Map<const Eigen::Matrix3d>(h.data());
        if (!j.at("duplicate_of").is_null()) img.duplicate_of = j.at("duplicate_of").get<std::string>();
        img.sources = j.at("sources").get<std::vector<int>>();
        truth.images.push_back(std::move(img));
      }
    } catch (const json::exception& e) {
      throw FormatError(file.string() + ": " + e.what(), line_offset);
    }
  }
  return truth;
}

// ---------------------------------------------------------------------------
// generation

namespace {

struct ArchetypeShape {
  double width;
  double height;
  double max_angle;
  double scale_lo;
  double scale_hi;
  double roll;
  double jitter;
};

ArchetypeShape shape_of(Archetype a) {
  switch (a) {
    case Archetype::flat_small: return {400, 300, 15, 0.7, 1.0, 5, 0.05};
    case Archetype::flat_large: return {2000, 1000, 25, 0.8, 1.05, 3, 0.03};
    case Archetype::solid_3d: return {600, 600, 55, 0.75, 1.0, 4, 0.04};
    case Archetype::facade_detail: return {0, 0, 20, 0.8, 1.05, 4, 0.05};
    case Archetype::panorama: return {6000, 1000, 10, 1.0, 1.3, 3, 0.0};
  }
  return {400, 300, 15, 0.7, 1.0, 5, 0.05};
}

const std::vector<std::string>& generic_terms(const std::string& category) {
  static const std::vector<std::string> murals{"mural", "street art", "graffiti", "wall"};
  static const std::vector<std::string> paintings{"painting", "museum", "art", "gallery"};
  static const std::vector<std::string> sculptures{"sculpture", "statue", "museum", "art"};
  static const std::vector<std::string> windows{"window", "stained glass", "church"};
  static const std::vector<std::string> buildings{"building", "architecture", "facade", "church"};
  static const std::vector<std::string> panoramas{"panorama", "skyline", "view", "city"};
  static const std::vector<std::string> other{"city", "travel", "street", "trip"};
  if (category == "Murals") return murals;
  if (category == "Paintings") return paintings;
  if (category == "Sculptures" || category == "Artifacts") return sculptures;
  if (category == "Windows") return windows;
  if (category == "Landmark Buildings" || category == "Building Details") return buildings;
  if (category == "Panoramas") return panoramas;
  return other;
}

const std::vector<std::string> kStopTerms{"paris", "france", "europe", "vacation", "photo", "canon"};

std::string make_word(Rng& rng, int syllables) {
  static const char* kSyllables[] = {"ka", "lo", "mi", "ren", "tor", "vel", "sa",  "dun",
                                     "bri", "mon", "la", "ce", "ar", "quin", "so", "pe",
                                     "ta", "ni", "vor", "du", "mer", "li", "gan", "ro"};
  std::string w;
  for (int i = 0; i < syllables; ++i) w += kSyllables[rng.index(std::size(kSyllables))];
  return w;
}

std::string make_name(Rng& rng, std::set<std::string>& used) {
  static const char* kHeads[] = {"pont", "musee", "tour", "place", "galerie", "porte", "rue", "parc"};
  for (;;) {
    std::string name = std::string(kHeads[rng.index(std::size(kHeads))]) + " " +
                       make_word(rng, 2 + static_cast<int>(rng.index(2)));
    if (used.insert(name).second) return name;
  }
}

std::string misspell(const std::string& name, Rng& rng) {
  for (;;) {
    std::string v = name;
    const std::size_t i = rng.index(v.size());
    switch (rng.index(5)) {
      case 0: v.erase(i, 1); break;
      case 1: v.insert(i, 1, v[i]); break;
      case 2:
        if (i + 1 < v.size()) std::swap(v[i], v[i + 1]);
        break;
      case 3: v.erase(std::remove(v.begin(), v.end(), ' '), v.end()); break;
      case 4: v += "s"; break;
    }
    if (v != name && !v.empty() && v.front() != ' ' && v.back() != ' ') return v;
  }
}

std::string title_case(std::string s) {
  bool start = true;
  for (auto& c : s) {
    if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    start = c == ' ';
  }
  return s;
}

std::string camera_filename(Rng& rng) {
  char buf[32];
  if (rng.chance(0.5))
    std::snprintf(buf, sizeof buf, "DSC%06d.JPG", static_cast<int>(rng.index(1000000)));
  else
    std::snprintf(buf, sizeof buf, "IMG_%04d.jpg", static_cast<int>(rng.index(10000)));
  return buf;
}

struct PendingView {
  ViewSpec spec;
  bool is_query = false;
  int duplicate_of = -1;  // index into the query list
};

class Builder {
public:
  Builder(const GeneratorConfig& config, std::uint64_t seed) : c_(config), seed_(seed), rng_(seed) {}

  GeneratedData run();

private:
  void validate() const;
  void build_objects();
  void assign_prototypes();
  ViewSpec sample_view(int object, const GroupConfig& group);
  void emit_tags(ViewSpec& v, const SceneObject& o, const std::string* parent_name);
  void add_feature(ScenePlane& plane, int object, Eigen::AlignedBox2d box, double size);

  const GeneratorConfig& c_;
  std::uint64_t seed_;
  Rng rng_;
  Scene scene_;
  std::vector<int> group_of_;      // object -> group
  std::vector<int> index_in_group_;
  std::set<std::string> names_;
};

void Builder::validate() const {
  const auto taxonomy = default_taxonomy();
  for (std::size_t g = 0; g < c_.groups.size(); ++g) {
    const auto& gc = c_.groups[g];
    if (gc.count < 0 || gc.queries < 0 || gc.features < 0 || gc.views < 0)
      throw ValidationError("group " + std::to_string(g) + ": counts must be non-negative");
    if (std::find(taxonomy.begin(), taxonomy.end(), gc.category) == taxonomy.end())
      throw ValidationError("group " + std::to_string(g) + ": unknown category '" + gc.category + "'");
    if (gc.archetype == Archetype::facade_detail && gc.count > 0) {
      if (!gc.parent_group || *gc.parent_group < 0 ||
          static_cast<std::size_t>(*gc.parent_group) >= c_.groups.size())
        throw ValidationError("group " + std::to_string(g) + ": facade-detail needs a parent_group");
      const auto& parent = c_.groups[static_cast<std::size_t>(*gc.parent_group)];
      if (parent.archetype != Archetype::flat_large || parent.count == 0)
        throw ValidationError("group " + std::to_string(g) +
                              ": parent_group must be a non-empty flat-large group");
      if (gc.detail_fraction <= 0 || gc.detail_fraction >= 0.5)
        throw ValidationError("detail_fraction must be in (0, 0.5)");
    }
    if (gc.views == 0 && gc.count > 0 && (gc.views_min <= 0 || gc.views_max < gc.views_min))
      throw ValidationError("group " + std::to_string(g) + ": bad views_min/views_max");
  }
}

double fit_scale(const GeneratorConfig& c, double w, double h, Archetype a) {
  const double by_h = 0.9 * c.image_height / h;
  if (a == Archetype::panorama) return by_h;
  return std::min(0.9 * c.image_width / w, by_h);
}

void Builder::add_feature(ScenePlane& plane, int object, Eigen::AlignedBox2d box, double size) {
  PlaneFeature f;
  f.position = {rng_.uniform(box.min().x(), box.max().x()), rng_.uniform(box.min().y(), box.max().y())};
  f.size = size * rng_.uniform(0.8, 1.6);
  f.orientation = rng_.uniform(0, 2 * std::numbers::pi);
  f.object = object;
  plane.features.push_back(std::move(f));
}

void Builder::build_objects() {
  auto new_object = [&](std::size_t g, int i, const GroupConfig& gc) {
    SceneObject o;
    char id[16];
    std::snprintf(id, sizeof id, "o%04zu", scene_.objects.size());
    o.object_id = id;
    o.archetype = gc.archetype;
    o.category = gc.category;
    o.tag_model = gc.tag_model;
    scene_.objects.push_back(std::move(o));
    group_of_.push_back(static_cast<int>(g));
    index_in_group_.push_back(i);
    return static_cast<int>(scene_.objects.size() - 1);
  };

  std::vector<std::vector<int>> objects_of_group(c_.groups.size());
  for (std::size_t g = 0; g < c_.groups.size(); ++g) {
    const auto& gc = c_.groups[g];
    if (gc.archetype == Archetype::facade_detail) continue;
    const auto shape = shape_of(gc.archetype);
    for (int i = 0; i < gc.count; ++i) {
      const int oi = new_object(g, i, gc);
      auto& o = scene_.objects[static_cast<std::size_t>(oi)];
      o.true_name = make_name(rng_, names_);
      const int faces = gc.archetype == Archetype::solid_3d ? 4 : 1;
      const double size = 3.0 / fit_scale(c_, shape.width, shape.height, gc.archetype);
      const double max_angle = gc.max_angle_deg.value_or(shape.max_angle);
      for (int f = 0; f < faces; ++f) {
        ScenePlane plane;
        plane.id = faces == 1 ? o.object_id : o.object_id + "/f" + std::to_string(f);
        plane.width = shape.width;
        plane.height = shape.height;
        const Eigen::AlignedBox2d box(Eigen::Vector2d(0, 0), Eigen::Vector2d(shape.width, shape.height));
        for (int k = 0; k < gc.features; ++k) {
          add_feature(plane, oi, box, size);
          plane.features.back().preferred_yaw = rng_.uniform(-max_angle - 5, max_angle + 5);
        }
        o.planes.push_back(static_cast<int>(scene_.planes.size()));
        scene_.planes.push_back(std::move(plane));
      }
      o.region = Eigen::AlignedBox2d(Eigen::Vector2d(0, 0), Eigen::Vector2d(shape.width, shape.height));
      objects_of_group[g].push_back(oi);
    }
  }

  std::vector<int> details_placed(scene_.objects.size(), 0);
  for (std::size_t g = 0; g < c_.groups.size(); ++g) {
    const auto& gc = c_.groups[g];
    if (gc.archetype != Archetype::facade_detail) continue;
    const auto& parents = objects_of_group[static_cast<std::size_t>(*gc.parent_group)];
    for (int i = 0; i < gc.count; ++i) {
      const int parent = parents[static_cast<std::size_t>(i) % parents.size()];
      const int slot = details_placed[static_cast<std::size_t>(parent)]++;
      const int plane_index = scene_.objects[static_cast<std::size_t>(parent)].planes.front();
      const double pw = scene_.planes[static_cast<std::size_t>(plane_index)].width;
      const double ph = scene_.planes[static_cast<std::size_t>(plane_index)].height;
      const double aspect = static_cast<double>(c_.image_width) / c_.image_height;
      const double h = std::sqrt(gc.detail_fraction * pw * ph / aspect);
      const double w = h * aspect;
      const int cols = static_cast<int>(pw / (1.25 * w));
      const int rows = static_cast<int>(ph / (1.25 * h));
      if (slot >= cols * rows)
        throw ValidationError("too many details for one facade at detail_fraction " +
                              std::to_string(gc.detail_fraction));
      const double cx = (slot % cols + 0.5) * pw / cols;
      const double cy = (slot / cols + 0.5) * ph / rows;
      const Eigen::AlignedBox2d box(Eigen::Vector2d(cx - w / 2, cy - h / 2),
                                    Eigen::Vector2d(cx + w / 2, cy + h / 2));

      const int oi = new_object(g, i, gc);
      auto& o = scene_.objects[static_cast<std::size_t>(oi)];
      const auto& parent_obj = scene_.objects[static_cast<std::size_t>(parent)];
      static const char* kDetailWords[] = {"portal", "rose window", "gargoyle", "clock",
                                           "relief", "gate", "statue", "tympanum"};
      o.true_name = parent_obj.true_name + " " + kDetailWords[slot % std::size(kDetailWords)];
      if (!names_.insert(o.true_name).second) o.true_name += " " + std::to_string(slot);
      o.parent = parent_obj.object_id;
      o.planes = {plane_index};
      o.region = box;

      auto& plane = scene_.planes[static_cast<std::size_t>(plane_index)];
      const double fine = 3.0 / fit_scale(c_, w, h, Archetype::flat_small);
      const double coarse = 3.0 / fit_scale(c_, pw, ph, Archetype::flat_large);
      for (int k = 0; k < gc.features; ++k) add_feature(plane, oi, box, fine);
      for (int k = 0; k < gc.detail_features; ++k) add_feature(plane, parent, box, coarse);
    }
  }
}

void Builder::assign_prototypes() {
  const auto dim = static_cast<Eigen::Index>(c_.descriptor_dim);
  std::vector<PlaneFeature*> all;
  for (auto& p : scene_.planes)
    for (auto& f : p.features) all.push_back(&f);
  const auto n = static_cast<Eigen::Index>(all.size());
  Eigen::MatrixXf accepted(n, dim);
  Eigen::Index count = 0;
  const float margin2 = static_cast<float>(c_.descriptor_margin * c_.descriptor_margin);
  constexpr Eigen::Index kBlock = 256;
  int attempts = 0;
  while (count < n) {
    const Eigen::Index b = std::min(kBlock, n - count);
    Eigen::MatrixXf cand(b, dim);
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index d = 0; d < dim; ++d) cand(i, d) = static_cast<float>(rng_.uniform(0, 1));
    std::vector<bool> ok(static_cast<std::size_t>(b), true);
    if (margin2 > 0) {
      const Eigen::VectorXf cn = cand.rowwise().squaredNorm();
      if (count > 0) {
        const auto prev = accepted.topRows(count);
        const Eigen::VectorXf pn = prev.rowwise().squaredNorm();
        Eigen::MatrixXf d2 = -2.0f * cand * prev.transpose();
        d2.colwise() += cn;
        d2.rowwise() += pn.transpose();
        for (Eigen::Index i = 0; i < b; ++i)
          if (d2.row(i).minCoeff() < margin2) ok[static_cast<std::size_t>(i)] = false;
      }
      for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < i; ++j)
          if (ok[static_cast<std::size_t>(j)] && (cand.row(i) - cand.row(j)).squaredNorm() < margin2)
            ok[static_cast<std::size_t>(i)] = false;
    }
    Eigen::Index taken = 0;
    for (Eigen::Index i = 0; i < b; ++i)
      if (ok[static_cast<std::size_t>(i)]) accepted.row(count + taken++) = cand.row(i);
    if (taken == 0 && ++attempts > 100)
      throw ValidationError("descriptor_margin too large for the requested feature count");
    count += taken;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    auto* f = all[static_cast<std::size_t>(i)];
    f->prototype = accepted.row(i).transpose();
    f->drift_u = random_unit(rng_, c_.descriptor_dim);
    f->drift_v = random_unit(rng_, c_.descriptor_dim);
  }
}

ViewSpec Builder::sample_view(int object, const GroupConfig& group) {
  const auto& o = scene_.objects[static_cast<std::size_t>(object)];
  const auto shape = shape_of(o.archetype);
  ViewSpec v;
  v.object = object;
  v.width = c_.image_width;
  v.height = c_.image_height;
  v.noise = group.noise.value_or(c_.noise);
  v.plane = o.planes[o.planes.size() == 1 ? 0 : rng_.index(o.planes.size())];
  const auto& plane = scene_.planes[static_cast<std::size_t>(v.plane)];
  const Eigen::Vector2d extent = o.region.sizes();
  const double fit = fit_scale(c_, extent.x(), extent.y(), o.archetype);
  const double scale = fit * rng_.uniform(shape.scale_lo, shape.scale_hi);
  Eigen::Vector2d target = o.region.center();
  if (o.archetype == Archetype::panorama) {
    const double half = 0.5 * c_.image_width / scale;
    static constexpr double kHotspots[] = {0.3, 0.7};
    double u = rng_.chance(0.75)
                   ? kHotspots[rng_.index(2)] * plane.width + rng_.uniform(-150, 150)
                   : rng_.uniform(half, plane.width - half);
    target.x() = std::clamp(u, half, plane.width - half);
  } else {
    target.x() += rng_.uniform(-shape.jitter, shape.jitter) * extent.x();
    target.y() += rng_.uniform(-shape.jitter, shape.jitter) * extent.y();
  }
  const double max_angle = group.max_angle_deg.value_or(shape.max_angle);
  v.yaw = rng_.uniform(-max_angle, max_angle);
  v.pitch = rng_.uniform(-max_angle, max_angle) * 0.4;
  const double roll = rng_.uniform(-shape.roll, shape.roll);
  v.plane_to_image =
      camera_homography(c_.focal, c_.image_width, c_.image_height, target, scale, v.yaw, v.pitch, roll);
  char owner[16];
  std::snprintf(owner, sizeof owner, "u%04zu", rng_.index(static_cast<std::size_t>(c_.owner_pool)));
  v.owner = owner;
  return v;
}

void Builder::emit_tags(ViewSpec& v, const SceneObject& o, const std::string* parent_name) {
  const auto& t = c_.tags;
  const auto& generic = generic_terms(o.category);
  auto name = [&] {
    if (parent_name && rng_.chance(t.p_parent_name)) return *parent_name;
    return o.true_name;
  };
  auto styled = [&](std::string s) { return rng_.chance(0.5) ? title_case(std::move(s)) : s; };
  switch (o.tag_model) {
    case TagModel::clean:
      if (rng_.chance(t.p_correct)) v.tags.push_back(styled(name()));
      break;
    case TagModel::noisy: {
      const double r = rng_.uniform(0, 1);
      if (r < t.p_correct)
        v.tags.push_back(styled(name()));
      else if (r < t.p_correct + t.p_misspell)
        v.tags.push_back(misspell(name(), rng_));
      break;
    }
    case TagModel::generic:
      v.tags.push_back(generic[rng_.index(generic.size())]);
      break;
  }
  if (rng_.chance(t.p_generic)) v.tags.push_back(generic[rng_.index(generic.size())]);
  if (rng_.chance(0.2)) v.tags.push_back(styled(kStopTerms[rng_.index(kStopTerms.size())]));
  if (rng_.chance(t.filename_rate))
    v.title = camera_filename(rng_);
  else if (o.tag_model != TagModel::generic && rng_.chance(t.p_title_name))
    v.title = title_case(o.true_name);
}

GeneratedData Builder::run() {
  validate();
  build_objects();
  assign_prototypes();

  std::vector<PendingView> database;
  std::vector<PendingView> queries;
  for (std::size_t oi = 0; oi < scene_.objects.size(); ++oi) {
    auto& o = scene_.objects[oi];
    const auto& gc = c_.groups[static_cast<std::size_t>(group_of_[oi])];
    int views = gc.views;
    if (views == 0)
      views = std::max(gc.views_min,
                       static_cast<int>(std::lround(gc.views_max /
                                                    std::pow(index_in_group_[oi] + 1.0, gc.exponent))));
    o.popularity = views;
    const std::string* parent_name = nullptr;
    if (o.parent)
      for (const auto& p : scene_.objects)
        if (p.object_id == *o.parent) parent_name = &p.true_name;

    std::string spammer;
    if (c_.tags.spam_rate > 0 && rng_.chance(c_.tags.spam_rate)) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "u%04zu", rng_.index(static_cast<std::size_t>(c_.owner_pool)));
      spammer = buf;
    }
    for (int k = 0; k < views; ++k) {
      PendingView pv;
      pv.spec = sample_view(static_cast<int>(oi), gc);
      emit_tags(pv.spec, o, parent_name);
      if (!spammer.empty() && k < c_.tags.spam_views) {
        pv.spec.owner = spammer;
        pv.spec.tags.push_back("myshots " + spammer);
      }
      database.push_back(std::move(pv));
    }
    for (int k = 0; k < gc.queries; ++k) {
      PendingView pv;
      pv.spec = sample_view(static_cast<int>(oi), gc);
      pv.is_query = true;
      emit_tags(pv.spec, o, parent_name);
      const int original = static_cast<int>(queries.size());
      queries.push_back(pv);
      if (c_.duplicate_query_rate > 0 && rng_.chance(c_.duplicate_query_rate)) {
        PendingView dup = pv;
        Eigen::Matrix3d shift = Eigen::Matrix3d::Identity();
        shift(0, 2) = rng_.uniform(-0.5, 0.5);
        shift(1, 2) = rng_.uniform(-0.5, 0.5);
        dup.spec.plane_to_image = normalize_homography(shift * pv.spec.plane_to_image);
        if (dup.spec.plane_to_image.cwiseProduct(pv.spec.plane_to_image).sum() < 0)
          dup.spec.plane_to_image = -dup.spec.plane_to_image;
        dup.duplicate_of = original;
        queries.push_back(std::move(dup));
      }
    }
  }
  for (int k = 0; k < c_.distractor_images; ++k) {
    PendingView pv;
    pv.spec.width = c_.image_width;
    pv.spec.height = c_.image_height;
    pv.spec.noise = c_.noise;
    pv.spec.noise.distractors = c_.distractor_features;
    char owner[16];
    std::snprintf(owner, sizeof owner, "u%04zu", rng_.index(static_cast<std::size_t>(c_.owner_pool)));
    pv.spec.owner = owner;
    const auto& generic = generic_terms("Other");
    pv.spec.tags.push_back(generic[rng_.index(generic.size())]);
    database.push_back(std::move(pv));
  }

  GeneratedData out;
  out.database.descriptor_dim = c_.descriptor_dim;
  out.queries.descriptor_dim = c_.descriptor_dim;
  for (const auto& o : scene_.objects)
    out.truth.objects.push_back(
        {o.object_id, o.archetype, o.true_name, o.parent, o.category, o.popularity});

  auto emit = [&](std::vector<PendingView>& views, Dataset& dataset, char prefix, std::uint64_t salt) {
    std::vector<std::size_t> perm(views.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng_.engine);
    std::vector<std::string> ids(views.size());
    for (std::size_t k = 0; k < views.size(); ++k) {
      char id[16];
      std::snprintf(id, sizeof id, "%c%05zu", prefix, perm[k]);
      ids[k] = id;
    }
    std::vector<RenderedView> rendered(views.size());
    static const ScenePlane kEmpty;
    for (std::size_t k = 0; k < views.size(); ++k) {
      const auto& spec = views[k].spec;
      const auto& plane = spec.plane >= 0 ? scene_.planes[static_cast<std::size_t>(spec.plane)] : kEmpty;
      rendered[k] = render_view(plane, spec, c_.descriptor_dim, mix_seed(seed_, salt + k));
      rendered[k].record.id = ids[k];
      if (spec.object >= 0)
        rendered[k].record.category = scene_.objects[static_cast<std::size_t>(spec.object)].category;
    }
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
    for (auto k : order) {
      const auto& spec = views[k].spec;
      TruthImage ti;
      ti.id = ids[k];
      ti.is_query = views[k].is_query;
      if (spec.object >= 0) {
        ti.object = scene_.objects[static_cast<std::size_t>(spec.object)].object_id;
        ti.plane = scene_.planes[static_cast<std::size_t>(spec.plane)].id;
        ti.plane_to_image = spec.plane_to_image;
      }
      if (views[k].duplicate_of >= 0) ti.duplicate_of = ids[static_cast<std::size_t>(views[k].duplicate_of)];
      ti.sources = std::move(rendered[k].sources);
      out.truth.images.push_back(std::move(ti));
      dataset.images.push_back(std::move(rendered[k].record));
    }
  };
  emit(database, out.database, 'd', 0);
  emit(queries, out.queries, 'q', 1u << 30);
  out.scene = std::move(scene_);
  return out;
}

}  // namespace

GeneratedData generate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  return Builder(config, seed).run();
}

}  // namespace lmr
