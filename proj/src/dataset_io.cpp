#include "lmr/dataset_io.hpp"

#include "lmr/binary_io.hpp"
#include "lmr/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace lmr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kDescriptorMagic[5] = "LMDE";
constexpr std::uint64_t kHeaderBytes = 4 + 2 + 4 + 8;

std::uint64_t block_bytes(std::uint64_t features, std::uint32_t dim) {
  return 8 + features * (4 * sizeof(double) + std::uint64_t{dim} * sizeof(float));
}

const char* source_name(ImageSource s) {
  return s == ImageSource::synthetic ? "synthetic" : "ingested";
}

ImageSource parse_source(const std::string& s) {
  if (s == "synthetic") return ImageSource::synthetic;
  if (s == "ingested") return ImageSource::ingested;
  throw ValidationError("unknown image source '" + s + "'");
}

}  // namespace

std::vector<std::string> default_taxonomy() {
  return {"Landmark Buildings", "Panoramas",        "Sculptures",
          "Interior Views",     "Building Details", "Paintings",
          "Windows",            "Landmark Objects", "Murals",
          "Cafes / Shops",      "Artifacts",        "Other",
          "Multiple Objects"};
}

LocalFeature ImageRecord::feature(std::size_t i) const {
  const auto row = static_cast<Eigen::Index>(i);
  return {keypoints(row, 0), keypoints(row, 1), keypoints(row, 2), keypoints(row, 3),
          descriptors.row(row).transpose()};
}

void ImageRecord::set_features(std::span<const LocalFeature> features, std::size_t dim) {
  keypoints.resize(static_cast<Eigen::Index>(features.size()), 4);
  descriptors.resize(static_cast<Eigen::Index>(features.size()),
                     static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    if (static_cast<std::size_t>(f.descriptor.size()) != dim)
      throw ValidationError("feature descriptor length " +
                            std::to_string(f.descriptor.size()) + " != " +
                            std::to_string(dim) + " in image '" + id + "'");
    const auto row = static_cast<Eigen::Index>(i);
    keypoints.row(row) << f.x, f.y, f.scale, f.orientation;
    descriptors.row(row) = f.descriptor.transpose();
  }
}

std::optional<std::size_t> Dataset::find(const ImageId& id) const {
  std::lock_guard lock(*lookup_mutex_);
  auto lookup = [&]() -> std::optional<std::size_t> {
    auto it = lookup_.find(id);
    if (it == lookup_.end() || it->second >= images.size() || images[it->second].id != id)
      return std::nullopt;
    return it->second;
  };
  if (lookup_size_ == images.size())
    if (auto i = lookup()) return i;
  lookup_.clear();
  for (std::size_t i = 0; i < images.size(); ++i) lookup_.emplace(images[i].id, i);
  lookup_size_ = images.size();
  return lookup();
}

const ImageRecord& Dataset::at(const ImageId& id) const {
  auto i = find(id);
  if (!i) throw ValidationError("unknown image id '" + id + "'");
  return images[*i];
}

std::string to_string(Rating r) {
  switch (r) {
    case Rating::good: return "good";
    case Rating::ok: return "ok";
    case Rating::bad: return "bad";
  }
  return "bad";
}

Rating parse_rating(const std::string& s) {
  if (s == "good") return Rating::good;
  if (s == "ok") return Rating::ok;
  if (s == "bad") return Rating::bad;
  throw ValidationError("unknown rating '" + s + "'");
}

ImageMeta meta_of(const ImageRecord& r) {
  ImageMeta m;
  m.id = r.id;
  m.width = r.width;
  m.height = r.height;
  m.owner = r.owner;
  m.title = r.title;
  m.tags = r.tags;
  m.category = r.category;
  m.source = r.source;
  m.feature_count = r.feature_count();
  return m;
}

DatasetManifest manifest_of(const Dataset& dataset) {
  DatasetManifest m;
  m.descriptor_dim = dataset.descriptor_dim;
  m.taxonomy = dataset.taxonomy;
  for (const auto& r : dataset.images) m.images.push_back(meta_of(r));
  return m;
}

namespace {

void validate(const DatasetManifest& manifest, std::span<const ImageRecord> records) {
  if (manifest.descriptor_dim == 0) throw ValidationError("descriptor_dim must be positive");
  if (manifest.images.size() != records.size())
    throw ValidationError("manifest lists " + std::to_string(manifest.images.size()) +
                          " images but " + std::to_string(records.size()) +
                          " records were given");
  std::set<std::string> taxonomy(manifest.taxonomy.begin(), manifest.taxonomy.end());
  std::set<ImageId> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& m = manifest.images[i];
    if (m.id != r.id)
      throw ValidationError("manifest entry " + std::to_string(i) + " is '" + m.id +
                            "' but record is '" + r.id + "'");
    if (!seen.insert(r.id).second) throw ValidationError("duplicate image id '" + r.id + "'");
    if (r.width <= 0 || r.height <= 0)
      throw ValidationError("image '" + r.id + "' has non-positive frame size");
    if (r.descriptors.rows() != r.keypoints.rows())
      throw ValidationError("image '" + r.id + "' keypoint/descriptor count mismatch");
    if (r.feature_count() > 0 &&
        static_cast<std::uint32_t>(r.descriptors.cols()) != manifest.descriptor_dim)
      throw ValidationError("image '" + r.id + "' has descriptor dimension " +
                            std::to_string(r.descriptors.cols()) + ", dataset expects " +
                            std::to_string(manifest.descriptor_dim));
    if (r.category && !taxonomy.count(*r.category))
      throw ValidationError("image '" + r.id + "' category '" + *r.category +
                            "' is not in the taxonomy");
  }
}

json meta_to_json(const ImageMeta& m) {
  return json{{"id", m.id},
              {"width", m.width},
              {"height", m.height},
              {"owner", m.owner},
              {"title", m.title},
              {"tags", m.tags},
              {"category", m.category ? json(*m.category) : json(nullptr)},
              {"source", source_name(m.source)},
              {"offset", m.offset},
              {"feature_count", m.feature_count}};
}

ImageMeta meta_from_json(const json& j) {
  ImageMeta m;
  m.id = j.at("id").get<std::string>();
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.owner = j.value("owner", "");
  m.title = j.value("title", "");
  m.tags = j.value("tags", std::vector<std::string>{});
  if (j.contains("category") && !j.at("category").is_null())
    m.category = j.at("category").get<std::string>();
  m.source = parse_source(j.value("source", "ingested"));
  m.offset = j.at("offset").get<std::uint64_t>();
  m.feature_count = j.at("feature_count").get<std::uint64_t>();
  return m;
}

}  // namespace

void save_dataset(const fs::path& dir, const DatasetManifest& manifest_in,
                  std::span<const ImageRecord> records) {
  validate(manifest_in, records);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  DatasetManifest manifest = manifest_in;
  const std::uint32_t dim = manifest.descriptor_dim;

  std::ofstream bin(dir / "descriptors.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + (dir / "descriptors.bin").string());
  bin.write(kDescriptorMagic, 4);
  binary::write<std::uint16_t>(bin, kDescriptorStoreVersion);
  binary::write<std::uint32_t>(bin, dim);
  binary::write<std::uint64_t>(bin, records.size());

  std::uint64_t offset = kHeaderBytes;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto& m = manifest.images[i];
    m.offset = offset;
    m.feature_count = r.feature_count();
    binary::write<std::uint64_t>(bin, m.feature_count);
    for (Eigen::Index f = 0; f < r.keypoints.rows(); ++f) {
      for (int c = 0; c < 4; ++c) binary::write<double>(bin, r.keypoints(f, c));
      for (Eigen::Index d = 0; d < r.descriptors.cols(); ++d)
        binary::write<float>(bin, r.descriptors(f, d));
    }
    offset += block_bytes(m.feature_count, dim);
  }
  if (!bin) throw IoError("failed writing " + (dir / "descriptors.bin").string());

  std::ofstream meta(dir / "manifest.jsonl", std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  meta << json{{"format", "lmr-dataset"},
               {"version", kDescriptorStoreVersion},
               {"descriptor_dim", dim},
               {"image_count", records.size()},
               {"taxonomy", manifest.taxonomy}}
              .dump()
       << '\n';
  for (const auto& m : manifest.images) meta << meta_to_json(m).dump() << '\n';
  if (!meta) throw IoError("failed writing " + (dir / "manifest.jsonl").string());
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  save_dataset(dir, manifest_of(dataset), dataset.images);
}

DatasetReader::DatasetReader(fs::path dir) : dir_(std::move(dir)) {
  const auto meta_path = dir_ / "manifest.jsonl";
  std::ifstream meta(meta_path);
  if (!meta) throw IoError("cannot open " + meta_path.string());
  std::string line;
  std::uint64_t line_offset = 0;
  bool have_header = false;
  std::uint64_t declared = 0;
  while (std::getline(meta, line)) {
    const std::uint64_t this_offset = line_offset;
    line_offset += line.size() + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what(), this_offset);
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != "lmr-dataset")
          throw FormatError(meta_path.string() + ": missing dataset header", this_offset);
        manifest_.descriptor_dim = j.at("descriptor_dim").get<std::uint32_t>();
        manifest_.taxonomy = j.at("taxonomy").get<std::vector<std::string>>();
        declared = j.at("image_count").get<std::uint64_t>();
        have_header = true;
      } else {
        manifest_.images.push_back(meta_from_json(j));
      }
    } catch (const json::exception& e) {
      throw FormatError(meta_path.string() + ": " + e.what(), this_offset);
    }
  }
  if (!have_header) throw FormatError(meta_path.string() + ": empty manifest", 0);
  if (declared != manifest_.images.size())
    throw ValidationError("manifest declares " + std::to_string(declared) + " images, lists " +
                          std::to_string(manifest_.images.size()));

  std::set<std::string> taxonomy(manifest_.taxonomy.begin(), manifest_.taxonomy.end());
  for (const auto& m : manifest_.images)
    if (m.category && !taxonomy.count(*m.category))
      throw ValidationError("image '" + m.id + "' category '" + *m.category +
                            "' is not in the taxonomy");

  const auto bin_path = dir_ / "descriptors.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  bin.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(bin.tellg());
  bin.seekg(0);
  char magic[4] = {};
  bin.read(magic, 4);
  if (bin.gcount() != 4 || std::memcmp(magic, kDescriptorMagic, 4) != 0)
    throw FormatError(bin_path.string() + ": bad magic", 0);
  const auto version = binary::read<std::uint16_t>(bin, "descriptor store version");
  if (version != kDescriptorStoreVersion)
    throw FormatError(bin_path.string() + ": unsupported version " + std::to_string(version), 4);
  const auto dim = binary::read<std::uint32_t>(bin, "descriptor dimension");
  const auto count = binary::read<std::uint64_t>(bin, "image count");
  if (dim != manifest_.descriptor_dim)
    throw ValidationError("descriptor store dimension " + std::to_string(dim) +
                          " != manifest dimension " + std::to_string(manifest_.descriptor_dim));
  if (count != manifest_.images.size())
    throw ValidationError("descriptor store holds " + std::to_string(count) +
                          " images, manifest lists " + std::to_string(manifest_.images.size()));

  std::set<ImageId> ids;
  for (const auto& m : manifest_.images) {
    if (!ids.insert(m.id).second) throw ValidationError("duplicate image id '" + m.id + "'");
    if (m.offset + 8 > file_size)
      throw FormatError(bin_path.string() + ": block of '" + m.id + "' starts past end of file",
                        m.offset);
    bin.seekg(static_cast<std::streamoff>(m.offset));
    const auto n = binary::read<std::uint64_t>(bin, "feature count");
    if (n != m.feature_count)
      throw ValidationError("image '" + m.id + "': descriptor store has " + std::to_string(n) +
                            " features, manifest says " + std::to_string(m.feature_count));
    if (m.offset + block_bytes(n, dim) > file_size) {
      // Locate the first feature record that runs past the end.
      const std::uint64_t per = block_bytes(1, dim) - 8;
      const std::uint64_t complete = (file_size - m.offset - 8) / per;
      throw FormatError(bin_path.string() + ": descriptor record of '" + m.id + "' truncated",
                        m.offset + 8 + complete * per);
    }
  }
}

ImageRecord DatasetReader::read(std::size_t i) const {
  const auto& m = manifest_.images.at(i);
  const auto bin_path = dir_ / "descriptors.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  bin.seekg(static_cast<std::streamoff>(m.offset));
  const auto n = binary::read<std::uint64_t>(bin, "feature count");
  const auto dim = static_cast<Eigen::Index>(manifest_.descriptor_dim);

  ImageRecord r;
  r.id = m.id;
  r.width = m.width;
  r.height = m.height;
  r.owner = m.owner;
  r.title = m.title;
  r.tags = m.tags;
  r.category = m.category;
  r.source = m.source;
  r.keypoints.resize(static_cast<Eigen::Index>(n), 4);
  r.descriptors.resize(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index f = 0; f < static_cast<Eigen::Index>(n); ++f) {
    for (int c = 0; c < 4; ++c) r.keypoints(f, c) = binary::read<double>(bin, "keypoint");
    for (Eigen::Index d = 0; d < dim; ++d)
      r.descriptors(f, d) = binary::read<float>(bin, "descriptor");
  }
  return r;
}

Dataset DatasetReader::read_all() const {
  Dataset d;
  d.descriptor_dim = manifest_.descriptor_dim;
  d.taxonomy = manifest_.taxonomy;
  d.images.reserve(manifest_.size());
  for (std::size_t i = 0; i < manifest_.size(); ++i) d.images.push_back(read(i));
  return d;
}

DatasetReader load_dataset(const fs::path& dir) { return DatasetReader(dir); }

void save_annotations(const fs::path& file, std::span<const RelevanceAnnotation> annotations) {
  std::set<std::pair<ImageId, std::string>> seen;
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "query_id,object_id,rating\n";
  for (const auto& a : annotations) {
    for (const auto* field : {&a.query_id, &a.object_id})
      if (field->find_first_of(",\n\r") != std::string::npos)
        throw ValidationError("annotation id '" + *field + "' contains a separator");
    if (!seen.emplace(a.query_id, a.object_id).second)
      throw ValidationError("duplicate annotation for (" + a.query_id + ", " + a.object_id + ")");
    out << a.query_id << ',' << a.object_id << ',' << to_string(a.rating) << '\n';
  }
  if (!out) throw IoError("failed writing " + file.string());
}

std::vector<RelevanceAnnotation> load_annotations(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<RelevanceAnnotation> result;
  std::set<std::pair<ImageId, std::string>> seen;
  std::string line;
  std::uint64_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line == "query_id,object_id,rating") continue;
    }
    std::stringstream ss(line);
    RelevanceAnnotation a;
    std::string rating, extra;
    if (!std::getline(ss, a.query_id, ',') || !std::getline(ss, a.object_id, ',') ||
        !std::getline(ss, rating, ',') || std::getline(ss, extra, ','))
      throw FormatError(file.string() + ": expected 3 fields", line_offset);
    a.rating = parse_rating(rating);
    if (!seen.emplace(a.query_id, a.object_id).second)
      throw ValidationError("duplicate annotation for (" + a.query_id + ", " + a.object_id + ")");
    result.push_back(std::move(a));
  }
  return result;
}

}  // namespace lmr
