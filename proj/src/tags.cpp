#include "lmr/tags.hpp"

#include "lmr/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace lmr {

std::vector<std::string> default_stoplist() {
  return {"paris", "france", "europe", "vacation", "photo", "canon"};
}

std::vector<std::string> load_stoplist(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = normalize_tag(line);
    if (!t.empty() && t.front() != '#') out.push_back(std::move(t));
  }
  return out;
}

std::string normalize_tag(std::string_view tag) {
  const auto first = tag.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = tag.find_last_not_of(" \t\r\n");
  std::string out(tag.substr(first, last - first + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_camera_filename(std::string_view tag) {
  static const std::regex file_name(
      R"(^[a-z]*[_-]?[0-9]+\.(jpg|jpeg|png|gif|tif|tiff|bmp|raw|cr2|nef|heic)$)");
  static const std::regex digits(R"(^[0-9]+$)");
  const std::string s(tag);
  return std::regex_match(s, file_name) || std::regex_match(s, digits);
}

std::vector<std::string> preprocess_tags(const ImageRecord& image, const TagMiningConfig& config) {
  std::vector<std::string> raw = image.tags;
  if (!image.title.empty()) raw.push_back(image.title);
  std::vector<std::string> out;
  for (const auto& r : raw) {
    auto t = normalize_tag(r);
    if (t.empty() || is_camera_filename(t)) continue;
    if (std::find(config.stoplist.begin(), config.stoplist.end(), t) != config.stoplist.end()) continue;
    out.push_back(std::move(t));
  }
  return out;
}

TagStats compute_tag_stats(std::span<const ObjectCluster> clusters, const Dataset& dataset,
                           const TagMiningConfig& config) {
  std::vector<std::vector<std::string>> tags(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) tags[i] = preprocess_tags(dataset.images[i], config);

  TagStats stats;
  std::map<std::string, std::set<std::string>> global_users;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    for (const auto& t : tags[i]) {
      global_users[t].insert(dataset.images[i].owner);
      ++stats.global[t].occurrences;
    }
  for (auto& [t, users] : global_users) stats.global[t].users = users.size();

  for (const auto& c : clusters) {
    std::map<std::string, std::set<std::string>> users;
    std::map<std::string, TagCount> counts;
    std::set<std::string> owners;
    for (const auto& m : c.support) {
      const auto i = dataset.find(m.id);
      if (!i) throw ValidationError("cluster member '" + m.id + "' not in dataset");
      owners.insert(dataset.images[*i].owner);
      for (const auto& t : tags[*i]) {
        users[t].insert(dataset.images[*i].owner);
        ++counts[t].occurrences;
      }
    }
    for (auto& [t, u] : users) counts[t].users = u.size();
    stats.per_cluster.push_back(std::move(counts));
    stats.cluster_users.push_back(owners.size());
  }
  return stats;
}

double tag_score(std::size_t users_in_cluster, std::size_t users_total) {
  if (users_total == 0) return 0;
  const auto u = static_cast<double>(users_in_cluster);
  return u / static_cast<double>(users_total) * u;
}

std::vector<TagScore> score_tags(std::size_t cluster, std::span<const ObjectCluster> clusters,
                                 const TagStats& stats) {
  std::vector<TagScore> out;
  for (const auto& [t, count] : stats.per_cluster.at(cluster)) {
    const auto it = stats.global.find(t);
    const std::size_t total = it == stats.global.end() ? count.users : it->second.users;
    out.push_back({clusters[cluster].object_id, t, tag_score(count.users, total), count.users,
                   count.occurrences});
  }
  std::sort(out.begin(), out.end(), [](const TagScore& x, const TagScore& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.tag < y.tag;
  });
  return out;
}

std::vector<ClusterNames> name_clusters(std::span<const ObjectCluster> clusters, const Dataset& dataset,
                                        const TagMiningConfig& config) {
  const auto stats = compute_tag_stats(clusters, dataset, config);
  std::vector<ClusterNames> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].size() < config.min_cluster_size) continue;
    ClusterNames n;
    n.cluster = clusters[c].object_id;
    n.size = clusters[c].size();
    n.distinct_users = stats.cluster_users[c];
    n.top = score_tags(c, clusters, stats);
    if (n.top.size() > config.top_k) n.top.resize(config.top_k);
    out.push_back(std::move(n));
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

void save_tags_csv(const std::filesystem::path& file, std::span<const ClusterNames> names) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "cluster,rank,tag,score,distinct_users\n";
  for (const auto& n : names)
    for (std::size_t r = 0; r < n.top.size(); ++r) {
      std::ostringstream score;
      score << std::setprecision(17) << n.top[r].score;
      out << csv_field(n.cluster) << ',' << r + 1 << ',' << csv_field(n.top[r].tag) << ','
          << score.str() << ',' << n.top[r].distinct_users << '\n';
    }
  if (!out) throw IoError("write failed: " + file.string());
}

std::vector<ClusterNames> load_tags_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "cluster,rank,tag,score,distinct_users")
    throw FormatError(file.string() + ": unexpected header", 0);
  std::uint64_t offset = line.size() + 1;
  std::vector<ClusterNames> out;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw FormatError(file.string() + ": expected 5 fields", line_offset);
    if (out.empty() || out.back().cluster != f[0]) out.push_back({f[0], 0, 0, {}});
    try {
      out.back().top.push_back({f[0], f[2], std::stod(f[3]), std::stoul(f[4]), 0});
    } catch (const std::exception&) {
      throw FormatError(file.string() + ": bad number", line_offset);
    }
  }
  return out;
}

}  // namespace lmr
