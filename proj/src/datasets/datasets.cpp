#include "coa/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coa/errors.hpp"

namespace coa {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string location(const std::filesystem::path& path, int lineno) {
  return path.string() + ":" + std::to_string(lineno);
}

// Yields (line number, parsed object) for every non-blank line.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(location(path, lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw InputError(location(path, lineno) + ": expected a JSON object");
    fn(lineno, j);
  }
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw InputError("id must be a string or an integer");
}

int split_value(const json& v) {
  if (!v.is_number_integer()) throw InputError("split must be an integer");
  long long s = v.get<long long>();
  if (!SplitId::valid(static_cast<int>(s)) || s != static_cast<int>(s)) {
    throw InputError("split " + std::to_string(s) + " is outside 0..3");
  }
  return static_cast<int>(s);
}

}  // namespace

const ImageRecord* Manifest::find(std::string_view id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

Manifest make_manifest(std::vector<ImageRecord> entries, std::string source) {
  Manifest m;
  m.source = std::move(source);
  for (int s = 0; s < SplitId::kCount; ++s) m.split_counts[s] = 0;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw InputError("duplicate image id '" + e.id + "'");
    ++m.split_counts[e.split.value()];
  }
  m.entries = std::move(entries);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts) {
  const auto base = path.parent_path();
  std::vector<ImageRecord> entries;
  std::vector<std::string> warnings;
  std::set<std::string> seen;

  for_each_jsonl(path, [&](int lineno, const json& j) {
    try {
      ImageRecord rec;
      rec.id = id_string(j.at("id"));
      if (rec.id.empty()) throw InputError("empty id");
      if (!seen.insert(rec.id).second) throw InputError("duplicate image id '" + rec.id + "'");
      std::filesystem::path image = j.at("image_path").get<std::string>();
      if (image.is_relative()) image = base / image;
      rec.image_ref = image.lexically_normal().string();
      std::vector<std::string> gold;
      for (const auto& g : j.at("gold_labels")) gold.push_back(g.get<std::string>());
      rec.gold_labels = labelset_from(std::span<const std::string>(gold));
      rec.split = SplitId(split_value(j.at("split")));
      if (!std::filesystem::exists(image)) {
        std::string msg = "image file for '" + rec.id + "' not found: " + rec.image_ref;
        if (opts.require_images) throw InputError(msg);
        warnings.push_back(msg);
      }
      entries.push_back(std::move(rec));
    } catch (const InputError& e) {
      throw InputError(location(path, lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw InputError(location(path, lineno) + ": " + e.what());
    }
  });

  Manifest m = make_manifest(std::move(entries), path.string());
  m.warnings = std::move(warnings);
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    ojson j;
    j["id"] = e.id;
    j["image_path"] = e.image_ref;
    j["gold_labels"] = e.gold_labels.labels();
    j["split"] = e.split.value();
    out << j.dump() << '\n';
  }
  if (!out) throw InputError("write failed: " + path.string());
}

std::map<std::string, int> read_split_spec(const std::filesystem::path& path) {
  std::map<std::string, int> spec;
  for_each_jsonl(path, [&](int lineno, const json& j) {
    try {
      std::string id = id_string(j.at("id"));
      if (!spec.emplace(id, split_value(j.at("split"))).second) {
        throw InputError("image id '" + id + "' assigned twice");
      }
    } catch (const InputError& e) {
      throw InputError(location(path, lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw InputError(location(path, lineno) + ": " + e.what());
    }
  });
  return spec;
}

ConversionResult convert_coco(const std::filesystem::path& annotation_json, const std::filesystem::path& images_dir,
                              const std::map<std::string, int>& split_spec) {
  std::ifstream in(annotation_json, std::ios::binary);
  if (!in) throw InputError("cannot read " + annotation_json.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(annotation_json.string() + ": " + e.what());
  }

  ConversionResult result;
  try {
    std::map<long long, std::string> categories;
    for (const auto& c : root.at("categories")) {
      categories[c.at("id").get<long long>()] = c.at("name").get<std::string>();
    }
    std::map<std::string, std::vector<std::string>> names_by_image;
    for (const auto& a : root.value("annotations", json::array())) {
      auto cat = categories.find(a.at("category_id").get<long long>());
      if (cat == categories.end()) {
        throw InputError("annotation refers to unknown category " + a.at("category_id").dump());
      }
      names_by_image[id_string(a.at("image_id"))].push_back(cat->second);
    }

    // Images in ascending id order so the output never depends on file order.
    std::vector<std::pair<std::string, std::string>> images;
    for (const auto& img : root.at("images")) {
      images.emplace_back(id_string(img.at("id")), img.at("file_name").get<std::string>());
    }
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) {
      if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
      return a.first < b.first;
    });

    std::vector<ImageRecord> entries;
    for (const auto& [id, file_name] : images) {
      auto split = split_spec.find(id);
      if (split == split_spec.end()) {
        result.unassigned.push_back(id);
        continue;
      }
      auto path = images_dir / file_name;
      if (!std::filesystem::exists(path)) result.missing_images.push_back(file_name);
      ImageRecord rec;
      rec.id = id;
      rec.image_ref = path.lexically_normal().string();
      auto names = names_by_image.find(id);
      if (names != names_by_image.end()) rec.gold_labels = labelset_from(std::span<const std::string>(names->second));
      rec.split = SplitId(split->second);
      entries.push_back(std::move(rec));
    }
    result.manifest = make_manifest(std::move(entries), annotation_json.string());
  } catch (const json::exception& e) {
    throw InputError(annotation_json.string() + ": " + e.what());
  }
  return result;
}

bool SplitReport::ok() const noexcept {
  for (const auto& c : checks) {
    if (!c.ok()) return false;
  }
  return true;
}

std::vector<std::string> SplitReport::failed_splits() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (!c.ok()) out.push_back("split-" + std::to_string(c.split));
  }
  return out;
}

std::string SplitReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << "split-" << c.split << ": expected " << c.expected << ", found " << c.actual << "  "
       << (c.ok() ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

SplitReport verify_split_counts(const Manifest& manifest, const SplitCounts& expected) {
  SplitReport report;
  std::map<int, int> actual;
  for (const auto& e : manifest.entries) ++actual[e.split.value()];
  for (int s = 0; s < SplitId::kCount; ++s) report.checks.push_back({s, expected[s], actual[s]});
  return report;
}

SplitCounts published_split_counts(std::string_view name) {
  const std::string dataset = casefold(name);
  if (dataset == "voc") return {1561, 1775, 1891, 596};
  if (dataset == "coco") return {29628, 3583, 4461, 2465};
  if (dataset == "nus") return {2500, 2500, 2500, 2500};
  throw InputError("no published split counts for dataset '" + std::string(name) + "'");
}

}  // namespace coa
