#pragma once

// Manifests (JSONL, one image per line), split-spec files, a converter
// from detection-style annotation JSON, and split-count verification.

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "coa/domain.hpp"

namespace coa {

struct Manifest {
  std::vector<ImageRecord> entries;
  std::string source;
  std::map<int, int> split_counts;  // every split 0..3 present, possibly 0
  std::vector<std::string> warnings;

  const ImageRecord* find(std::string_view id) const;
};

struct LoadOptions {
  // Missing image files fail the load when set, otherwise they are warnings.
  bool require_images = true;
};

// Each line: {"id", "image_path", "gold_labels": [...], "split": 0..3}.
// Relative image paths resolve against the manifest's directory. Gold
// labels are normalized like predictions. Throws InputError.
Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts = {});

// Builds a Manifest from records, checking ids are unique.
Manifest make_manifest(std::vector<ImageRecord> entries, std::string source);

// Deterministic JSONL output. Image paths are written as given.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Split spec: JSONL {"id": <string or integer>, "split": 0..3}.
std::map<std::string, int> read_split_spec(const std::filesystem::path& path);

struct ConversionResult {
  Manifest manifest;
  std::vector<std::string> missing_images;  // file names not found in images_dir
  std::vector<std::string> unassigned;      // image ids absent from the split spec
};

// Detection-style annotation JSON with "images" (id, file_name),
// "annotations" (image_id, category_id) and "categories" (id, name).
// Gold labels are the normalized, deduplicated category names of each
// image in annotation order; images without annotations keep an empty
// gold set. Images not named in the split spec are left out and listed.
ConversionResult convert_coco(const std::filesystem::path& annotation_json, const std::filesystem::path& images_dir,
                              const std::map<std::string, int>& split_spec);

struct SplitCheck {
  int split = 0;
  int expected = 0;
  int actual = 0;
  bool ok() const noexcept { return expected == actual; }
};

struct SplitReport {
  std::vector<SplitCheck> checks;
  bool ok() const noexcept;
  // Names of failing splits, "split-2" style.
  std::vector<std::string> failed_splits() const;
  std::string summary() const;
};

using SplitCounts = std::array<int, SplitId::kCount>;

SplitReport verify_split_counts(const Manifest& manifest, const SplitCounts& expected);

// Published per-split image counts for "voc", "coco" and "nus".
// Throws InputError for other names.
SplitCounts published_split_counts(std::string_view dataset);

}  // namespace coa
