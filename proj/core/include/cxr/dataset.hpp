#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

namespace cxr {

// 0 = non-consolidation, 1 = consolidation.
enum class Label : std::uint8_t { non_consolidation = 0, consolidation = 1 };

inline int class_index(Label label) { return static_cast<int>(label); }
std::string label_name(Label label);

struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest's directory
  Label label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<Label> labels() const;
  std::array<std::size_t, 2> class_counts() const;
  // Throws DataError on duplicate paths or a missing class.
  void validate() const;
};

// CSV with header "path,label"; labels are 0/1 or
// non_consolidation/consolidation. Fields may be double-quoted. Relative
// paths are resolved against `base_dir`.
DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                               const std::string& source_name = "manifest");
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes paths relative to `base_dir` where possible, labels as 0/1.
std::string format_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

}  // namespace cxr
