#include "cxr/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cxr/error.hpp"

namespace cxr {
namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t row,
                                        const std::string& source) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw DataError(source + " line " + std::to_string(row) + ": unterminated quote");
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

Label parse_label(const std::string& token, std::size_t row, const std::string& source) {
  if (token == "1" || token == "consolidation") return Label::consolidation;
  if (token == "0" || token == "non_consolidation") return Label::non_consolidation;
  throw DataError(source + " line " + std::to_string(row) + ": unknown label '" + token +
                  "' (expected 0, 1, non_consolidation, or consolidation)");
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string label_name(Label label) {
  return label == Label::consolidation ? "consolidation" : "non_consolidation";
}

std::vector<Label> DatasetManifest::labels() const {
  std::vector<Label> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::array<std::size_t, 2> DatasetManifest::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(class_index(e.label))];
  return counts;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!seen.insert(entries[i].path.lexically_normal().string()).second) {
      throw DataError("duplicate image path '" + entries[i].path.string() + "' (entry " +
                      std::to_string(i + 1) + ")");
    }
  }
  const auto counts = class_counts();
  if (counts[0] == 0) throw DataError("manifest has no non_consolidation (label 0) images");
  if (counts[1] == 0) throw DataError("manifest has no consolidation (label 1) images");
}

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                               const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source_name + ": empty manifest");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(trim(line), 1, source_name);
  if (header.size() != 2 || trim(header[0]) != "path" || trim(header[1]) != "label") {
    throw DataError(source_name + ": header must be 'path,label'");
  }
  DatasetManifest manifest;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(trim(line), row, source_name);
    if (fields.size() != 2) {
      throw DataError(source_name + " line " + std::to_string(row) + ": expected 2 fields, got " +
                      std::to_string(fields.size()));
    }
    const std::string path_text = trim(fields[0]);
    if (path_text.empty()) throw DataError(source_name + " line " + std::to_string(row) + ": empty path");
    std::filesystem::path path(path_text);
    if (path.is_relative()) path = base_dir / path;
    manifest.entries.push_back({path.lexically_normal(), parse_label(trim(fields[1]), row, source_name)});
  }
  manifest.validate();
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), path.string());
}

std::string format_manifest(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
  std::ostringstream out;
  out << "path,label\n";
  for (const auto& e : manifest.entries) {
    std::filesystem::path p = e.path;
    if (!base_dir.empty()) {
      const auto rel = e.path.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << quote_csv(p.generic_string()) << ',' << class_index(e.label) << '\n';
  }
  return out.str();
}

}  // namespace cxr
