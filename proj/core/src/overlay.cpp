#include "cxr/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "cxr/checkpoint.hpp"
#include "cxr/error.hpp"

namespace cxr {

namespace {

// 255 * clamp(1.5 - |4v - k|, 0, 1) with v = i / 255, rounded half up, done in
// integers: the unclamped value is always a multiple of one half.
std::uint8_t jet_channel(int i, int k) {
  const int twice = 765 - 2 * std::abs(4 * i - k * 255);
  if (twice <= 0) return 0;
  return static_cast<std::uint8_t>(std::min(255, (twice + 1) / 2));
}

Colormap::Table make_jet() {
  Colormap::Table t{};
  for (int i = 0; i < 256; ++i) {
    t[i] = {jet_channel(i, 3), jet_channel(i, 2), jet_channel(i, 1)};
  }
  return t;
}

}  // namespace

const Colormap& Colormap::jet() {
  static const Colormap map(make_jet());
  return map;
}

Colormap Colormap::parse(std::string_view text) {
  Table t{};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (n == kEntries) throw DataError("colormap has more than 256 entries");
    int v[3];
    std::size_t pos = 0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t end = c < 2 ? line.find(',', pos) : line.size();
      if (end == std::string::npos) throw DataError("colormap line " + std::to_string(n + 1) + ": expected r,g,b");
      const std::string field = line.substr(pos, end - pos);
      char* stop = nullptr;
      const long value = std::strtol(field.c_str(), &stop, 10);
      if (field.empty() || *stop != '\0' || value < 0 || value > 255) {
        throw DataError("colormap line " + std::to_string(n + 1) + ": bad value '" + field + "'");
      }
      v[c] = static_cast<int>(value);
      pos = end + 1;
    }
    t[n++] = {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]),
              static_cast<std::uint8_t>(v[2])};
  }
  if (n != kEntries) throw DataError("colormap has " + std::to_string(n) + " entries, expected 256");
  return Colormap(t);
}

Colormap Colormap::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

const Rgb8& Colormap::lookup(double v) const {
  if (!(v >= 0.0)) v = 0.0;
  if (v > 1.0) v = 1.0;
  return table_[static_cast<std::size_t>(std::lround(v * 255.0))];
}

std::string Colormap::to_text() const {
  std::string out;
  for (const auto& c : table_) {
    out += std::to_string(c.r) + "," + std::to_string(c.g) + "," + std::to_string(c.b) + "\n";
  }
  return out;
}

RgbImage render_overlay(const GrayImage& xray, const Heatmap& map, double alpha,
                        const Colormap& colormap) {
  if (xray.height != map.height || xray.width != map.width) {
    throw ShapeError("overlay: image is " + std::to_string(xray.height) + "x" +
                     std::to_string(xray.width) + " but heatmap is " + std::to_string(map.height) +
                     "x" + std::to_string(map.width));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("overlay alpha must be in [0, 1]");
  RgbImage out(xray.height, xray.width);
  for (std::size_t r = 0; r < xray.height; ++r) {
    for (std::size_t c = 0; c < xray.width; ++c) {
      const double g = std::clamp(static_cast<double>(xray.at(r, c)), 0.0, 255.0);
      const Rgb8& col = colormap.lookup(map.at(r, c));
      std::uint8_t* px = out.pixel(r, c);
      const std::uint8_t rgb[3] = {col.r, col.g, col.b};
      for (int k = 0; k < 3; ++k) {
        px[k] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g + alpha * rgb[k]));
      }
    }
  }
  return out;
}

RgbImage gray_to_rgb(const GrayImage& image) {
  RgbImage out(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      const auto v = static_cast<std::uint8_t>(
          std::lround(std::clamp(static_cast<double>(image.at(r, c)), 0.0, 255.0)));
      std::uint8_t* px = out.pixel(r, c);
      px[0] = px[1] = px[2] = v;
    }
  }
  return out;
}

}  // namespace cxr
