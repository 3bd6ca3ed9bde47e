#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cxr/image.hpp"
#include "cxr/saliency.hpp"

namespace cxr {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

// 256-entry lookup table; text form is 256 lines "r,g,b".
class Colormap {
 public:
  static constexpr std::size_t kEntries = 256;
  using Table = std::array<Rgb8, kEntries>;

  explicit Colormap(const Table& table) : table_(table) {}

  // Piecewise-linear blue -> cyan -> green -> yellow -> red. Identical to
  // data/jet.csv.
  static const Colormap& jet();
  static Colormap parse(std::string_view text);
  static Colormap load(const std::filesystem::path& path);

  const Rgb8& operator[](std::size_t i) const { return table_.at(i); }
  // v clamped to [0, 1], entry lround(v * 255).
  const Rgb8& lookup(double v) const;
  std::string to_text() const;

  friend bool operator==(const Colormap&, const Colormap&) = default;

 private:
  Table table_;
};

// Per channel: lround((1 - alpha) * gray + alpha * color), gray clamped to
// [0, 255] first.
RgbImage render_overlay(const GrayImage& xray, const Heatmap& map, double alpha = 0.5,
                        const Colormap& colormap = Colormap::jet());

RgbImage gray_to_rgb(const GrayImage& image);

}  // namespace cxr
