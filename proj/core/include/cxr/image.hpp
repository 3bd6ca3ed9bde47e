#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

// Single-channel image; values are 8-bit intensities widened to float until
// normalization.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w, fill) {}
  GrayImage(std::size_t h, std::size_t w, std::vector<float> values);

  float& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  float at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}

  std::uint8_t* pixel(std::size_t row, std::size_t col) { return &rgb[(row * width + col) * 3]; }
  const std::uint8_t* pixel(std::size_t row, std::size_t col) const {
    return &rgb[(row * width + col) * 3];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Decodes PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette), binary PGM
// (P5) or JPEG. Multi-channel images keep channel 0.
GrayImage decode_grayscale(std::span<const std::uint8_t> bytes);
GrayImage load_grayscale(const std::filesystem::path& path);

using PngText = std::vector<std::pair<std::string, std::string>>;

// PNG encoders write no timestamp, so output bytes depend only on the inputs.
std::vector<std::uint8_t> encode_png(const RgbImage& image, const PngText& text = {});
// Pixels are rounded and clamped to [0, 255].
std::vector<std::uint8_t> encode_png(const GrayImage& image, const PngText& text = {});
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
void save_png(const std::filesystem::path& path, const RgbImage& image, const PngText& text = {});
void save_png(const std::filesystem::path& path, const GrayImage& image, const PngText& text = {});

// Bilinear resampling on a corner-aligned grid: output corners coincide with
// input corners. A same-size resize returns the input unchanged.
GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h = 150,
                          std::size_t out_w = 150);

// Divides every pixel by the image mean; result is an [H, W, 1] tensor with
// mean 1. Throws DegenerateInputError when the mean is not positive.
Tensor<float> normalize_mean(const GrayImage& image);

GrayImage flip_horizontal(const GrayImage& image);

// Nearest-neighbour integer upscaling.
RgbImage upscale_nearest(const RgbImage& image, std::size_t factor);

}  // namespace cxr
