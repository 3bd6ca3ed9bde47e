#include "cxr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxr/error.hpp"

namespace cxr {

void AugmentationConfig::validate() const {
  for (double v : {shear, zoom, rotation, width_shift, height_shift}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("augmentation magnitudes must be >= 0");
  }
  if (width_shift >= 1.0 || height_shift >= 1.0) {
    throw DataError("augmentation shift fractions must be < 1");
  }
  if (zoom >= 1.0) throw DataError("augmentation zoom range must be < 1");
}

AugmentationConfig AugmentationConfig::none() {
  return AugmentationConfig{0.0, 0.0, 0.0, 0.0, 0.0, false};
}

AffineParams sample_affine(const AugmentationConfig& cfg, std::size_t height, std::size_t width,
                           Rng& rng) {
  AffineParams p;
  p.rotation_deg = uniform(rng, -cfg.rotation, cfg.rotation);
  p.shear_deg = uniform(rng, -cfg.shear, cfg.shear);
  p.zoom = uniform(rng, 1.0 - cfg.zoom, 1.0 + cfg.zoom);
  p.shift_x = uniform(rng, -cfg.width_shift, cfg.width_shift) * static_cast<double>(width);
  p.shift_y = uniform(rng, -cfg.height_shift, cfg.height_shift) * static_cast<double>(height);
  const bool coin = uniform(rng, 0.0, 1.0) < 0.5;
  p.flip = cfg.horizontal_flip && coin;
  return p;
}

GrayImage apply_affine(const GrayImage& image, const AffineParams& params) {
  if (image.height == 0 || image.width == 0) throw ShapeError("augment: empty image");
  const GrayImage src = params.flip ? flip_horizontal(image) : image;
  constexpr double kRad = std::numbers::pi / 180.0;
  const double theta = params.rotation_deg * kRad;
  const double phi = params.shear_deg * kRad;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  // Output -> input map: R(theta) * Shear(phi) * Zoom(z), acting on (x, y).
  // Shear(phi) = [[1, -sin phi], [0, cos phi]].
  const double z = params.zoom;
  const double sh_a = 1.0, sh_b = -std::sin(phi), sh_d = std::cos(phi);
  const double m00 = (cos_t * sh_a) * z;
  const double m01 = (cos_t * sh_b - sin_t * sh_d) * z;
  const double m10 = (sin_t * sh_a) * z;
  const double m11 = (sin_t * sh_b + cos_t * sh_d) * z;

  const double cy = (static_cast<double>(src.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(src.width) - 1.0) / 2.0;
  const double max_y = static_cast<double>(src.height - 1);
  const double max_x = static_cast<double>(src.width - 1);

  GrayImage out(src.height, src.width);
  for (std::size_t r = 0; r < src.height; ++r) {
    const double dy = static_cast<double>(r) - cy;
    for (std::size_t c = 0; c < src.width; ++c) {
      const double dx = static_cast<double>(c) - cx;
      const double sx = std::clamp(m00 * dx + m01 * dy + cx + params.shift_x, 0.0, max_x);
      const double sy = std::clamp(m10 * dx + m11 * dy + cy + params.shift_y, 0.0, max_y);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const std::size_t y1 = std::min(y0 + 1, src.height - 1);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      const double a = src.at(y0, x0), b = src.at(y0, x1);
      const double cc = src.at(y1, x0), d = src.at(y1, x1);
      const double top = a + fx * (b - a);
      const double bottom = cc + fx * (d - cc);
      const double lo = std::min({a, b, cc, d}), hi = std::max({a, b, cc, d});
      out.at(r, c) = static_cast<float>(std::clamp(top + fy * (bottom - top), lo, hi));
    }
  }
  return out;
}

GrayImage augment(const GrayImage& image, const AugmentationConfig& cfg, Rng& rng) {
  return apply_affine(image, sample_affine(cfg, image.height, image.width, rng));
}

}  // namespace cxr
