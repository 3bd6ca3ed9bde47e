#pragma once

#include "cxr/image.hpp"
#include "cxr/rng.hpp"

namespace cxr {

// Ranges for random affine augmentation. Shear and rotation are angles in
// degrees, shifts are fractions of the image dimension, zoom is symmetric
// around 1.
struct AugmentationConfig {
  double shear = 0.2;
  double zoom = 0.05;
  double rotation = 0.2;
  double width_shift = 0.1;
  double height_shift = 0.1;
  bool horizontal_flip = true;

  void validate() const;
  static AugmentationConfig none();

  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

// One concrete draw from an AugmentationConfig.
struct AffineParams {
  double shear_deg = 0.0;
  double rotation_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;  // pixels
  bool flip = false;
};

// Consumes the same number of draws whatever the ranges, so the stream stays
// aligned when a range is zeroed.
AffineParams sample_affine(const AugmentationConfig& cfg, std::size_t height, std::size_t width,
                           Rng& rng);

// Mirror (if requested), then one resampling pass through
// rotation * shear * zoom about the image center plus the shift. Samples
// outside the image take the nearest edge pixel.
GrayImage apply_affine(const GrayImage& image, const AffineParams& params);

GrayImage augment(const GrayImage& image, const AugmentationConfig& cfg, Rng& rng);

}  // namespace cxr
