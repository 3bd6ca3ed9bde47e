#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cxr/augment.hpp"
#include "cxr/error.hpp"
#include "cxr/image.hpp"

namespace cxr {
namespace {

GrayImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<float>(std::uniform_int_distribution<int>(0, 255)(rng));
  return img;
}

TEST(Augment, ZeroConfigIsIdentity) {
  const auto img = random_image(150, 150, 1);
  Rng rng(5);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(augment(img, AugmentationConfig::none(), rng), img);
}

TEST(Augment, FlipOnlyMirrors) {
  const auto img = random_image(20, 31, 2);
  AffineParams p;
  p.flip = true;
  const auto out = apply_affine(img, p);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) EXPECT_EQ(out.at(r, c), img.at(r, img.width - 1 - c));
  }
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  EXPECT_EQ(flip_horizontal(img), out);
}

TEST(Augment, SameSeedSameOutput) {
  const auto img = random_image(150, 150, 3);
  Rng a(9), b(9);
  const AugmentationConfig cfg;
  const auto x = augment(img, cfg, a), y = augment(img, cfg, b);
  EXPECT_EQ(x, y);
  EXPECT_EQ(encode_png(x), encode_png(y));
  Rng c(10);
  EXPECT_NE(augment(img, cfg, c), x);
}

TEST(Augment, RangeStaysWithinInput) {
  AugmentationConfig big;
  big.shear = 20;
  big.rotation = 30;
  big.zoom = 0.3;
  big.width_shift = big.height_shift = 0.3;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto img = random_image(40, 40, s);
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    Rng rng(s);
    for (const auto& cfg : {AugmentationConfig{}, big}) {
      const auto out = augment(img, cfg, rng);
      for (float v : out.pixels) {
        EXPECT_GE(v, *lo);
        EXPECT_LE(v, *hi);
      }
    }
  }
}

TEST(Augment, SampledParametersRespectRanges) {
  const AugmentationConfig cfg;
  Rng rng(4);
  bool flipped = false, kept = false;
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_affine(cfg, 150, 150, rng);
    EXPECT_LE(std::abs(p.shear_deg), 0.2);
    EXPECT_LE(std::abs(p.rotation_deg), 0.2);
    EXPECT_GE(p.zoom, 0.95);
    EXPECT_LE(p.zoom, 1.05);
    EXPECT_LE(std::abs(p.shift_x), 15.0);
    EXPECT_LE(std::abs(p.shift_y), 15.0);
    (p.flip ? flipped : kept) = true;
  }
  EXPECT_TRUE(flipped && kept);
}

TEST(Augment, IntegerShiftMovesPixels) {
  const auto img = random_image(10, 10, 6);
  AffineParams p;
  p.shift_x = 2.0;
  const auto out = apply_affine(img, p);
  // Output samples two columns to the right, so content moves left and the
  // right border repeats the last column.
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_FLOAT_EQ(out.at(r, c), img.at(r, c + 2));
    EXPECT_FLOAT_EQ(out.at(r, 9), img.at(r, 9));
  }
}

TEST(Augment, ValidateRejectsBadConfig) {
  AugmentationConfig c;
  c.width_shift = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.zoom = -0.1;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace cxr
