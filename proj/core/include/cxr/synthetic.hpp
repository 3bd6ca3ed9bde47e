#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/rng.hpp"

namespace cxr {

// Two-class toy task: a bright Gaussian blob in the left half (class 0) or
// the right half (class 1) over a noisy background. Pixels are rounded to
// 8-bit so the in-memory images equal their PNG files.
struct BlobDatasetConfig {
  std::size_t count = 400;
  std::size_t size = 150;
  double background = 60.0;
  double amplitude = 120.0;
  double sigma_fraction = 0.07;  // blob sigma relative to image size
  double noise = 12.0;           // additive Gaussian noise std
  std::uint64_t seed = 0;
};

struct BlobSample {
  GrayImage image;
  Label label;
  double center_x;
  double center_y;
};

BlobSample make_blob_image(Label label, const BlobDatasetConfig& cfg, Rng& rng);

// Labels alternate 0,1,0,1,... so both classes are present whenever count >= 2.
std::vector<BlobSample> make_blob_dataset(const BlobDatasetConfig& cfg);

// Writes blob_NNNN.png files plus manifest.csv into `dir` and returns the
// manifest.
DatasetManifest write_blob_dataset(const BlobDatasetConfig& cfg, const std::filesystem::path& dir);

}  // namespace cxr
