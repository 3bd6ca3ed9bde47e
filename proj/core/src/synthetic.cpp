#include "cxr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cxr/checkpoint.hpp"
#include "cxr/error.hpp"

namespace cxr {

BlobSample make_blob_image(Label label, const BlobDatasetConfig& cfg, Rng& rng) {
  const double n = static_cast<double>(cfg.size);
  const double cx = label == Label::non_consolidation ? uniform(rng, 0.15 * n, 0.35 * n)
                                                      : uniform(rng, 0.65 * n, 0.85 * n);
  const double cy = uniform(rng, 0.2 * n, 0.8 * n);
  const double sigma = cfg.sigma_fraction * n;
  std::normal_distribution<double> noise(0.0, cfg.noise);
  GrayImage img(cfg.size, cfg.size);
  for (std::size_t r = 0; r < cfg.size; ++r) {
    for (std::size_t c = 0; c < cfg.size; ++c) {
      const double dx = static_cast<double>(c) - cx, dy = static_cast<double>(r) - cy;
      const double blob = cfg.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      const double v = cfg.background + blob + (cfg.noise > 0.0 ? noise(rng) : 0.0);
      img.at(r, c) = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
    }
  }
  return {std::move(img), label, cx, cy};
}

std::vector<BlobSample> make_blob_dataset(const BlobDatasetConfig& cfg) {
  if (cfg.size < 8) throw DataError("blob images must be at least 8 pixels wide");
  std::vector<BlobSample> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, {i}));
    out.push_back(make_blob_image(i % 2 == 0 ? Label::non_consolidation : Label::consolidation, cfg, rng));
  }
  return out;
}

DatasetManifest write_blob_dataset(const BlobDatasetConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetManifest manifest;
  const auto samples = make_blob_dataset(cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "blob_%04zu.png", i);
    const auto path = dir / name;
    save_png(path, samples[i].image);
    manifest.entries.push_back({path.lexically_normal(), samples[i].label});
  }
  write_file_atomic(dir / "manifest.csv", format_manifest(manifest, dir));
  return manifest;
}

}  // namespace cxr
