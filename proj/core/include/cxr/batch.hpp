#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/augment.hpp"
#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// Indexed, labelled images already resized to the model resolution.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual Label label(std::size_t index) const = 0;
  virtual GrayImage image(std::size_t index) const = 0;
  virtual std::string describe(std::size_t index) const;
  std::vector<Label> labels() const;
};

// Loads manifest images on first use, resizes them, and caches the result.
// Safe to share between concurrently training members.
class ManifestImageSource final : public ImageSource {
 public:
  explicit ManifestImageSource(DatasetManifest manifest, std::size_t height = 150,
                               std::size_t width = 150);

  std::size_t size() const override { return manifest_.size(); }
  Label label(std::size_t index) const override { return manifest_.entries.at(index).label; }
  GrayImage image(std::size_t index) const override;
  std::string describe(std::size_t index) const override;
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::size_t height_, width_;
  mutable std::mutex mutex_;
  mutable std::vector<std::shared_ptr<const GrayImage>> cache_;
};

class InMemoryImageSource final : public ImageSource {
 public:
  InMemoryImageSource(std::vector<GrayImage> images, std::vector<Label> labels);

  std::size_t size() const override { return images_.size(); }
  Label label(std::size_t index) const override { return labels_.at(index); }
  GrayImage image(std::size_t index) const override { return images_.at(index); }

 private:
  std::vector<GrayImage> images_;
  std::vector<Label> labels_;
};

// [N, 2] one-hot rows, column 0 = non-consolidation.
Tensor<float> one_hot(std::span<const Label> labels);

struct Batch {
  Tensor<float> images;   // [B, H, W, 1]
  Tensor<float> one_hot;  // [B, 2]
  std::vector<Label> labels;
  std::vector<std::size_t> indices;
};

// Per epoch: reshuffle (seeded by epoch), optionally augment, mean-normalize,
// and emit batches in order; the last batch may be short.
class BatchIterator {
 public:
  BatchIterator(const ImageSource& source, std::vector<std::size_t> indices,
                std::size_t batch_size, std::uint64_t seed,
                std::optional<AugmentationConfig> augmentation);

  void start_epoch(std::size_t epoch);
  std::optional<Batch> next();

  std::size_t batches_per_epoch() const;
  std::size_t sample_count() const { return indices_.size(); }

 private:
  const ImageSource* source_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::optional<AugmentationConfig> augmentation_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

// Preprocessed, never augmented images for validation/test/inference.
struct EvalSet {
  Tensor<float> images;  // [N, H, W, 1]
  Tensor<float> one_hot;
  std::vector<Label> labels;
  std::vector<std::size_t> indices;

  std::size_t size() const { return labels.size(); }
};

EvalSet make_eval_set(const ImageSource& source, std::span<const std::size_t> indices);

}  // namespace cxr
