#include "cxr/batch.hpp"

#include <algorithm>
#include <numeric>

#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

std::string ImageSource::describe(std::size_t index) const {
  return "image #" + std::to_string(index);
}

std::vector<Label> ImageSource::labels() const {
  std::vector<Label> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label(i);
  return out;
}

ManifestImageSource::ManifestImageSource(DatasetManifest manifest, std::size_t height,
                                         std::size_t width)
    : manifest_(std::move(manifest)), height_(height), width_(width), cache_(manifest_.size()) {}

GrayImage ManifestImageSource::image(std::size_t index) const {
  {
    std::lock_guard lock(mutex_);
    if (const auto& hit = cache_.at(index)) return *hit;
  }
  const auto& path = manifest_.entries.at(index).path;
  auto loaded = std::make_shared<const GrayImage>(resize_bilinear(load_grayscale(path), height_, width_));
  std::lock_guard lock(mutex_);
  cache_[index] = loaded;
  return *loaded;
}

std::string ManifestImageSource::describe(std::size_t index) const {
  return manifest_.entries.at(index).path.string();
}

InMemoryImageSource::InMemoryImageSource(std::vector<GrayImage> images, std::vector<Label> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.size() != labels_.size()) {
    throw DataError("in-memory source: " + std::to_string(images_.size()) + " images vs " +
                    std::to_string(labels_.size()) + " labels");
  }
}

Tensor<float> one_hot(std::span<const Label> labels) {
  Tensor<float> out({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out(i, static_cast<std::size_t>(class_index(labels[i]))) = 1.0f;
  }
  return out;
}

BatchIterator::BatchIterator(const ImageSource& source, std::vector<std::size_t> indices,
                             std::size_t batch_size, std::uint64_t seed,
                             std::optional<AugmentationConfig> augmentation)
    : source_(&source),
      indices_(std::move(indices)),
      batch_size_(batch_size),
      seed_(seed),
      augmentation_(std::move(augmentation)) {
  if (indices_.empty()) throw DataError("batch iterator needs at least one training index");
  if (batch_size_ == 0) throw DataError("batch size must be >= 1");
  if (augmentation_) augmentation_->validate();
  start_epoch(0);
}

void BatchIterator::start_epoch(std::size_t epoch) {
  rng_.seed(derive_seed(seed_, {epoch}));
  order_ = indices_;
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  Batch batch;
  std::vector<Tensor<float>> samples;
  samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t index = order_[cursor_ + k];
    GrayImage img = source_->image(index);
    if (augmentation_) img = augment(img, *augmentation_, rng_);
    try {
      samples.push_back(normalize_mean(img));
    } catch (const Error& e) {
      throw DataError(source_->describe(index) + ": " + e.what());
    }
    batch.labels.push_back(source_->label(index));
    batch.indices.push_back(index);
  }
  cursor_ += count;
  batch.images = stack<float>(samples);
  batch.one_hot = one_hot(batch.labels);
  return batch;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (indices_.size() + batch_size_ - 1) / batch_size_;
}

EvalSet make_eval_set(const ImageSource& source, std::span<const std::size_t> indices) {
  EvalSet set;
  std::vector<Tensor<float>> samples;
  samples.reserve(indices.size());
  for (std::size_t index : indices) {
    try {
      samples.push_back(normalize_mean(source.image(index)));
    } catch (const DegenerateInputError& e) {
      throw DataError(source.describe(index) + ": " + e.what());
    }
    set.labels.push_back(source.label(index));
    set.indices.push_back(index);
  }
  if (!samples.empty()) set.images = stack<float>(samples);
  set.one_hot = one_hot(set.labels);
  return set;
}

}  // namespace cxr
