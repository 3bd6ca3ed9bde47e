#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cxr/ensemble.hpp"
#include "cxr/model.hpp"
#include "cxr/tensor.hpp"
#include "cxr/training.hpp"

namespace cxr {

// Per-pixel importance in [0, 1]; class_index 0 = non-consolidation,
// 1 = consolidation.
struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::size_t class_index = 0;
  std::string source;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  double max() const;
  double min() const;
};

// Gradient of the linear (pre-softmax) output `class_index` with respect to
// the [H, W, C] input, dropout off. Throws NumericError on non-finite
// parameters.
template <typename T>
Tensor<T> input_gradient(const Model<T>& model, const Tensor<T>& image, std::size_t class_index);

// |input_gradient|, reduced over channels by max: [H, W].
template <typename T>
Tensor<T> raw_saliency(const Model<T>& model, const Tensor<T>& image, std::size_t class_index);

// Min-max normalization; a constant map becomes all zeros.
template <typename T>
Heatmap normalize_heatmap(const Tensor<T>& raw, std::size_t class_index, std::string source = {});

Heatmap saliency(const Model<float>& model, const Tensor<float>& image, std::size_t class_index,
                 std::string source = {});

struct HeatmapStats {
  Heatmap mean;
  Heatmap stddev;  // sample (n - 1) standard deviation
};

// Per-pixel mean and sample std of same-sized maps. Needs at least two maps.
HeatmapStats aggregate_heatmaps(std::span<const Heatmap> maps);

struct ClassHeatmaps {
  std::vector<Heatmap> members;
  Heatmap mean;
  Heatmap stddev;
};

struct HeatmapBundle {
  std::array<ClassHeatmaps, 2> classes;
  Prediction probabilities;  // ensemble average
};

// Member maps for both output neurons, their mean and std, and the ensemble
// probabilities for one preprocessed [H, W, 1] image.
HeatmapBundle ensemble_heatmaps(const Ensemble& ensemble, const Tensor<float>& image,
                                std::size_t jobs = 1);

}  // namespace cxr
