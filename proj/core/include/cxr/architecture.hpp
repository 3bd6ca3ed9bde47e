#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cxr/model.hpp"

namespace cxr {

inline constexpr std::size_t kImageSize = 150;
inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::size_t kConvKernels = 32;
inline constexpr std::size_t kKernelSize = 3;
inline constexpr double kDropoutRate = 0.7;
inline constexpr double kFcL2 = 0.01;

// One of the six evaluated CNN layouts. Everything except the conv depth and
// the FC width is fixed.
struct ArchitectureSpec {
  std::string name;
  std::size_t conv_layers = 0;
  std::size_t fc_neurons = 0;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// Arch1..Arch6 in order: (4,64) (4,128) (4,256) (3,64) (3,128) (3,256).
const std::array<ArchitectureSpec, 6>& architectures();
ArchitectureSpec architecture_by_name(const std::string& name);

// Free-form variant of the same layout, used for reduced-size models in tests.
struct NetworkShape {
  std::size_t height = kImageSize;
  std::size_t width = kImageSize;
  std::size_t channels = 1;
  std::size_t conv_layers = 4;
  std::size_t kernels = kConvKernels;
  std::size_t kernel_size = kKernelSize;
  std::size_t fc_neurons = 64;
  double dropout = kDropoutRate;
  double l2 = kFcL2;
  std::size_t classes = kNumClasses;
};

// [conv + ReLU + maxpool] x conv_layers -> flatten -> dropout -> dense + ReLU
// -> dense -> softmax.
std::vector<LayerSpec> layer_stack(const NetworkShape& shape);

NetworkShape network_shape(const ArchitectureSpec& spec);

template <typename T = float>
Model<T> build_network(const NetworkShape& shape, std::uint64_t seed) {
  Model<T> model({shape.height, shape.width, shape.channels}, layer_stack(shape));
  model.initialize(seed);
  return model;
}

template <typename T = float>
Model<T> build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  return build_network<T>(network_shape(spec), seed);
}

// Width of the flattened feature vector feeding the dropout layer.
std::size_t flatten_width(const NetworkShape& shape);

}  // namespace cxr
