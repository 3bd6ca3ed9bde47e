#include "cxr/architecture.hpp"

namespace cxr {

const std::array<ArchitectureSpec, 6>& architectures() {
  static const std::array<ArchitectureSpec, 6> table{{
      {"Arch1", 4, 64},
      {"Arch2", 4, 128},
      {"Arch3", 4, 256},
      {"Arch4", 3, 64},
      {"Arch5", 3, 128},
      {"Arch6", 3, 256},
  }};
  return table;
}

ArchitectureSpec architecture_by_name(const std::string& name) {
  for (const auto& spec : architectures()) {
    if (spec.name == name) return spec;
  }
  throw DataError("unknown architecture '" + name + "' (expected Arch1..Arch6)");
}

NetworkShape network_shape(const ArchitectureSpec& spec) {
  NetworkShape shape;
  shape.conv_layers = spec.conv_layers;
  shape.fc_neurons = spec.fc_neurons;
  return shape;
}

std::vector<LayerSpec> layer_stack(const NetworkShape& shape) {
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < shape.conv_layers; ++i) {
    layers.push_back(LayerSpec::conv2d(shape.kernels, shape.kernel_size, Padding::same,
                                       Init::he_uniform));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::maxpool2d(2));
  }
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dropout(shape.dropout));
  layers.push_back(LayerSpec::dense(shape.fc_neurons, shape.l2, Init::glorot_uniform));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::dense(shape.classes, 0.0, Init::glorot_uniform));
  layers.push_back(LayerSpec::softmax());
  return layers;
}

std::size_t flatten_width(const NetworkShape& shape) {
  std::size_t h = shape.height, w = shape.width;
  for (std::size_t i = 0; i < shape.conv_layers; ++i) {
    h /= 2;
    w /= 2;
  }
  return h * w * shape.kernels;
}

}  // namespace cxr
