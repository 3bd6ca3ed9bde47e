#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "cxr/layers.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class LayerKind { conv2d, relu, maxpool2d, flatten, dropout, dense, softmax };

enum class Init { he_uniform, glorot_uniform, zeros };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);
std::string to_string(Init init);
Init parse_init(const std::string& name);
std::string to_string(Padding padding);
Padding parse_padding(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv2d
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  Padding padding = Padding::same;
  // maxpool2d
  std::size_t window = 0;
  // dropout
  double rate = 0.0;
  // dense
  std::size_t units = 0;
  double l2 = 0.0;  // penalty strength on this layer's kernel only
  Init init = Init::zeros;

  static LayerSpec conv2d(std::size_t filters, std::size_t kernel, Padding padding,
                          Init init = Init::he_uniform);
  static LayerSpec relu();
  static LayerSpec maxpool2d(std::size_t window = 2);
  static LayerSpec flatten();
  static LayerSpec dropout(double rate);
  static LayerSpec dense(std::size_t units, double l2 = 0.0, Init init = Init::glorot_uniform);
  static LayerSpec softmax();

  bool has_parameters() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline constexpr std::size_t kNoParameter = std::numeric_limits<std::size_t>::max();

// A feed-forward layer stack with its weight and bias tensors. Parameters are
// stored flat, weight then bias, in layer order.
template <typename T>
class Model {
 public:
  Model() = default;
  // Validates the stack against the input shape; parameters start at zero.
  Model(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Shape& output_shape(std::size_t layer) const { return output_shapes_.at(layer); }
  const Shape& output_shape() const { return output_shapes_.back(); }

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  std::size_t weight_index(std::size_t layer) const { return weight_slot_.at(layer); }
  std::size_t bias_index(std::size_t layer) const {
    const std::size_t w = weight_slot_.at(layer);
    return w == kNoParameter ? kNoParameter : w + 1;
  }
  const Tensor<T>& weights(std::size_t layer) const { return params_.at(weight_index(layer)); }
  const Tensor<T>& bias(std::size_t layer) const { return params_.at(bias_index(layer)); }
  std::size_t parameter_count() const;

  // Number of leading layers that produce the logits: every layer except a
  // trailing softmax.
  std::size_t logits_end() const;

  // He/Glorot uniform draws per LayerSpec::init, zero biases.
  void initialize(std::uint64_t seed);

  template <typename U>
  Model<U> cast() const {
    Model<U> out(input_shape_, layers_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i] = params_[i].template cast<U>();
    }
    return out;
  }

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> output_shapes_;
  std::vector<std::size_t> weight_slot_;
  std::vector<Tensor<T>> params_;
};

enum class Mode { inference, training };

// Values cached by forward() for the backward pass.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> activations;  // [0] = input, [i + 1] = output of layer i
  std::vector<std::vector<std::size_t>> pool_argmax;  // per layer, empty if unused
  std::vector<Tensor<T>> dropout_masks;               // per layer, empty if unused
};

inline constexpr std::size_t kAllLayers = std::numeric_limits<std::size_t>::max();

// Runs layers [0, end_layer) on one [H, W, C] sample. `rng` drives dropout in
// training mode. Passing logits_end() as end_layer yields the linear head.
template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& input, Mode mode, Rng* rng = nullptr,
                  std::type_identity_t<Trace<T>>* trace = nullptr, std::size_t end_layer = kAllLayers);

// Back-propagates `upstream` (gradient w.r.t. the output of layer end_layer-1)
// through a traced forward pass. Parameter gradients are accumulated into
// `param_grads` when given (shaped like model.parameters()); the input
// gradient is written when `input_grad` is non-null.
template <typename T>
void backward(const Model<T>& model, const Trace<T>& trace, Tensor<T> upstream,
              std::size_t end_layer, std::type_identity_t<std::vector<Tensor<T>>>* param_grads,
              std::type_identity_t<Tensor<T>>* input_grad = nullptr);

template <typename T>
std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>& params);

// Sum over layers with l2 > 0 of l2 * sum(kernel^2).
template <typename T>
double l2_penalty(const Model<T>& model);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;       // mean cross-entropy + L2 penalty
  double data_loss = 0.0;  // mean cross-entropy only
  std::vector<Tensor<T>> grads;
  std::vector<Tensor<T>> probabilities;  // per sample
};

// Mean categorical cross-entropy over a [B, H, W, C] batch with [B, K] one-hot
// labels, plus the L2 penalty. The model must end in softmax. In training
// mode dropout masks are drawn from `rng` sample by sample.
template <typename T>
LossAndGrad<T> loss_and_grad(const Model<T>& model, const Tensor<T>& batch,
                             const Tensor<T>& one_hot, Mode mode = Mode::training,
                             Rng* rng = nullptr);

// Same objective without gradients; always inference mode.
template <typename T>
double evaluate_loss(const Model<T>& model, const Tensor<T>& batch, const Tensor<T>& one_hot);

}  // namespace cxr
