#pragma once

#include <cstddef>
#include <vector>

#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

enum class Padding { same, valid };

// Cross-correlation of an [H, W, Cin] input with [Kh, Kw, Cin, Cout] kernels.
// Each output element accumulates in (ky, kx, ci) order and adds the bias
// last. "same" padding places floor((K-1)/2) zeros before the image.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels,
                         const Tensor<T>& bias, Padding padding);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input,
                               const Tensor<T>& kernels, Padding padding,
                               bool need_input_grad = true);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Passes upstream where cached_x > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& upstream, const Tensor<T>& cached_x);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Non-overlapping max-pool over [H, W, C]; trailing rows/columns that do not
// fill a window are dropped. Ties go to the first position in row-major order.
template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input, std::size_t window = 2);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& upstream,
                             const std::vector<std::size_t>& argmax,
                             const Shape& input_shape);

// y = x W + b with x flattened to length n, W [n, m], b [m].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  Tensor<T> input;  // shaped like the cached input
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& upstream, const Tensor<T>& cached_x,
                             const Tensor<T>& weights);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-rate) per element; all ones in inference mode
};

// Inverted dropout. `rng` is only consulted in training mode with rate > 0.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Rng* rng, bool training);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& upstream, const Tensor<T>& mask);

// Max-subtracted softmax over a rank-1 tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& upstream, const Tensor<T>& output);

}  // namespace cxr
