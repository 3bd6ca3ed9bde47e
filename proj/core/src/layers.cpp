#include "cxr/layers.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace cxr {
namespace {

struct ConvGeometry {
  std::ptrdiff_t in_h, in_w, in_c;
  std::ptrdiff_t k_h, k_w, out_c;
  std::ptrdiff_t out_h, out_w;
  std::ptrdiff_t pad_top, pad_left;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernels, Padding padding) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be [H,W,C], got " + shape_string(input.shape()));
  }
  if (kernels.rank() != 4) {
    throw ShapeError("conv2d: kernels must be [Kh,Kw,Cin,Cout], got " +
                     shape_string(kernels.shape()));
  }
  if (kernels.dim(2) != input.dim(2)) {
    throw ShapeError("conv2d: kernel input channels " + std::to_string(kernels.dim(2)) +
                     " vs input channels " + std::to_string(input.dim(2)));
  }
  if (kernels.dim(0) > input.dim(0) || kernels.dim(1) > input.dim(1)) {
    throw ShapeError("conv2d: kernel " + shape_string(kernels.shape()) +
                     " larger than input " + shape_string(input.shape()));
  }
  ConvGeometry g{};
  g.in_h = static_cast<std::ptrdiff_t>(input.dim(0));
  g.in_w = static_cast<std::ptrdiff_t>(input.dim(1));
  g.in_c = static_cast<std::ptrdiff_t>(input.dim(2));
  g.k_h = static_cast<std::ptrdiff_t>(kernels.dim(0));
  g.k_w = static_cast<std::ptrdiff_t>(kernels.dim(1));
  g.out_c = static_cast<std::ptrdiff_t>(kernels.dim(3));
  if (padding == Padding::same) {
    g.out_h = g.in_h;
    g.out_w = g.in_w;
    g.pad_top = (g.k_h - 1) / 2;
    g.pad_left = (g.k_w - 1) / 2;
  } else {
    g.out_h = g.in_h - g.k_h + 1;
    g.out_w = g.in_w - g.k_w + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// Accumulator of kFixed lanes kept in registers when the width is known at
// compile time; kFixed == 0 selects a heap buffer of runtime width.
template <typename T, int kFixed>
struct Accumulator {
  explicit Accumulator(std::ptrdiff_t) {}
  static constexpr std::ptrdiff_t size() { return kFixed; }
  T* data() { return lanes.data(); }
  void zero() { lanes.fill(T{0}); }
  alignas(64) std::array<T, kFixed> lanes{};
};

template <typename T>
struct Accumulator<T, 0> {
  explicit Accumulator(std::ptrdiff_t n) : lanes(static_cast<std::size_t>(n)) {}
  std::ptrdiff_t size() const { return static_cast<std::ptrdiff_t>(lanes.size()); }
  T* data() { return lanes.data(); }
  void zero() { std::fill(lanes.begin(), lanes.end(), T{0}); }
  std::vector<T> lanes;
};

template <typename T, int kOut>
void conv_forward_kernel(const ConvGeometry& g, const T* in, const T* k, const T* b, T* out) {
  Accumulator<T, kOut> acc(g.out_c);
  const std::ptrdiff_t co = acc.size();
  for (std::ptrdiff_t y = 0; y < g.out_h; ++y) {
    for (std::ptrdiff_t x = 0; x < g.out_w; ++x) {
      acc.zero();
      T* a = acc.data();
      for (std::ptrdiff_t ky = 0; ky < g.k_h; ++ky) {
        const std::ptrdiff_t iy = y + ky - g.pad_top;
        if (iy < 0 || iy >= g.in_h) continue;
        for (std::ptrdiff_t kx = 0; kx < g.k_w; ++kx) {
          const std::ptrdiff_t ix = x + kx - g.pad_left;
          if (ix < 0 || ix >= g.in_w) continue;
          const T* ip = in + (iy * g.in_w + ix) * g.in_c;
          const T* kp = k + (ky * g.k_w + kx) * g.in_c * co;
          for (std::ptrdiff_t ci = 0; ci < g.in_c; ++ci) {
            const T v = ip[ci];
            const T* kr = kp + ci * co;
            for (std::ptrdiff_t c = 0; c < co; ++c) a[c] += v * kr[c];
          }
        }
      }
      T* op = out + (y * g.out_w + x) * co;
      for (std::ptrdiff_t c = 0; c < co; ++c) op[c] = a[c] + b[c];
    }
  }
}

template <typename T, int kOut>
void conv_kernel_grad(const ConvGeometry& g, const T* in, const T* up, T* gk) {
  Accumulator<T, kOut> acc(g.out_c);
  const std::ptrdiff_t co = acc.size();
  for (std::ptrdiff_t ky = 0; ky < g.k_h; ++ky) {
    for (std::ptrdiff_t kx = 0; kx < g.k_w; ++kx) {
      for (std::ptrdiff_t ci = 0; ci < g.in_c; ++ci) {
        acc.zero();
        T* a = acc.data();
        for (std::ptrdiff_t y = 0; y < g.out_h; ++y) {
          const std::ptrdiff_t iy = y + ky - g.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          for (std::ptrdiff_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = x + kx - g.pad_left;
            if (ix < 0 || ix >= g.in_w) continue;
            const T v = in[(iy * g.in_w + ix) * g.in_c + ci];
            const T* gp = up + (y * g.out_w + x) * co;
            for (std::ptrdiff_t c = 0; c < co; ++c) a[c] += v * gp[c];
          }
        }
        T* kr = gk + ((ky * g.k_w + kx) * g.in_c + ci) * co;
        for (std::ptrdiff_t c = 0; c < co; ++c) kr[c] = a[c];
      }
    }
  }
}

// `kt` is the kernel transposed to [Kh, Kw, Cout, Cin] so the inner loop runs
// over contiguous input channels.
template <typename T, int kIn>
void conv_input_grad(const ConvGeometry& g, const T* up, const T* kt, T* gi) {
  Accumulator<T, kIn> acc(g.in_c);
  const std::ptrdiff_t cin = acc.size();
  for (std::ptrdiff_t iy = 0; iy < g.in_h; ++iy) {
    for (std::ptrdiff_t ix = 0; ix < g.in_w; ++ix) {
      acc.zero();
      T* a = acc.data();
      for (std::ptrdiff_t ky = 0; ky < g.k_h; ++ky) {
        const std::ptrdiff_t y = iy - ky + g.pad_top;
        if (y < 0 || y >= g.out_h) continue;
        for (std::ptrdiff_t kx = 0; kx < g.k_w; ++kx) {
          const std::ptrdiff_t x = ix - kx + g.pad_left;
          if (x < 0 || x >= g.out_w) continue;
          const T* gp = up + (y * g.out_w + x) * g.out_c;
          const T* kp = kt + (ky * g.k_w + kx) * g.out_c * cin;
          for (std::ptrdiff_t c = 0; c < g.out_c; ++c) {
            const T v = gp[c];
            const T* kr = kp + c * cin;
            for (std::ptrdiff_t i = 0; i < cin; ++i) a[i] += v * kr[i];
          }
        }
      }
      T* op = gi + (iy * g.in_w + ix) * cin;
      for (std::ptrdiff_t i = 0; i < cin; ++i) op[i] = a[i];
    }
  }
}

constexpr std::ptrdiff_t kWideChannels = 32;

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels,
                         const Tensor<T>& bias, Padding padding) {
  const ConvGeometry g = conv_geometry(input, kernels, padding);
  if (bias.rank() != 1 || static_cast<std::ptrdiff_t>(bias.size()) != g.out_c) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " vs " +
                     std::to_string(g.out_c) + " kernels");
  }
  Tensor<T> out({static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
                 static_cast<std::size_t>(g.out_c)});
  if (g.out_c == kWideChannels) {
    conv_forward_kernel<T, kWideChannels>(g, input.data(), kernels.data(), bias.data(),
                                          out.data());
  } else {
    conv_forward_kernel<T, 0>(g, input.data(), kernels.data(), bias.data(), out.data());
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& upstream, const Tensor<T>& cached_input,
                               const Tensor<T>& kernels, Padding padding,
                               bool need_input_grad) {
  const ConvGeometry g = conv_geometry(cached_input, kernels, padding);
  const Shape expected{static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
                       static_cast<std::size_t>(g.out_c)};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d_backward: upstream " + shape_string(upstream.shape()) +
                     " vs forward output " + shape_string(expected));
  }
  Conv2dGrads<T> grads;
  grads.kernels = Tensor<T>(kernels.shape());
  grads.bias = Tensor<T>({static_cast<std::size_t>(g.out_c)});

  if (g.out_c == kWideChannels) {
    conv_kernel_grad<T, kWideChannels>(g, cached_input.data(), upstream.data(),
                                       grads.kernels.data());
  } else {
    conv_kernel_grad<T, 0>(g, cached_input.data(), upstream.data(), grads.kernels.data());
  }

  T* gb = grads.bias.data();
  const T* up = upstream.data();
  for (std::ptrdiff_t p = 0; p < g.out_h * g.out_w; ++p) {
    for (std::ptrdiff_t c = 0; c < g.out_c; ++c) gb[c] += up[p * g.out_c + c];
  }

  if (need_input_grad) {
    Tensor<T> transposed({kernels.dim(0), kernels.dim(1), kernels.dim(3), kernels.dim(2)});
    for (std::size_t ky = 0; ky < kernels.dim(0); ++ky)
      for (std::size_t kx = 0; kx < kernels.dim(1); ++kx)
        for (std::size_t ci = 0; ci < kernels.dim(2); ++ci)
          for (std::size_t co = 0; co < kernels.dim(3); ++co)
            transposed(ky, kx, co, ci) = kernels(ky, kx, ci, co);
    grads.input = Tensor<T>(cached_input.shape());
    if (g.in_c == kWideChannels) {
      conv_input_grad<T, kWideChannels>(g, upstream.data(), transposed.data(),
                                        grads.input.data());
    } else {
      conv_input_grad<T, 0>(g, upstream.data(), transposed.data(), grads.input.data());
    }
  }
  return grads;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& upstream, const Tensor<T>& cached_x) {
  upstream.require_same_shape(cached_x, "relu_backward");
  Tensor<T> out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(cached_x[i] > T{0})) out[i] = T{0};
  }
  return out;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input, std::size_t window) {
  if (input.rank() != 3) {
    throw ShapeError("maxpool2d: input must be [H,W,C], got " + shape_string(input.shape()));
  }
  if (window == 0 || input.dim(0) < window || input.dim(1) < window) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " does not fit " +
                     shape_string(input.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  PoolResult<T> result{Tensor<T>({oh, ow, c}), std::vector<std::size_t>(oh * ow * c)};
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = (y * window * w + x * window) * c + ch;
        T best_value = input[best];
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = ((y * window + dy) * w + (x * window + dx)) * c + ch;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (y * ow + x) * c + ch;
        result.output[o] = best_value;
        result.argmax[o] = best;
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& upstream, const std::vector<std::size_t>& argmax,
                             const Shape& input_shape) {
  if (upstream.size() != argmax.size()) {
    throw ShapeError("maxpool2d_backward: upstream " + shape_string(upstream.shape()) +
                     " vs " + std::to_string(argmax.size()) + " routed positions");
  }
  Tensor<T> out(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) out[argmax[i]] += upstream[i];
  return out;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (weights.rank() != 2 || weights.dim(0) != x.size()) {
    throw ShapeError("dense: input of " + std::to_string(x.size()) + " values vs weights " +
                     shape_string(weights.shape()));
  }
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  if (bias.rank() != 1 || bias.size() != m) {
    throw ShapeError("dense: bias " + shape_string(bias.shape()) + " vs " + std::to_string(m) +
                     " units");
  }
  Tensor<T> out({m});
  T* o = out.data();
  const T* w = weights.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    const T* row = w + i * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += v * row[j];
  }
  for (std::size_t j = 0; j < m; ++j) o[j] += bias[j];
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& upstream, const Tensor<T>& cached_x,
                             const Tensor<T>& weights) {
  if (weights.rank() != 2 || weights.dim(0) != cached_x.size() ||
      upstream.size() != weights.dim(1)) {
    throw ShapeError("dense_backward: input " + shape_string(cached_x.shape()) + ", weights " +
                     shape_string(weights.shape()) + ", upstream " +
                     shape_string(upstream.shape()));
  }
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  DenseGrads<T> grads{Tensor<T>(cached_x.shape()), Tensor<T>(weights.shape()),
                      Tensor<T>({m}, std::vector<T>(upstream.values().begin(),
                                                    upstream.values().end()))};
  const T* g = upstream.data();
  const T* w = weights.data();
  T* gw = grads.weights.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = cached_x[i];
    T* row = gw + i * m;
    const T* wrow = w + i * m;
    T sum{0};
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = v * g[j];
      sum += wrow[j] * g[j];
    }
    grads.input[i] = sum;
  }
  return grads;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Rng* rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  DropoutResult<T> result{x, Tensor<T>(x.shape(), T{1})};
  if (!training || rate == 0.0) return result;
  if (rng == nullptr) throw Error("dropout: training mode requires an rng");
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool drop = u(*rng) < rate;
    result.mask[i] = drop ? T{0} : scale;
    result.output[i] = x[i] * result.mask[i];
  }
  return result;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& upstream, const Tensor<T>& mask) {
  upstream.require_same_shape(mask, "dropout_backward");
  Tensor<T> out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 1 || logits.empty()) {
    throw ShapeError("softmax: expected a non-empty vector, got " +
                     shape_string(logits.shape()));
  }
  T peak = logits[0];
  for (T v : logits.values()) peak = std::max(peak, v);
  Tensor<T> out(logits.shape());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (T& v : out.values()) v /= total;
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& upstream, const Tensor<T>& output) {
  upstream.require_same_shape(output, "softmax_backward");
  T dot{0};
  for (std::size_t i = 0; i < output.size(); ++i) dot += upstream[i] * output[i];
  Tensor<T> out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) out[i] = output[i] * (upstream[i] - dot);
  return out;
}

#define CXR_INSTANTIATE_LAYERS(T)                                                            \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                    Padding);                                                \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,                \
                                          const Tensor<T>&, Padding, bool);                  \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template PoolResult<T> maxpool2d_forward(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> maxpool2d_backward(const Tensor<T>&, const std::vector<std::size_t>&,   \
                                        const Shape&);                                       \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&,                  \
                                        const Tensor<T>&);                                   \
  template DropoutResult<T> dropout(const Tensor<T>&, double, Rng*, bool);                   \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);

CXR_INSTANTIATE_LAYERS(float)
CXR_INSTANTIATE_LAYERS(double)

#undef CXR_INSTANTIATE_LAYERS

}  // namespace cxr
