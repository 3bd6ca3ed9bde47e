#include "cxr/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace cxr {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (LayerKind k : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2d,
                      LayerKind::flatten, LayerKind::dropout, LayerKind::dense,
                      LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  throw DataError("unknown layer kind '" + name + "'");
}

std::string to_string(Init init) {
  switch (init) {
    case Init::he_uniform: return "he_uniform";
    case Init::glorot_uniform: return "glorot_uniform";
    case Init::zeros: return "zeros";
  }
  return "unknown";
}

Init parse_init(const std::string& name) {
  for (Init i : {Init::he_uniform, Init::glorot_uniform, Init::zeros}) {
    if (to_string(i) == name) return i;
  }
  throw DataError("unknown initializer '" + name + "'");
}

std::string to_string(Padding padding) { return padding == Padding::same ? "same" : "valid"; }

Padding parse_padding(const std::string& name) {
  if (name == "same") return Padding::same;
  if (name == "valid") return Padding::valid;
  throw DataError("unknown padding '" + name + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel, Padding padding, Init init) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.filters = filters;
  s.kernel_h = kernel;
  s.kernel_w = kernel;
  s.padding = padding;
  s.init = init;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool2d(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.window = window;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t units, double l2, Init init) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  s.l2 = l2;
  s.init = init;
  return s;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::conv2d:
      if (filters < 1) throw ShapeError("conv2d needs at least one kernel");
      if (kernel_h < 1 || kernel_w < 1) throw ShapeError("conv2d kernel size must be >= 1");
      break;
    case LayerKind::maxpool2d:
      if (window < 1) throw ShapeError("maxpool2d window must be >= 1");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) {
        throw ShapeError("dropout rate must lie in [0,1), got " + std::to_string(rate));
      }
      break;
    case LayerKind::dense:
      if (units < 1) throw ShapeError("dense layer needs at least one neuron");
      if (!(l2 >= 0.0)) throw ShapeError("dense l2 strength must be >= 0");
      break;
    default:
      break;
  }
}

template <typename T>
Model<T>::Model(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeError("model input shape must be non-empty, got " + shape_string(input_shape_));
  }
  Shape current = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& spec = layers_[i];
    spec.validate();
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(spec.kind) + "): ";
    std::size_t slot = kNoParameter;
    switch (spec.kind) {
      case LayerKind::conv2d: {
        if (current.size() != 3) throw ShapeError(where + "needs [H,W,C], got " + shape_string(current));
        if (spec.kernel_h > current[0] || spec.kernel_w > current[1]) {
          throw ShapeError(where + "kernel larger than " + shape_string(current));
        }
        slot = params_.size();
        params_.emplace_back(Shape{spec.kernel_h, spec.kernel_w, current[2], spec.filters});
        params_.emplace_back(Shape{spec.filters});
        if (spec.padding == Padding::valid) {
          current = {current[0] - spec.kernel_h + 1, current[1] - spec.kernel_w + 1, spec.filters};
        } else {
          current = {current[0], current[1], spec.filters};
        }
        break;
      }
      case LayerKind::maxpool2d:
        if (current.size() != 3 || current[0] < spec.window || current[1] < spec.window) {
          throw ShapeError(where + "window does not fit " + shape_string(current));
        }
        current = {current[0] / spec.window, current[1] / spec.window, current[2]};
        break;
      case LayerKind::flatten:
        current = {shape_size(current)};
        break;
      case LayerKind::dense:
        if (current.size() != 1) throw ShapeError(where + "needs a flat input, got " + shape_string(current));
        slot = params_.size();
        params_.emplace_back(Shape{current[0], spec.units});
        params_.emplace_back(Shape{spec.units});
        current = {spec.units};
        break;
      case LayerKind::softmax:
        if (current.size() != 1) throw ShapeError(where + "needs a flat input, got " + shape_string(current));
        break;
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
    }
    weight_slot_.push_back(slot);
    output_shapes_.push_back(current);
  }
  if (layers_.empty()) output_shapes_.push_back(current);
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
std::size_t Model<T>::logits_end() const {
  if (!layers_.empty() && layers_.back().kind == LayerKind::softmax) return layers_.size() - 1;
  return layers_.size();
}

template <typename T>
void Model<T>::initialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::size_t slot = weight_slot_[i];
    if (slot == kNoParameter) continue;
    Tensor<T>& w = params_[slot];
    params_[slot + 1].fill(T{0});
    double fan_in = 0.0, fan_out = 0.0;
    if (layers_[i].kind == LayerKind::conv2d) {
      const double area = static_cast<double>(w.dim(0) * w.dim(1));
      fan_in = area * static_cast<double>(w.dim(2));
      fan_out = area * static_cast<double>(w.dim(3));
    } else {
      fan_in = static_cast<double>(w.dim(0));
      fan_out = static_cast<double>(w.dim(1));
    }
    double limit = 0.0;
    switch (layers_[i].init) {
      case Init::he_uniform: limit = std::sqrt(6.0 / fan_in); break;
      case Init::glorot_uniform: limit = std::sqrt(6.0 / (fan_in + fan_out)); break;
      case Init::zeros: limit = 0.0; break;
    }
    if (limit == 0.0) {
      w.fill(T{0});
      continue;
    }
    Rng rng(derive_seed(seed, {i}));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (T& v : w.values()) v = static_cast<T>(u(rng));
  }
}

template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& input, Mode mode, Rng* rng,
                  std::type_identity_t<Trace<T>>* trace, std::size_t end_layer) {
  if (input.shape() != model.input_shape()) {
    throw ShapeError("model expects input " + shape_string(model.input_shape()) + ", got " +
                     shape_string(input.shape()));
  }
  const auto& layers = model.layers();
  const std::size_t end = std::min(end_layer, layers.size());
  if (trace) {
    trace->activations.assign(1, input);
    trace->pool_argmax.assign(end, {});
    trace->dropout_masks.assign(end, {});
  }
  Tensor<T> x = input;
  for (std::size_t i = 0; i < end; ++i) {
    const LayerSpec& spec = layers[i];
    switch (spec.kind) {
      case LayerKind::conv2d:
        x = conv2d_forward(x, model.weights(i), model.bias(i), spec.padding);
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::maxpool2d: {
        auto pooled = maxpool2d_forward(x, spec.window);
        x = std::move(pooled.output);
        if (trace) trace->pool_argmax[i] = std::move(pooled.argmax);
        break;
      }
      case LayerKind::flatten:
        x.reshape({x.size()});
        break;
      case LayerKind::dropout: {
        auto dropped = dropout(x, spec.rate, rng, mode == Mode::training);
        x = std::move(dropped.output);
        if (trace) trace->dropout_masks[i] = std::move(dropped.mask);
        break;
      }
      case LayerKind::dense:
        x = dense_forward(x, model.weights(i), model.bias(i));
        break;
      case LayerKind::softmax:
        x = softmax(x);
        break;
    }
    if (trace) trace->activations.push_back(x);
  }
  return x;
}

template <typename T>
void backward(const Model<T>& model, const Trace<T>& trace, Tensor<T> upstream,
              std::size_t end_layer, std::type_identity_t<std::vector<Tensor<T>>>* param_grads,
              std::type_identity_t<Tensor<T>>* input_grad) {
  const auto& layers = model.layers();
  const std::size_t end = std::min(end_layer, layers.size());
  if (trace.activations.size() < end + 1) {
    throw ShapeError("backward: trace covers " + std::to_string(trace.activations.size() - 1) +
                     " layers, need " + std::to_string(end));
  }
  if (upstream.shape() != trace.activations[end].shape()) {
    throw ShapeError("backward: upstream " + shape_string(upstream.shape()) + " vs layer output " +
                     shape_string(trace.activations[end].shape()));
  }
  if (param_grads && param_grads->size() != model.parameters().size()) {
    throw ShapeError("backward: gradient buffer does not match model parameters");
  }
  for (std::size_t i = end; i-- > 0;) {
    const LayerSpec& spec = layers[i];
    const Tensor<T>& in = trace.activations[i];
    const bool need_input = i > 0 || input_grad != nullptr;
    switch (spec.kind) {
      case LayerKind::conv2d: {
        auto g = conv2d_backward(upstream, in, model.weights(i), spec.padding, need_input);
        if (param_grads) {
          (*param_grads)[model.weight_index(i)] += g.kernels;
          (*param_grads)[model.bias_index(i)] += g.bias;
        }
        upstream = std::move(g.input);
        break;
      }
      case LayerKind::relu:
        upstream = relu_backward(upstream, in);
        break;
      case LayerKind::maxpool2d:
        upstream = maxpool2d_backward(upstream, trace.pool_argmax[i], in.shape());
        break;
      case LayerKind::flatten:
        upstream.reshape(in.shape());
        break;
      case LayerKind::dropout:
        upstream = dropout_backward(upstream, trace.dropout_masks[i]);
        break;
      case LayerKind::dense: {
        auto g = dense_backward(upstream, in, model.weights(i));
        if (param_grads) {
          (*param_grads)[model.weight_index(i)] += g.weights;
          (*param_grads)[model.bias_index(i)] += g.bias;
        }
        upstream = std::move(g.input);
        break;
      }
      case LayerKind::softmax:
        upstream = softmax_backward(upstream, trace.activations[i + 1]);
        break;
    }
    if (!need_input) break;
  }
  if (input_grad) *input_grad = std::move(upstream);
}

template <typename T>
std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape());
  return out;
}

template <typename T>
double l2_penalty(const Model<T>& model) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const double strength = model.layers()[i].l2;
    if (strength <= 0.0 || !model.layers()[i].has_parameters()) continue;
    double sq = 0.0;
    for (T w : model.weights(i).values()) sq += static_cast<double>(w) * static_cast<double>(w);
    total += strength * sq;
  }
  return total;
}

namespace {

template <typename T>
void check_batch(const Model<T>& model, const Tensor<T>& batch, const Tensor<T>& one_hot) {
  if (model.layers().empty() || model.layers().back().kind != LayerKind::softmax) {
    throw ShapeError("loss requires a model ending in softmax");
  }
  if (batch.rank() != model.input_shape().size() + 1 || batch.dim(0) == 0) {
    throw ShapeError("batch " + shape_string(batch.shape()) + " does not hold samples of " +
                     shape_string(model.input_shape()));
  }
  const std::size_t classes = model.output_shape()[0];
  if (one_hot.rank() != 2 || one_hot.dim(0) != batch.dim(0) || one_hot.dim(1) != classes) {
    throw ShapeError("labels " + shape_string(one_hot.shape()) + " do not match batch of " +
                     std::to_string(batch.dim(0)) + " over " + std::to_string(classes) +
                     " classes");
  }
}

// Cross-entropy from logits via log-sum-exp; fills probabilities.
template <typename T>
double cross_entropy(const Tensor<T>& logits, const Tensor<T>& one_hot, std::size_t row,
                     Tensor<T>& probabilities) {
  probabilities = softmax(logits);
  double peak = logits[0];
  for (T z : logits.values()) peak = std::max(peak, static_cast<double>(z));
  double sum = 0.0;
  for (T z : logits.values()) sum += std::exp(static_cast<double>(z) - peak);
  const double lse = peak + std::log(sum);
  double loss = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double y = one_hot(row, k);
    if (y != 0.0) loss += y * (lse - static_cast<double>(logits[k]));
  }
  return loss;
}

}  // namespace

template <typename T>
LossAndGrad<T> loss_and_grad(const Model<T>& model, const Tensor<T>& batch,
                             const Tensor<T>& one_hot, Mode mode, Rng* rng) {
  check_batch(model, batch, one_hot);
  const std::size_t n = batch.dim(0);
  const std::size_t end = model.logits_end();
  LossAndGrad<T> result;
  result.grads = zeros_like(model.parameters());
  result.probabilities.resize(n);
  Trace<T> trace;
  double ce_total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    Tensor<T> logits = forward(model, batch.slice(b), mode, rng, &trace, end);
    ce_total += cross_entropy(logits, one_hot, b, result.probabilities[b]);
    Tensor<T> grad_logits(logits.shape());
    double mass = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) mass += one_hot(b, k);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      grad_logits[k] = static_cast<T>(result.probabilities[b][k] * mass - one_hot(b, k));
    }
    backward(model, trace, std::move(grad_logits), end, &result.grads);
  }
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
  for (auto& g : result.grads) g *= inv_n;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const double strength = model.layers()[i].l2;
    if (strength <= 0.0 || !model.layers()[i].has_parameters()) continue;
    const Tensor<T>& w = model.weights(i);
    Tensor<T>& gw = result.grads[model.weight_index(i)];
    for (std::size_t j = 0; j < w.size(); ++j) gw[j] += static_cast<T>(2.0 * strength) * w[j];
  }
  result.data_loss = ce_total / static_cast<double>(n);
  result.loss = result.data_loss + l2_penalty(model);
  return result;
}

template <typename T>
double evaluate_loss(const Model<T>& model, const Tensor<T>& batch, const Tensor<T>& one_hot) {
  check_batch(model, batch, one_hot);
  const std::size_t end = model.logits_end();
  double ce_total = 0.0;
  Tensor<T> probs;
  for (std::size_t b = 0; b < batch.dim(0); ++b) {
    Tensor<T> logits = forward<T>(model, batch.slice(b), Mode::inference, nullptr, nullptr, end);
    ce_total += cross_entropy(logits, one_hot, b, probs);
  }
  return ce_total / static_cast<double>(batch.dim(0)) + l2_penalty(model);
}

template class Model<float>;
template class Model<double>;

#define CXR_INSTANTIATE_MODEL(T)                                                              \
  template Tensor<T> forward(const Model<T>&, const Tensor<T>&, Mode, Rng*, Trace<T>*,        \
                             std::size_t);                                                    \
  template void backward(const Model<T>&, const Trace<T>&, Tensor<T>, std::size_t,            \
                         std::vector<Tensor<T>>*, Tensor<T>*);                                \
  template std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>&);                  \
  template double l2_penalty(const Model<T>&);                                                \
  template LossAndGrad<T> loss_and_grad(const Model<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        Mode, Rng*);                                          \
  template double evaluate_loss(const Model<T>&, const Tensor<T>&, const Tensor<T>&);

CXR_INSTANTIATE_MODEL(float)
CXR_INSTANTIATE_MODEL(double)

#undef CXR_INSTANTIATE_MODEL

}  // namespace cxr
