#include "cxr/adam.hpp"

#include <cmath>

namespace cxr {

template <typename T>
AdamState<T>::AdamState(const std::vector<Tensor<T>>& params, AdamConfig cfg) : config(cfg) {
  for (const auto& p : params) {
    first_moment.emplace_back(p.shape());
    second_moment.emplace_back(p.shape());
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].require_same_shape(grads[i], "adam_step gradient");
    params[i].require_same_shape(state.first_moment[i], "adam_step moment");
    if (!grads[i].all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter tensor " +
                         std::to_string(i));
    }
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T one_b1 = static_cast<T>(1.0 - c.beta1), one_b2 = static_cast<T>(1.0 - c.beta2);
  const T step_size = static_cast<T>(c.learning_rate / correct1);
  const T inv_sqrt_correct2 = static_cast<T>(1.0 / std::sqrt(correct2));
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].data();
    const T* g = grads[i].data();
    T* m = state.first_moment[i].data();
    T* v = state.second_moment[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = b1 * m[j] + one_b1 * g[j];
      v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_correct2 + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>>, std::span<const Tensor<float>>,
                        AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, std::span<const Tensor<double>>,
                        AdamState<double>&);

}  // namespace cxr
