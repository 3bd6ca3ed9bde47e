#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment estimates, one pair per parameter tensor.
template <typename T>
struct AdamState {
  AdamState() = default;
  AdamState(const std::vector<Tensor<T>>& params, AdamConfig config);

  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected Adam update in place. Throws NumericError, leaving params
// and state untouched, if any gradient is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state);

}  // namespace cxr
