// Reference implementations used only by tests. They are written
// independently of the library code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/layers.hpp"
#include "cxr/tensor.hpp"

namespace cxr::testing {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape, T(0));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(u(rng));
  return t;
}

// Direct cross-correlation: accumulate over (ky, kx, ci) in that order, skip
// taps that fall outside the input, add the bias last.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& in, const Tensor<T>& k, const Tensor<T>& bias, Padding padding) {
  const long H = static_cast<long>(in.dim(0)), W = static_cast<long>(in.dim(1));
  const long C = static_cast<long>(in.dim(2));
  const long KH = static_cast<long>(k.dim(0)), KW = static_cast<long>(k.dim(1));
  const long CO = static_cast<long>(k.dim(3));
  const long pt = padding == Padding::same ? (KH - 1) / 2 : 0;
  const long pl = padding == Padding::same ? (KW - 1) / 2 : 0;
  const long OH = padding == Padding::same ? H : H - KH + 1;
  const long OW = padding == Padding::same ? W : W - KW + 1;
  Tensor<T> out({static_cast<std::size_t>(OH), static_cast<std::size_t>(OW), static_cast<std::size_t>(CO)}, T(0));
  for (long oy = 0; oy < OH; ++oy) {
    for (long ox = 0; ox < OW; ++ox) {
      for (long co = 0; co < CO; ++co) {
        T acc = T(0);
        for (long ky = 0; ky < KH; ++ky) {
          for (long kx = 0; kx < KW; ++kx) {
            for (long ci = 0; ci < C; ++ci) {
              const long iy = oy + ky - pt, ix = ox + kx - pl;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += in.data()[(iy * W + ix) * C + ci] * k.data()[((ky * KW + kx) * C + ci) * CO + co];
            }
          }
        }
        out.data()[(oy * OW + ox) * CO + co] = acc + bias.data()[co];
      }
    }
  }
  return out;
}

// Probability that a random positive outscores a random negative, ties 1/2.
inline double mann_whitney_auc(std::span<const double> scores, std::span<const Label> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::consolidation) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != Label::non_consolidation) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Central differences of f with respect to every element of x.
inline Tensor<double> numeric_gradient(Tensor<double>& x, const std::function<double()>& f,
                                       double h = 1e-5) {
  Tensor<double> g(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a|| + ||b||, tiny); zero when both vanish.
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / denom;
}

// Weighted sum of outputs, the scalar used for layer gradient checks.
inline double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
  return s;
}

}  // namespace cxr::testing
