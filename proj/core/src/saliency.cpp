#include "cxr/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"
#include "cxr/parallel.hpp"

namespace cxr {

double Heatmap::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double Heatmap::min() const {
  return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
}

template <typename T>
Tensor<T> input_gradient(const Model<T>& model, const Tensor<T>& image, std::size_t class_index) {
  for (const auto& p : model.parameters()) {
    if (!p.all_finite()) throw NumericError("saliency: model has non-finite parameters");
  }
  if (image.shape() != model.input_shape()) {
    throw ShapeError("saliency: image " + shape_string(image.shape()) + " vs model input " +
                     shape_string(model.input_shape()));
  }
  const std::size_t end = model.logits_end();
  Trace<T> trace;
  const Tensor<T> logits = forward(model, image, Mode::inference, nullptr, &trace, end);
  if (logits.rank() != 1 || class_index >= logits.size()) {
    throw ShapeError("saliency: class index " + std::to_string(class_index) +
                     " outside output " + shape_string(logits.shape()));
  }
  Tensor<T> upstream(logits.shape(), T(0));
  upstream[class_index] = T(1);
  Tensor<T> grad;
  backward<T>(model, trace, std::move(upstream), end, nullptr, &grad);
  return grad;
}

template <typename T>
Tensor<T> raw_saliency(const Model<T>& model, const Tensor<T>& image, std::size_t class_index) {
  const Tensor<T> g = input_gradient(model, image, class_index);
  const std::size_t h = g.dim(0), w = g.dim(1), c = g.dim(2);
  Tensor<T> out({h, w}, T(0));
  for (std::size_t i = 0; i < h * w; ++i) {
    T m = T(0);
    for (std::size_t k = 0; k < c; ++k) m = std::max(m, std::abs(g.data()[i * c + k]));
    out.data()[i] = m;
  }
  return out;
}

template <typename T>
Heatmap normalize_heatmap(const Tensor<T>& raw, std::size_t class_index, std::string source) {
  if (raw.rank() != 2) throw ShapeError("heatmap must be [H, W], got " + shape_string(raw.shape()));
  Heatmap map;
  map.height = raw.dim(0);
  map.width = raw.dim(1);
  map.class_index = class_index;
  map.source = std::move(source);
  map.values.assign(raw.size(), 0.0);
  if (raw.size() == 0) return map;
  const auto [lo_it, hi_it] = std::minmax_element(raw.values().begin(), raw.values().end());
  const double lo = static_cast<double>(*lo_it), hi = static_cast<double>(*hi_it);
  if (!(hi > lo)) return map;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    map.values[i] = (static_cast<double>(raw.data()[i]) - lo) / (hi - lo);
  }
  return map;
}

Heatmap saliency(const Model<float>& model, const Tensor<float>& image, std::size_t class_index,
                 std::string source) {
  return normalize_heatmap(raw_saliency(model, image, class_index), class_index, std::move(source));
}

HeatmapStats aggregate_heatmaps(std::span<const Heatmap> maps) {
  if (maps.size() < 2) throw DataError("aggregate_heatmaps needs at least two maps");
  const Heatmap& first = maps[0];
  for (const auto& m : maps) {
    if (m.height != first.height || m.width != first.width || m.values.size() != first.values.size()) {
      throw ShapeError("aggregate_heatmaps: maps differ in size");
    }
  }
  const double n = static_cast<double>(maps.size());
  HeatmapStats out;
  for (Heatmap* h : {&out.mean, &out.stddev}) {
    h->height = first.height;
    h->width = first.width;
    h->class_index = first.class_index;
    h->values.assign(first.values.size(), 0.0);
  }
  out.mean.source = "mean";
  out.stddev.source = "std";
  for (std::size_t i = 0; i < first.values.size(); ++i) {
    // Welford: identical maps give exactly zero spread.
    double mean = 0.0, ss = 0.0, k = 0.0;
    for (const auto& m : maps) {
      k += 1.0;
      const double delta = m.values[i] - mean;
      mean += delta / k;
      ss += delta * (m.values[i] - mean);
    }
    out.mean.values[i] = mean;
    out.stddev.values[i] = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

HeatmapBundle ensemble_heatmaps(const Ensemble& ensemble, const Tensor<float>& image,
                                std::size_t jobs) {
  ensemble.validate();
  const std::size_t n = ensemble.members.size();
  std::vector<std::array<Heatmap, 2>> maps(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const std::string id = "member " + std::to_string(i + 1);
    try {
      for (std::size_t c = 0; c < 2; ++c) maps[i][c] = saliency(ensemble.members[i], image, c, id);
    } catch (const std::exception& e) {
      throw Error("saliency failed for " + id + ": " + e.what());
    }
  });
  HeatmapBundle bundle;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& cls = bundle.classes[c];
    for (std::size_t i = 0; i < n; ++i) cls.members.push_back(std::move(maps[i][c]));
    HeatmapStats stats = aggregate_heatmaps(cls.members);
    cls.mean = std::move(stats.mean);
    cls.stddev = std::move(stats.stddev);
  }
  const Tensor<float> batch = image.reshaped([&] {
    Shape s{1};
    s.insert(s.end(), image.shape().begin(), image.shape().end());
    return s;
  }());
  bundle.probabilities = ensemble_predict(ensemble, batch).at(0);
  return bundle;
}

template Tensor<float> input_gradient(const Model<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> input_gradient(const Model<double>&, const Tensor<double>&, std::size_t);
template Tensor<float> raw_saliency(const Model<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> raw_saliency(const Model<double>&, const Tensor<double>&, std::size_t);
template Heatmap normalize_heatmap(const Tensor<float>&, std::size_t, std::string);
template Heatmap normalize_heatmap(const Tensor<double>&, std::size_t, std::string);

}  // namespace cxr
