#include "cxr/explain.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "cxr/checkpoint.hpp"
#include "cxr/dataset.hpp"
#include "cxr/error.hpp"
#include "cxr/image.hpp"

namespace cxr {

namespace fs = std::filesystem;

Heatmap display_scaled(const Heatmap& map) {
  Heatmap out = map;
  const double lo = map.min(), hi = map.max();
  for (auto& v : out.values) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
  return out;
}

namespace {

std::string probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", p);
  return buf;
}

void write_png(const fs::path& path, const RgbImage& image, std::size_t upscale,
               const PngText& text) {
  try {
    save_png(path, upscale > 1 ? upscale_nearest(image, upscale) : image, text);
  } catch (const std::exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
}

}  // namespace

ExplainResult explain(const Ensemble& ensemble, const fs::path& image_path, const fs::path& out_dir,
                      const ExplainOptions& options) {
  ensemble.validate();
  if (options.upscale == 0) throw DataError("upscale factor must be at least 1");
  const Shape& input = ensemble.members.front().input_shape();

  GrayImage xray;
  try {
    xray = resize_bilinear(load_grayscale(image_path), input.at(0), input.at(1));
  } catch (const std::exception& e) {
    throw IoError("cannot read " + image_path.string() + ": " + e.what());
  }
  const Tensor<float> tensor = normalize_mean(xray);

  ExplainResult result;
  result.bundle = ensemble_heatmaps(ensemble, tensor, options.jobs);
  const Prediction& p = result.bundle.probabilities;

  try {
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    throw IoError("cannot create " + out_dir.string() + ": " + e.what());
  }

  const fs::path original = out_dir / "original.png";
  write_png(original, gray_to_rgb(xray), options.upscale,
            {{"Title", "Original X-ray: " + image_path.filename().string()}});
  result.images.push_back(original);

  for (const char* kind : {"mean", "std"}) {
    for (std::size_t c = 0; c < 2; ++c) {
      const std::string name = label_name(static_cast<Label>(c));
      const auto& cls = result.bundle.classes[c];
      const bool mean = std::string(kind) == "mean";
      const Heatmap shown = mean ? cls.mean : display_scaled(cls.stddev);
      const std::string title = "Neuron " + std::to_string(c) + " (" + name + ") " +
                                (mean ? "mean heatmap" : "std heatmap") +
                                ", p = " + probability(p.p[c]);
      const fs::path path = out_dir / (std::string(kind) + "_" + name + ".png");
      write_png(path, render_overlay(xray, shown, options.alpha, options.colormap), options.upscale,
                {{"Title", title}});
      result.images.push_back(path);
    }
  }

  nlohmann::ordered_json sidecar;
  sidecar["p_non_consolidation"] = p.p[0];
  sidecar["p_consolidation"] = p.p[1];
  result.sidecar = out_dir / "explanation.json";
  try {
    write_file_atomic(result.sidecar, sidecar.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw IoError("cannot write " + result.sidecar.string() + ": " + e.what());
  }
  return result;
}

}  // namespace cxr
