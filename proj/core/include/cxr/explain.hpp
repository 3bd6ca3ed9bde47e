#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "cxr/ensemble.hpp"
#include "cxr/overlay.hpp"
#include "cxr/saliency.hpp"

namespace cxr {

struct ExplainOptions {
  std::size_t upscale = 1;  // nearest-neighbour integer factor
  double alpha = 0.5;
  Colormap colormap = Colormap::jet();
  std::size_t jobs = 1;
};

struct ExplainResult {
  std::vector<std::filesystem::path> images;  // original, mean x2, std x2
  std::filesystem::path sidecar;              // explanation.json
  HeatmapBundle bundle;
};

// Std maps are min-max rescaled for display only; the bundle keeps raw values.
Heatmap display_scaled(const Heatmap& map);

// Writes original.png, mean_non_consolidation.png, mean_consolidation.png,
// std_non_consolidation.png, std_consolidation.png and explanation.json.
ExplainResult explain(const Ensemble& ensemble, const std::filesystem::path& image_path,
                      const std::filesystem::path& out_dir, const ExplainOptions& options = {});

}  // namespace cxr
