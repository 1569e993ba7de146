#pragma once

#include <optional>
#include <string>
#include <vector>

#include "probcontour/image.hpp"
#include "probcontour/inference.hpp"

namespace probcontour {

/// Figure rendering: grayscale image raster, reference contour (red), mean
/// contour (cyan), optional sampled contours (blue), and per-vertex
/// confidence ellipses colored by major-axis direction (hue = angle / pi).
struct PlotOptions {
    std::vector<double> levels = {0.30, 0.95, 0.999};
    int vertex_stride = 2;  // plot every other vertex by default
    int num_samples = 0;
    std::uint64_t sample_seed = 0;
    double pixel_size = 8.0;  // SVG units per image pixel
};

/// Deterministic, byte-stable SVG 1.1 document.
std::string render_prediction_svg(const Image& image, const PredictiveDistribution& dist,
                                  const ContourVector* reference, const PlotOptions& opts);

}  // namespace probcontour
