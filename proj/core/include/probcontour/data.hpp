#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "probcontour/image.hpp"
#include "probcontour/shape_model.hpp"

namespace probcontour {

/// Synthetic cardiac-like ring generator. Each subject is a star-convex
/// closed contour r(theta) = r0 + sum_k a_k cos(k theta + phi_k), k <= 4,
/// sampled at V equally spaced angles anchored at theta = 0 so vertex indices
/// correspond across subjects. The image shows a bright ring whose outer
/// boundary is the contour, on a darker background, with the whole subject
/// shifted by a random per-subject center offset.
struct SynthConfig {
    int count = 600;
    int height = 60;
    int width = 60;
    int vertex_count = 50;
    double radius_min = 12.0;
    double radius_max = 19.0;
    double wall_min = 3.0;
    double wall_max = 6.0;
    std::array<double, 4> harmonic_amp_max = {2.0, 1.2, 0.7, 0.4};
    double center_jitter_frac = 0.15;  // of image size, per axis
    double contrast = 0.6;             // ring brightness above background, in [0,1]
    double noise_std = 0.04;           // of full intensity range, pre-quantization
    double spacing_mm = 1.8;
    double split_train = 2.0 / 3.0;
    double split_val = 1.0 / 6.0;      // remainder goes to test
    std::uint64_t seed = 0;
};

struct DatasetItem {
    std::string id;
    Image image;            // standardized intensities
    std::vector<std::uint8_t> raw_pixels;  // original 8-bit payload, for display/round-trips
    ContourVector contour;  // pixels, interleaved
};

struct SplitIds {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

struct ShapeDataset {
    std::vector<DatasetItem> items;  // sorted by id
    double spacing = 1.0;
    int vertex_count = 0;
    SplitIds splits;

    const DatasetItem& by_id(const std::string& id) const;
    std::vector<const DatasetItem*> split_items(const std::string& split) const;
    const std::vector<std::string>& split_ids(const std::string& split) const;
};

ShapeDataset generate(const SynthConfig& cfg);

/// Directory layout: manifest.json (spacing, vertex_count, dims, ids, splits),
/// img_<id>.pgm (P5 8-bit) and contour_<id>.csv (V lines "x,y", 17 significant
/// digits). Round-trips bit-exactly.
void save_dataset(const ShapeDataset& ds, const std::filesystem::path& dir);
ShapeDataset load_dataset(const std::filesystem::path& dir);

/// Content hash over the split's contours (id order), for leakage checks.
std::uint64_t split_contour_hash(const ShapeDataset& ds, const std::string& split);

/// True if no two non-adjacent edges of the closed polygon intersect.
bool is_simple_polygon(const ContourVector& contour);

}  // namespace probcontour
