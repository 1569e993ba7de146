#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace probcontour {

/// Grayscale image, row-major doubles. Intensities are standardized to zero
/// mean and unit variance per image at load time; `spacing` is mm per pixel
/// (isotropic).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;
    double spacing = 1.0;

    double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

/// Zero-mean unit-variance standardization in place (no-op scale on constant
/// images to avoid dividing by zero).
void standardize(Image& img);

/// 8-bit binary PGM (P5). `pixels` must already be in [0,255].
void write_pgm(const std::vector<std::uint8_t>& pixels, int height, int width,
               const std::filesystem::path& path);
struct PgmImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace probcontour
