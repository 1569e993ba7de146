#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "probcontour/shape_model.hpp"

namespace probcontour {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c]; }
    void set(int r, int c, bool v) { bits[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0; }
    long count() const;
};

/// Flood the closed polygon (vertex V connects back to vertex 1) onto a pixel
/// grid: pixel (r,c) is set iff its center (c+0.5, r+0.5) is inside by the
/// even-odd rule. Scanline implementation; self-intersections are fine.
/// Fewer than 3 distinct vertices yields an empty mask and a stderr warning.
BinaryMask rasterize(const ContourVector& contour, int height, int width);

/// 2|a n b| / (|a|+|b|); 1.0 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// sqrt( mean over vertices of squared Euclidean vertex distance ), pixels.
double rmse(const ContourVector& pred, const ContourVector& ref);

/// Debug dump: binary PGM (P5), one byte per pixel, 0 or 255.
void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);

double polygon_area(const ContourVector& contour);       // shoelace, absolute
double polygon_perimeter(const ContourVector& contour);  // closed

}  // namespace probcontour
