#include "probcontour/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "probcontour/errors.hpp"

namespace probcontour {

long BinaryMask::count() const {
    long n = 0;
    for (const auto b : bits) n += b;
    return n;
}

BinaryMask rasterize(const ContourVector& contour, int height, int width) {
    if (height < 0 || width < 0) throw ShapeError("rasterize: negative grid dims");
    BinaryMask mask(height, width);
    const int v = vertex_count_of(contour);

    std::set<std::pair<double, double>> distinct;
    for (int i = 0; i < v; ++i) {
        distinct.insert({contour[2 * static_cast<std::size_t>(i)], contour[2 * static_cast<std::size_t>(i) + 1]});
    }
    if (distinct.size() < 3) {
        std::fprintf(stderr, "rasterize: degenerate polygon (%zu distinct vertices), empty mask\n",
                     distinct.size());
        return mask;
    }

    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(v));
    for (int r = 0; r < height; ++r) {
        const double cy = r + 0.5;
        xs.clear();
        for (int i = 0; i < v; ++i) {
            const double x1 = contour[2 * static_cast<std::size_t>(i)];
            const double y1 = contour[2 * static_cast<std::size_t>(i) + 1];
            const std::size_t jn = 2 * (static_cast<std::size_t>(i) + 1) % (2 * static_cast<std::size_t>(v));
            const double x2 = contour[jn];
            const double y2 = contour[jn + 1];
            // Half-open in y so a scanline through a vertex counts once.
            if ((y1 <= cy) == (y2 <= cy)) continue;
            xs.push_back(x1 + (cy - y1) * (x2 - x1) / (y2 - y1));
        }
        if (xs.empty()) continue;
        std::sort(xs.begin(), xs.end());
        // Even-odd: pixel center is inside iff an odd number of crossings lie
        // strictly to its left.
        std::size_t k = 0;
        for (int c = 0; c < width; ++c) {
            const double cx = c + 0.5;
            while (k < xs.size() && xs[k] <= cx) ++k;
            if (k % 2 == 1) mask.set(r, c, true);
        }
    }
    return mask;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("dice: mask dims differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
    }
    long inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        na += a.bits[i];
        nb += b.bits[i];
        inter += a.bits[i] & b.bits[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double rmse(const ContourVector& pred, const ContourVector& ref) {
    if (pred.size() != ref.size()) {
        throw ShapeError("rmse: contour lengths differ (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(ref.size()) + ")");
    }
    const int v = vertex_count_of(pred);
    if (v == 0) throw ShapeError("rmse: empty contours");
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
        const double dx = pred[2 * static_cast<std::size_t>(i)] - ref[2 * static_cast<std::size_t>(i)];
        const double dy = pred[2 * static_cast<std::size_t>(i) + 1] - ref[2 * static_cast<std::size_t>(i) + 1];
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / v);
}

void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write mask: " + path.string());
    f << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    for (const auto b : mask.bits) f.put(b ? static_cast<char>(255) : static_cast<char>(0));
    if (!f) throw IoError("mask write failed: " + path.string());
}

double polygon_area(const ContourVector& contour) {
    const int v = vertex_count_of(contour);
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
        const std::size_t a = 2 * static_cast<std::size_t>(i);
        const std::size_t b = 2 * ((static_cast<std::size_t>(i) + 1) % static_cast<std::size_t>(v));
        acc += contour[a] * contour[b + 1] - contour[b] * contour[a + 1];
    }
    return std::abs(acc) / 2.0;
}

double polygon_perimeter(const ContourVector& contour) {
    const int v = vertex_count_of(contour);
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
        const std::size_t a = 2 * static_cast<std::size_t>(i);
        const std::size_t b = 2 * ((static_cast<std::size_t>(i) + 1) % static_cast<std::size_t>(v));
        const double dx = contour[b] - contour[a];
        const double dy = contour[b + 1] - contour[a + 1];
        acc += std::hypot(dx, dy);
    }
    return acc;
}

}  // namespace probcontour
