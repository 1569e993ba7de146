#include "probcontour/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "probcontour/errors.hpp"

namespace probcontour {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
}

void append_polyline(std::string& svg, const ContourVector& contour, double px,
                     const std::string& stroke, const std::string& extra) {
    svg += "<polygon fill=\"none\" stroke=\"" + stroke + "\" " + extra + " points=\"";
    const int v = vertex_count_of(contour);
    for (int i = 0; i < v; ++i) {
        if (i) svg += ' ';
        svg += fmt(contour[2 * static_cast<std::size_t>(i)] * px) + "," +
               fmt(contour[2 * static_cast<std::size_t>(i) + 1] * px);
    }
    svg += "\"/>\n";
}

}  // namespace

std::string render_prediction_svg(const Image& image, const PredictiveDistribution& dist,
                                  const ContourVector* reference, const PlotOptions& opts) {
    if (opts.vertex_stride < 1) throw ConfigError("plot: vertex_stride must be >= 1");
    for (const double level : opts.levels) {
        if (!(level > 0.0 && level < 1.0)) throw ConfigError("plot: levels must be in (0,1)");
    }
    const double px = opts.pixel_size;
    const double w = image.width * px;
    const double h = image.height * px;

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt(w) +
           "\" height=\"" + fmt(h) + "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";

    // Image raster: run-length merged rects per row, normalized to [0,255].
    double lo = image.pixels.empty() ? 0.0 : image.pixels[0];
    double hi = lo;
    for (const double p : image.pixels) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    const double inv = hi > lo ? 255.0 / (hi - lo) : 0.0;
    svg += "<g shape-rendering=\"crispEdges\">\n";
    for (int r = 0; r < image.height; ++r) {
        int c = 0;
        while (c < image.width) {
            const int gray = static_cast<int>(std::lround((image.at(r, c) - lo) * inv));
            int c2 = c + 1;
            while (c2 < image.width &&
                   static_cast<int>(std::lround((image.at(r, c2) - lo) * inv)) == gray) {
                ++c2;
            }
            char color[16];
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", gray, gray, gray);
            svg += "<rect x=\"" + fmt(c * px) + "\" y=\"" + fmt(r * px) + "\" width=\"" +
                   fmt((c2 - c) * px) + "\" height=\"" + fmt(px) + "\" fill=\"" + color + "\"/>\n";
            c = c2;
        }
    }
    svg += "</g>\n";

    // Sampled delineations (blue), drawn without the pixel-noise term.
    if (opts.num_samples > 0) {
        RngStream rng(opts.sample_seed);
        for (int s = 0; s < opts.num_samples; ++s) {
            const ContourVector sample = sample_contour(dist, rng, false);
            append_polyline(svg, sample, px, "#4a6cd4", "stroke-width=\"1\" opacity=\"0.6\"");
        }
    }

    if (reference != nullptr) {
        append_polyline(svg, *reference, px, "#e03030", "stroke-width=\"2\"");
    }
    append_polyline(svg, dist.mean, px, "#20c8c8", "stroke-width=\"2\"");

    // Per-vertex confidence ellipses, hue encodes major-axis direction.
    for (int i = 0; i < dist.vertex_count; i += opts.vertex_stride) {
        const VertexMarginal m = vertex_marginal(dist, i);
        for (const double level : opts.levels) {
            const VertexEllipse e = confidence_ellipse(m.mean, m.cov, level);
            const double hue_deg = e.angle / std::numbers::pi * 360.0;
            char color[32];
            std::snprintf(color, sizeof(color), "hsl(%.1f,90%%,55%%)", hue_deg);
            svg += "<ellipse cx=\"" + fmt(e.center[0] * px) + "\" cy=\"" + fmt(e.center[1] * px) +
                   "\" rx=\"" + fmt(e.semi_axes[0] * px) + "\" ry=\"" + fmt(e.semi_axes[1] * px) +
                   "\" transform=\"rotate(" + fmt(e.angle * 180.0 / std::numbers::pi) + " " +
                   fmt(e.center[0] * px) + " " + fmt(e.center[1] * px) +
                   ")\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1\"/>\n";
        }
    }

    svg += "</svg>\n";
    return svg;
}

}  // namespace probcontour
