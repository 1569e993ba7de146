#include "probcontour/image.hpp"

#include <cmath>
#include <fstream>

#include "probcontour/errors.hpp"

namespace probcontour {

void standardize(Image& img) {
    const std::size_t n = img.pixels.size();
    if (n == 0) return;
    double mean = 0.0;
    for (const double p : img.pixels) mean += p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double p : img.pixels) var += (p - mean) * (p - mean);
    var /= static_cast<double>(n);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (double& p : img.pixels) p = (p - mean) * inv;
}

void write_pgm(const std::vector<std::uint8_t>& pixels, int height, int width,
               const std::filesystem::path& path) {
    if (pixels.size() != static_cast<std::size_t>(height) * width) {
        throw ShapeError("write_pgm: pixel count does not match dims");
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write PGM: " + path.string());
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw IoError("PGM write failed: " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open PGM: " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError(path.string() + ": expected P5 PGM, got magic '" + magic + "'");
    auto skip_ws_comments = [&f]() {
        for (;;) {
            const int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
                f.get();
            } else {
                return;
            }
        }
    };
    PgmImage img;
    int maxval = 0;
    skip_ws_comments();
    f >> img.width;
    skip_ws_comments();
    f >> img.height;
    skip_ws_comments();
    f >> maxval;
    if (!f || img.width <= 0 || img.height <= 0) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (maxval != 255) throw IoError(path.string() + ": only maxval 255 supported");
    f.get();  // single whitespace after maxval
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw IoError(path.string() + ": truncated PGM payload at byte " +
                      std::to_string(f.gcount()));
    }
    return img;
}

}  // namespace probcontour
