#include "probcontour/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "probcontour/errors.hpp"
#include "probcontour/json_io.hpp"
#include "probcontour/rng.hpp"

namespace probcontour {

namespace {

struct SubjectShape {
    double cx, cy, r0, wall;
    std::array<double, 4> amp;
    std::array<double, 4> phase;

    double radius(double theta) const {
        double r = r0;
        for (int k = 0; k < 4; ++k) r += amp[static_cast<std::size_t>(k)] * std::cos((k + 1) * theta + phase[static_cast<std::size_t>(k)]);
        return r;
    }
};

SubjectShape draw_subject(const SynthConfig& cfg, RngStream& rng) {
    SubjectShape s{};
    s.cx = cfg.width / 2.0 + rng.uniform(-1.0, 1.0) * cfg.center_jitter_frac * cfg.width;
    s.cy = cfg.height / 2.0 + rng.uniform(-1.0, 1.0) * cfg.center_jitter_frac * cfg.height;
    s.r0 = rng.uniform(cfg.radius_min, cfg.radius_max);
    s.wall = rng.uniform(cfg.wall_min, cfg.wall_max);
    for (int k = 0; k < 4; ++k) {
        s.amp[static_cast<std::size_t>(k)] = rng.uniform(0.0, cfg.harmonic_amp_max[static_cast<std::size_t>(k)]);
        s.phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    return s;
}

ContourVector subject_contour(const SubjectShape& s, int v) {
    ContourVector c(2 * static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) {
        const double theta = 2.0 * std::numbers::pi * i / v;
        const double r = s.radius(theta);
        c[2 * static_cast<std::size_t>(i)] = s.cx + r * std::cos(theta);
        c[2 * static_cast<std::size_t>(i) + 1] = s.cy + r * std::sin(theta);
    }
    return c;
}

bool contour_in_bounds(const ContourVector& c, int height, int width, double margin) {
    for (std::size_t i = 0; i + 1 < c.size(); i += 2) {
        if (c[i] < margin || c[i] > width - margin) return false;
        if (c[i + 1] < margin || c[i + 1] > height - margin) return false;
    }
    return true;
}

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

std::vector<std::uint8_t> render_ring(const SubjectShape& s, const SynthConfig& cfg,
                                      RngStream& noise_rng) {
    const double background = 0.2;
    std::vector<double> img(static_cast<std::size_t>(cfg.height) * cfg.width, background);
    for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) {
            const double px = c + 0.5 - s.cx;
            const double py = r + 0.5 - s.cy;
            const double rho = std::hypot(px, py);
            const double theta = std::atan2(py, px);
            const double outer = s.radius(theta);
            const double inner = outer - s.wall;
            // Soft 1px edges so the boundary is learnable sub-pixel.
            const double in_ring = smoothstep(inner - 0.5, inner + 0.5, rho) *
                                   (1.0 - smoothstep(outer - 0.5, outer + 0.5, rho));
            img[static_cast<std::size_t>(r) * cfg.width + c] = background + cfg.contrast * in_ring;
        }
    }
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double noisy = img[i] + cfg.noise_std * noise_rng.normal();
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(noisy, 0.0, 1.0) * 255.0));
    }
    return bytes;
}

Image standardized_image(const std::vector<std::uint8_t>& bytes, int height, int width,
                         double spacing) {
    Image img;
    img.height = height;
    img.width = width;
    img.spacing = spacing;
    img.pixels.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<double>(bytes[i]);
    standardize(img);
    return img;
}

std::string make_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%05d", i);
    return std::string(buf);
}

bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy,
                        double dx, double dy) {
    const auto orient = [](double ox, double oy, double px, double py, double qx, double qy) {
        const double val = (px - ox) * (qy - oy) - (py - oy) * (qx - ox);
        if (val > 1e-12) return 1;
        if (val < -1e-12) return -1;
        return 0;
    };
    const int o1 = orient(ax, ay, bx, by, cx, cy);
    const int o2 = orient(ax, ay, bx, by, dx, dy);
    const int o3 = orient(cx, cy, dx, dy, ax, ay);
    const int o4 = orient(cx, cy, dx, dy, bx, by);
    return o1 != o2 && o3 != o4;
}

}  // namespace

bool is_simple_polygon(const ContourVector& contour) {
    const int v = vertex_count_of(contour);
    if (v < 3) return false;
    const auto px = [&](int i) { return contour[2 * static_cast<std::size_t>(i % v)]; };
    const auto py = [&](int i) { return contour[2 * static_cast<std::size_t>(i % v) + 1]; };
    for (int i = 0; i < v; ++i) {
        for (int j = i + 1; j < v; ++j) {
            // Skip adjacent edges (shared endpoint).
            if (j == i || (j + 1) % v == i || (i + 1) % v == j) continue;
            if (segments_intersect(px(i), py(i), px(i + 1), py(i + 1), px(j), py(j), px(j + 1),
                                   py(j + 1))) {
                return false;
            }
        }
    }
    return true;
}

const DatasetItem& ShapeDataset::by_id(const std::string& id) const {
    const auto it = std::lower_bound(items.begin(), items.end(), id,
                                     [](const DatasetItem& a, const std::string& b) { return a.id < b; });
    if (it == items.end() || it->id != id) throw ConfigError("dataset: unknown item id '" + id + "'");
    return *it;
}

const std::vector<std::string>& ShapeDataset::split_ids(const std::string& split) const {
    if (split == "train") return splits.train;
    if (split == "val") return splits.val;
    if (split == "test") return splits.test;
    throw ConfigError("dataset: unknown split '" + split + "' (expected train|val|test)");
}

std::vector<const DatasetItem*> ShapeDataset::split_items(const std::string& split) const {
    std::vector<const DatasetItem*> out;
    for (const auto& id : split_ids(split)) out.push_back(&by_id(id));
    return out;
}

ShapeDataset generate(const SynthConfig& cfg) {
    if (cfg.count < 1 || cfg.vertex_count < 3) throw ConfigError("synth: count >= 1, vertex_count >= 3 required");
    if (cfg.radius_min <= 0.0 || cfg.radius_max < cfg.radius_min) throw ConfigError("synth: bad radius range");
    if (cfg.wall_min <= 0.0 || cfg.wall_max < cfg.wall_min) throw ConfigError("synth: bad wall range");
    if (cfg.split_train < 0 || cfg.split_val < 0 || cfg.split_train + cfg.split_val > 1.0) {
        throw ConfigError("synth: split fractions must be nonnegative and sum to <= 1");
    }

    const RngStream root(cfg.seed);
    ShapeDataset ds;
    ds.spacing = cfg.spacing_mm;
    ds.vertex_count = cfg.vertex_count;
    ds.items.reserve(static_cast<std::size_t>(cfg.count));

    constexpr int kMaxRetries = 64;
    for (int i = 0; i < cfg.count; ++i) {
        ContourVector contour;
        SubjectShape shape{};
        bool ok = false;
        for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
            RngStream rng = root.substream("subject", static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(attempt));
            shape = draw_subject(cfg, rng);
            contour = subject_contour(shape, cfg.vertex_count);
            if (contour_in_bounds(contour, cfg.height, cfg.width, 1.0) &&
                shape.r0 - shape.wall - cfg.harmonic_amp_max[0] - cfg.harmonic_amp_max[1] -
                        cfg.harmonic_amp_max[2] - cfg.harmonic_amp_max[3] > 1.0 &&
                is_simple_polygon(contour)) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("synth: subject " + std::to_string(i) +
                              " does not fit the image after " + std::to_string(kMaxRetries) +
                              " retries; shrink radii or jitter");
        }
        RngStream noise_rng = root.substream("noise", static_cast<std::uint64_t>(i));
        DatasetItem item;
        item.id = make_id(i);
        item.raw_pixels = render_ring(shape, cfg, noise_rng);
        item.image = standardized_image(item.raw_pixels, cfg.height, cfg.width, cfg.spacing_mm);
        item.contour = std::move(contour);
        ds.items.push_back(std::move(item));
    }

    // Splits by shuffled position: contiguous blocks of a seeded permutation.
    std::vector<int> order(static_cast<std::size_t>(cfg.count));
    for (int i = 0; i < cfg.count; ++i) order[static_cast<std::size_t>(i)] = i;
    RngStream shuffle_rng = root.substream("splits");
    for (int i = cfg.count - 1; i > 0; --i) {
        const auto j = static_cast<int>(shuffle_rng.bounded(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const int n_train = static_cast<int>(std::lround(cfg.split_train * cfg.count));
    const int n_val = static_cast<int>(std::lround(cfg.split_val * cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
        const std::string id = make_id(order[static_cast<std::size_t>(i)]);
        if (i < n_train) {
            ds.splits.train.push_back(id);
        } else if (i < n_train + n_val) {
            ds.splits.val.push_back(id);
        } else {
            ds.splits.test.push_back(id);
        }
    }
    std::sort(ds.splits.train.begin(), ds.splits.train.end());
    std::sort(ds.splits.val.begin(), ds.splits.val.end());
    std::sort(ds.splits.test.begin(), ds.splits.test.end());
    return ds;
}

void save_dataset(const ShapeDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["spacing"] = ds.spacing;
    manifest["vertex_count"] = ds.vertex_count;
    json ids = json::array();
    for (const auto& item : ds.items) ids.push_back(item.id);
    manifest["ids"] = std::move(ids);
    manifest["splits"] = {{"train", ds.splits.train}, {"val", ds.splits.val}, {"test", ds.splits.test}};
    if (!ds.items.empty()) {
        manifest["height"] = ds.items.front().image.height;
        manifest["width"] = ds.items.front().image.width;
    }
    write_text_file(dir / "manifest.json", dump_json(manifest));

    for (const auto& item : ds.items) {
        write_pgm(item.raw_pixels, item.image.height, item.image.width, dir / ("img_" + item.id + ".pgm"));
        std::string csv;
        for (int i = 0; i < vertex_count_of(item.contour); ++i) {
            csv += format_double_17(item.contour[2 * static_cast<std::size_t>(i)]);
            csv += ",";
            csv += format_double_17(item.contour[2 * static_cast<std::size_t>(i) + 1]);
            csv += "\n";
        }
        write_text_file(dir / ("contour_" + item.id + ".csv"), csv);
    }
}

namespace {

ContourVector parse_contour_csv(const std::filesystem::path& path, int expected_v) {
    const std::string text = read_text_file(path);
    ContourVector c;
    c.reserve(2 * static_cast<std::size_t>(expected_v));
    int line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        ++line_no;
        if (!line.empty()) {
            const std::size_t comma = line.find(',');
            if (comma == std::string::npos) {
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 'x,y'");
            }
            try {
                std::size_t used = 0;
                const double x = std::stod(line.substr(0, comma), &used);
                const double y = std::stod(line.substr(comma + 1), &used);
                c.push_back(x);
                c.push_back(y);
            } catch (const std::exception&) {
                throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed float");
            }
        }
        pos = eol + 1;
    }
    if (vertex_count_of(c) != expected_v) {
        throw IoError(path.string() + ": expected " + std::to_string(expected_v) +
                      " vertices, found " + std::to_string(vertex_count_of(c)));
    }
    return c;
}

}  // namespace

ShapeDataset load_dataset(const std::filesystem::path& dir) {
    const json manifest = parse_json_file(dir / "manifest.json");
    ShapeDataset ds;
    std::vector<std::string> ids;
    try {
        ds.spacing = manifest.at("spacing").get<double>();
        ds.vertex_count = manifest.at("vertex_count").get<int>();
        ids = manifest.at("ids").get<std::vector<std::string>>();
        const auto& sp = manifest.at("splits");
        ds.splits.train = sp.at("train").get<std::vector<std::string>>();
        ds.splits.val = sp.at("val").get<std::vector<std::string>>();
        ds.splits.test = sp.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError((dir / "manifest.json").string() + ": invalid manifest: " + e.what());
    }

    for (const auto& id : ids) {
        DatasetItem item;
        item.id = id;
        const PgmImage pgm = read_pgm(dir / ("img_" + id + ".pgm"));
        item.raw_pixels = pgm.pixels;
        item.image = [&] {
            Image img;
            img.height = pgm.height;
            img.width = pgm.width;
            img.spacing = ds.spacing;
            img.pixels.assign(pgm.pixels.begin(), pgm.pixels.end());
            standardize(img);
            return img;
        }();
        item.contour = parse_contour_csv(dir / ("contour_" + id + ".csv"), ds.vertex_count);
        ds.items.push_back(std::move(item));
    }
    std::sort(ds.items.begin(), ds.items.end(),
              [](const DatasetItem& a, const DatasetItem& b) { return a.id < b.id; });

    // Splits must reference known ids and stay disjoint.
    std::vector<std::string> all;
    for (const auto* split : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
        for (const auto& id : *split) {
            ds.by_id(id);
            all.push_back(id);
        }
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw IoError((dir / "manifest.json").string() + ": splits overlap");
    }
    return ds;
}

std::uint64_t split_contour_hash(const ShapeDataset& ds, const std::string& split) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& id : ds.split_ids(split)) {
        const auto& c = ds.by_id(id).contour;
        h = RngStream::mix(h ^ fnv1a64(c.data(), c.size() * sizeof(double)));
    }
    return h;
}

}  // namespace probcontour
