#include "probcontour/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "probcontour/errors.hpp"
#include "probcontour/json_io.hpp"

namespace probcontour {

PredictiveDistribution predictive_from_output(const EncoderOutput& out, const PcaShapeModel& model,
                                              double sigma2) {
    if (!(sigma2 > 0.0)) throw ConfigError("predict: sigma2 must be > 0");
    const int k = model.num_components;
    if (static_cast<int>(out.latent_mean.size()) != k ||
        static_cast<int>(out.latent_logvar.size()) != k) {
        throw ShapeError("predict: encoder output dim does not match model K=" + std::to_string(k));
    }
    PredictiveDistribution dist;
    dist.vertex_count = model.vertex_count;
    dist.latent_dim = k;
    dist.sigma2 = sigma2;
    dist.factor = model.factor_row_major();
    dist.latent_mean = out.latent_mean;
    dist.latent_cov.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        dist.latent_cov[static_cast<std::size_t>(i)] =
            std::exp(std::min(std::max(out.latent_logvar[static_cast<std::size_t>(i)], -20.0), 10.0));
    }
    dist.mean = decode(model, out.latent_mean, out.shift);
    return dist;
}

PredictiveDistribution predict(const Network& net, const Image& image, const PcaShapeModel& model,
                               double sigma2) {
    return predictive_from_output(net.forward(image), model, sigma2);
}

ContourVector sample_contour(const PredictiveDistribution& dist, RngStream& rng,
                             bool include_noise) {
    const int d = 2 * dist.vertex_count;
    const int k = dist.latent_dim;
    ContourVector y = dist.mean;
    // z - mu(x) = sqrt(Sigma(x)) * eps, then y += A (z - mu).
    std::vector<double> dz(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        dz[static_cast<std::size_t>(i)] = std::sqrt(dist.latent_cov[static_cast<std::size_t>(i)]) * rng.normal();
    }
    for (int r = 0; r < d; ++r) {
        const double* row = dist.factor.data() + static_cast<std::size_t>(r) * k;
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += row[i] * dz[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(r)] += acc;
    }
    if (include_noise) {
        const double s = std::sqrt(dist.sigma2);
        for (int r = 0; r < d; ++r) y[static_cast<std::size_t>(r)] += s * rng.normal();
    }
    return y;
}

VertexMarginal vertex_marginal(const PredictiveDistribution& dist, int vertex_index) {
    if (vertex_index < 0 || vertex_index >= dist.vertex_count) {
        throw ShapeError("vertex_marginal: index " + std::to_string(vertex_index) +
                         " out of range [0," + std::to_string(dist.vertex_count) + ")");
    }
    const int k = dist.latent_dim;
    const double* ax = dist.factor.data() + static_cast<std::size_t>(2 * vertex_index) * k;
    const double* ay = ax + k;
    VertexMarginal m;
    m.mean = {dist.mean[static_cast<std::size_t>(2 * vertex_index)],
              dist.mean[static_cast<std::size_t>(2 * vertex_index) + 1]};
    double cxx = dist.sigma2, cxy = 0.0, cyy = dist.sigma2;
    for (int i = 0; i < k; ++i) {
        const double s = dist.latent_cov[static_cast<std::size_t>(i)];
        cxx += ax[i] * s * ax[i];
        cxy += ax[i] * s * ay[i];
        cyy += ay[i] * s * ay[i];
    }
    m.cov = {cxx, cxy, cxy, cyy};
    return m;
}

VertexEllipse confidence_ellipse(const std::array<double, 2>& mean,
                                 const std::array<double, 4>& cov, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence_ellipse: level must be in (0,1)");
    const double a = cov[0], b = cov[1], b2 = cov[2], c = cov[3];
    if (std::abs(b - b2) > 1e-9 * std::max(1.0, std::abs(b))) {
        throw NumericError("confidence_ellipse: covariance not symmetric");
    }
    // Closed-form eigenpairs of a symmetric 2x2 matrix.
    const double tr2 = 0.5 * (a + c);
    const double det_shift = std::sqrt(std::max(0.25 * (a - c) * (a - c) + b * b, 0.0));
    double l1 = tr2 + det_shift;  // major
    double l2 = tr2 - det_shift;  // minor
    constexpr double kNegTol = -1e-12;
    if (l2 < kNegTol * std::max(1.0, l1)) {
        throw NumericError("confidence_ellipse: negative eigenvalue " + std::to_string(l2));
    }
    l1 = std::max(l1, 0.0);
    l2 = std::max(l2, 0.0);

    double angle;
    if (std::abs(b) > 1e-15) {
        angle = std::atan2(l1 - a, b);
    } else {
        angle = a >= c ? 0.0 : std::numbers::pi / 2.0;
    }
    angle = std::fmod(angle, std::numbers::pi);
    if (angle < 0.0) angle += std::numbers::pi;

    const double scale = -2.0 * std::log(1.0 - level);
    VertexEllipse e;
    e.center = mean;
    e.semi_axes = {std::sqrt(scale * l1), std::sqrt(scale * l2)};
    e.angle = angle;
    e.level = level;
    return e;
}

double coverage_check(const PredictiveDistribution& dist, const ContourVector& reference,
                      double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("coverage_check: level must be in (0,1)");
    if (static_cast<int>(reference.size()) != 2 * dist.vertex_count) {
        throw ShapeError("coverage_check: reference length " + std::to_string(reference.size()) +
                         " != 2V=" + std::to_string(2 * dist.vertex_count));
    }
    const double threshold = -2.0 * std::log(1.0 - level);
    int covered = 0;
    for (int i = 0; i < dist.vertex_count; ++i) {
        const VertexMarginal m = vertex_marginal(dist, i);
        const double det = m.cov[0] * m.cov[3] - m.cov[1] * m.cov[2];
        if (!(det > 0.0)) {
            throw NumericError("coverage_check: singular marginal at vertex " + std::to_string(i));
        }
        const double dx = reference[2 * static_cast<std::size_t>(i)] - m.mean[0];
        const double dy = reference[2 * static_cast<std::size_t>(i) + 1] - m.mean[1];
        const double maha2 = (m.cov[3] * dx * dx - 2.0 * m.cov[1] * dx * dy + m.cov[0] * dy * dy) / det;
        if (maha2 <= threshold) ++covered;
    }
    return static_cast<double>(covered) / dist.vertex_count;
}

std::vector<double> dense_covariance(const PredictiveDistribution& dist) {
    const int d = 2 * dist.vertex_count;
    const int k = dist.latent_dim;
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < d; ++r) {
        const double* ar = dist.factor.data() + static_cast<std::size_t>(r) * k;
        for (int c = 0; c < d; ++c) {
            const double* ac = dist.factor.data() + static_cast<std::size_t>(c) * k;
            double acc = r == c ? dist.sigma2 : 0.0;
            for (int i = 0; i < k; ++i) acc += ar[i] * dist.latent_cov[static_cast<std::size_t>(i)] * ac[i];
            cov[static_cast<std::size_t>(r) * d + c] = acc;
        }
    }
    return cov;
}

void save_prediction(const PredictiveDistribution& dist, const std::vector<double>& levels,
                     const std::filesystem::path& path) {
    json j;
    j["vertex_count"] = dist.vertex_count;
    j["latent_dim"] = dist.latent_dim;
    j["sigma2"] = dist.sigma2;
    j["mean"] = dist.mean;
    j["latent_mean"] = dist.latent_mean;
    j["latent_cov"] = dist.latent_cov;
    json rows = json::array();
    for (int r = 0; r < 2 * dist.vertex_count; ++r) {
        json row = json::array();
        for (int i = 0; i < dist.latent_dim; ++i) {
            row.push_back(dist.factor[static_cast<std::size_t>(r) * dist.latent_dim + i]);
        }
        rows.push_back(std::move(row));
    }
    j["factor"] = std::move(rows);
    json ellipses = json::array();
    for (int i = 0; i < dist.vertex_count; ++i) {
        const VertexMarginal m = vertex_marginal(dist, i);
        for (const double level : levels) {
            const VertexEllipse e = confidence_ellipse(m.mean, m.cov, level);
            ellipses.push_back({{"i", i},
                                {"level", e.level},
                                {"center", {e.center[0], e.center[1]}},
                                {"semi_axes", {e.semi_axes[0], e.semi_axes[1]}},
                                {"angle", e.angle}});
        }
    }
    j["ellipses"] = std::move(ellipses);
    write_text_file(path, dump_json(j));
}

PredictiveDistribution load_prediction(const std::filesystem::path& path) {
    const json j = parse_json_file(path);
    PredictiveDistribution dist;
    try {
        dist.vertex_count = j.at("vertex_count").get<int>();
        dist.latent_dim = j.at("latent_dim").get<int>();
        dist.sigma2 = j.at("sigma2").get<double>();
        dist.mean = j.at("mean").get<std::vector<double>>();
        dist.latent_mean = j.at("latent_mean").get<std::vector<double>>();
        dist.latent_cov = j.at("latent_cov").get<std::vector<double>>();
        const auto& rows = j.at("factor");
        dist.factor.reserve(static_cast<std::size_t>(2 * dist.vertex_count) * dist.latent_dim);
        for (const auto& row : rows) {
            for (const auto& v : row) dist.factor.push_back(v.get<double>());
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": invalid prediction document: " + e.what());
    }
    if (static_cast<int>(dist.mean.size()) != 2 * dist.vertex_count ||
        static_cast<int>(dist.factor.size()) != 2 * dist.vertex_count * dist.latent_dim) {
        throw IoError(path.string() + ": prediction field lengths inconsistent");
    }
    return dist;
}

}  // namespace probcontour
