#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "probcontour/encoder.hpp"
#include "probcontour/rng.hpp"
#include "probcontour/shape_model.hpp"

namespace probcontour {

/// Gaussian over the 2V-dim vertex vector in factored form: covariance
/// sigma2 * I + A diag(latent_cov) A^T with A = U S^{1/2}. The dense (2V)^2
/// matrix is only materialized on request.
struct PredictiveDistribution {
    std::vector<double> mean;        // 2V
    std::vector<double> factor;      // 2V x K, row-major (A)
    std::vector<double> latent_cov;  // K  (diagonal of Sigma(x))
    std::vector<double> latent_mean; // K  (mu(x); needed to sample consistently)
    double sigma2 = 0.0;
    int vertex_count = 0;
    int latent_dim = 0;
};

struct VertexEllipse {
    std::array<double, 2> center = {0.0, 0.0};
    std::array<double, 2> semi_axes = {0.0, 0.0};  // sorted descending
    double angle = 0.0;                            // major axis, in [0, pi)
    double level = 0.0;                            // confidence mass in (0,1)
};

struct VertexMarginal {
    std::array<double, 2> mean = {0.0, 0.0};
    std::array<double, 4> cov = {0.0, 0.0, 0.0, 0.0};  // row-major 2x2
};

/// Mean U S^{1/2} mu(x) + mean_shape + shift; covariance kept factored.
PredictiveDistribution predict(const Network& net, const Image& image, const PcaShapeModel& model,
                               double sigma2);

/// Builds the distribution directly from encoder outputs (used by tests and
/// by the prior-predictive calibration path).
PredictiveDistribution predictive_from_output(const EncoderOutput& out, const PcaShapeModel& model,
                                              double sigma2);

/// Draw one contour: mean + A (z - mu(x)) with z ~ N(mu(x), Sigma(x));
/// optionally adds the iid N(0, sigma2) pixel-noise term per coordinate.
ContourVector sample_contour(const PredictiveDistribution& dist, RngStream& rng,
                             bool include_noise = false);

VertexMarginal vertex_marginal(const PredictiveDistribution& dist, int vertex_index);

/// Centered region containing probability mass `level` of the 2-D Gaussian:
/// chi-square(2) quantile scale = -2 ln(1-level); axes from the eigenpairs.
VertexEllipse confidence_ellipse(const std::array<double, 2>& mean,
                                 const std::array<double, 4>& cov, double level);

/// Fraction of vertices whose reference position falls inside the level-set
/// ellipse of its marginal.
double coverage_check(const PredictiveDistribution& dist, const ContourVector& reference,
                      double level);

/// Debug-only densification of the full covariance (2V x 2V, row-major).
std::vector<double> dense_covariance(const PredictiveDistribution& dist);

/// Export schema: {mean, sigma2, latent_cov, factor:[[row]...], ellipses:[...]}.
void save_prediction(const PredictiveDistribution& dist, const std::vector<double>& levels,
                     const std::filesystem::path& path);
PredictiveDistribution load_prediction(const std::filesystem::path& path);

}  // namespace probcontour
