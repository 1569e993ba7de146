#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace probcontour {

/// Interleaved 2V-dim vertex vector (x1,y1,...,xV,yV) in pixels.
using ContourVector = std::vector<double>;

inline int vertex_count_of(const ContourVector& c) { return static_cast<int>(c.size() / 2); }

/// Linear point-distribution shape prior: mean contour plus orthonormal modes
/// scaled by the square roots of their eigenvalues. Immutable after fit.
struct PcaShapeModel {
    int vertex_count = 0;    // V
    int num_components = 0;  // K
    std::vector<double> mean;         // 2V
    std::vector<double> eigenvalues;  // K, descending, >= 0
    std::vector<double> components;   // 2V x K, column-major (columns of U)

    double component(int row, int col) const {
        return components[static_cast<std::size_t>(col) * (2 * vertex_count) + row];
    }

    /// A = U * S^{1/2}, row-major (2V x K). The decoder/predictive factor.
    std::vector<double> factor_row_major() const;
};

/// Fits the shape prior from training contours: mean plus the top-K
/// eigenpairs of the sample covariance (divisor N-1). When 2V > N the N x N
/// Gram matrix is decomposed instead, which has the identical nonzero
/// spectrum. Eigenvalues below 1e-12 * largest are clamped to zero.
PcaShapeModel fit_pca(const std::vector<ContourVector>& contours, int num_components);

/// y = U S^{1/2} z + mean + (sx,sy) tiled across vertices.
ContourVector decode(const PcaShapeModel& model, const std::vector<double>& z,
                     const std::array<double, 2>& shift);

/// Whitened projection z = S^{-1/2} U^T (y - mean - shift). Errors if any of
/// the first K eigenvalues is zero.
std::vector<double> project(const PcaShapeModel& model, const ContourVector& y,
                            const std::array<double, 2>& shift = {0.0, 0.0});

void save_shape_model(const PcaShapeModel& model, const std::filesystem::path& path);
PcaShapeModel load_shape_model(const std::filesystem::path& path);

}  // namespace probcontour
