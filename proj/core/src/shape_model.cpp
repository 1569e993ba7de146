#include "probcontour/shape_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "probcontour/errors.hpp"
#include "probcontour/json_io.hpp"

namespace probcontour {

namespace {

constexpr double kEigenvalueClampRel = 1e-12;

// Deterministic orthonormal completion for eigenpairs that the Gram path
// cannot recover (zero eigenvalues): Gram-Schmidt of standard basis vectors
// against the columns collected so far.
void fill_orthonormal(Eigen::MatrixXd& u, int from_col) {
    const auto dim = u.rows();
    int col = from_col;
    for (Eigen::Index e = 0; e < dim && col < u.cols(); ++e) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
        v[e] = 1.0;
        for (int j = 0; j < col; ++j) v -= u.col(j).dot(v) * u.col(j);
        const double n = v.norm();
        if (n > 1e-8) {
            u.col(col) = v / n;
            ++col;
        }
    }
    if (col < u.cols()) throw NumericError("fit_pca: failed to complete orthonormal basis");
}

}  // namespace

std::vector<double> PcaShapeModel::factor_row_major() const {
    const int d = 2 * vertex_count;
    std::vector<double> a(static_cast<std::size_t>(d) * num_components);
    for (int k = 0; k < num_components; ++k) {
        const double s = std::sqrt(eigenvalues[static_cast<std::size_t>(k)]);
        for (int r = 0; r < d; ++r) {
            a[static_cast<std::size_t>(r) * num_components + k] = component(r, k) * s;
        }
    }
    return a;
}

PcaShapeModel fit_pca(const std::vector<ContourVector>& contours, int num_components) {
    const int n = static_cast<int>(contours.size());
    if (n < 2) throw ConfigError("fit_pca: need at least 2 contours, got " + std::to_string(n));
    if (num_components < 1) throw ConfigError("fit_pca: num_components must be >= 1");
    const std::size_t dim = contours[0].size();
    if (dim == 0 || dim % 2 != 0) {
        throw ShapeError("fit_pca: contour length must be even and nonzero");
    }
    for (const auto& c : contours) {
        if (c.size() != dim) {
            throw ShapeError("fit_pca: contours have mixed lengths (" + std::to_string(c.size()) +
                             " vs " + std::to_string(dim) + ")");
        }
    }
    const int d = static_cast<int>(dim);
    const int achievable = std::min(d, n - 1);
    if (num_components > achievable) {
        throw ConfigError("fit_pca: requested " + std::to_string(num_components) +
                          " components but achievable rank is " + std::to_string(achievable));
    }

    Eigen::MatrixXd x(n, d);  // centered rows
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) mean[j] += contours[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    mean /= n;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            x(i, j) = contours[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - mean[j];
        }
    }

    const int k = num_components;
    Eigen::VectorXd eigvals(k);
    Eigen::MatrixXd u(d, k);

    if (d <= n) {
        Eigen::MatrixXd cov = (x.transpose() * x) / (n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success) throw NumericError("fit_pca: eigendecomposition failed");
        // Eigen sorts ascending; take the top-k in descending order.
        for (int j = 0; j < k; ++j) {
            eigvals[j] = es.eigenvalues()[d - 1 - j];
            u.col(j) = es.eigenvectors().col(d - 1 - j);
        }
    } else {
        Eigen::MatrixXd gram = (x * x.transpose()) / (n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        if (es.info() != Eigen::Success) throw NumericError("fit_pca: eigendecomposition failed");
        const double lmax = std::max(es.eigenvalues()[n - 1], 0.0);
        int filled = 0;
        for (int j = 0; j < k; ++j) {
            const double lam = es.eigenvalues()[n - 1 - j];
            if (lam > kEigenvalueClampRel * lmax && lam > 0.0) {
                eigvals[j] = lam;
                u.col(j) = x.transpose() * es.eigenvectors().col(n - 1 - j) /
                           std::sqrt(lam * (n - 1));
                filled = j + 1;
            } else {
                eigvals[j] = 0.0;
            }
        }
        if (filled < k) fill_orthonormal(u, filled);
    }

    const double lmax = std::max(eigvals[0], 0.0);
    for (int j = 0; j < k; ++j) {
        if (eigvals[j] <= kEigenvalueClampRel * lmax) eigvals[j] = 0.0;
    }

    PcaShapeModel model;
    model.vertex_count = d / 2;
    model.num_components = k;
    model.mean.assign(mean.data(), mean.data() + d);
    model.eigenvalues.assign(eigvals.data(), eigvals.data() + k);
    model.components.resize(static_cast<std::size_t>(d) * k);
    for (int j = 0; j < k; ++j) {
        for (int r = 0; r < d; ++r) {
            model.components[static_cast<std::size_t>(j) * d + r] = u(r, j);
        }
    }
    return model;
}

ContourVector decode(const PcaShapeModel& model, const std::vector<double>& z,
                     const std::array<double, 2>& shift) {
    const int d = 2 * model.vertex_count;
    if (static_cast<int>(z.size()) != model.num_components) {
        throw ShapeError("decode: latent dimension " + std::to_string(z.size()) +
                         " does not match model K=" + std::to_string(model.num_components));
    }
    ContourVector y(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) {
        double acc = model.mean[static_cast<std::size_t>(r)] + shift[static_cast<std::size_t>(r % 2)];
        y[static_cast<std::size_t>(r)] = acc;
    }
    for (int kcol = 0; kcol < model.num_components; ++kcol) {
        const double w = std::sqrt(model.eigenvalues[static_cast<std::size_t>(kcol)]) *
                         z[static_cast<std::size_t>(kcol)];
        if (w == 0.0) continue;
        const double* col = model.components.data() + static_cast<std::size_t>(kcol) * d;
        for (int r = 0; r < d; ++r) y[static_cast<std::size_t>(r)] += w * col[r];
    }
    return y;
}

std::vector<double> project(const PcaShapeModel& model, const ContourVector& y,
                            const std::array<double, 2>& shift) {
    const int d = 2 * model.vertex_count;
    if (static_cast<int>(y.size()) != d) {
        throw ShapeError("project: contour length " + std::to_string(y.size()) +
                         " does not match model 2V=" + std::to_string(d));
    }
    std::vector<double> z(static_cast<std::size_t>(model.num_components));
    for (int kcol = 0; kcol < model.num_components; ++kcol) {
        const double lam = model.eigenvalues[static_cast<std::size_t>(kcol)];
        if (lam <= 0.0) {
            throw NumericError("project: eigenvalue " + std::to_string(kcol) +
                               " is zero; whitened projection undefined");
        }
        const double* col = model.components.data() + static_cast<std::size_t>(kcol) * d;
        double acc = 0.0;
        for (int r = 0; r < d; ++r) {
            acc += col[r] * (y[static_cast<std::size_t>(r)] - model.mean[static_cast<std::size_t>(r)] -
                             shift[static_cast<std::size_t>(r % 2)]);
        }
        z[static_cast<std::size_t>(kcol)] = acc / std::sqrt(lam);
    }
    return z;
}

void save_shape_model(const PcaShapeModel& model, const std::filesystem::path& path) {
    const int d = 2 * model.vertex_count;
    json j;
    j["vertex_count"] = model.vertex_count;
    j["num_components"] = model.num_components;
    j["covariance_divisor"] = "n-1";
    j["mean"] = model.mean;
    j["eigenvalues"] = model.eigenvalues;
    json cols = json::array();
    for (int k = 0; k < model.num_components; ++k) {
        json col = json::array();
        for (int r = 0; r < d; ++r) col.push_back(model.component(r, k));
        cols.push_back(std::move(col));
    }
    j["components"] = std::move(cols);
    write_text_file(path, dump_json(j));
}

PcaShapeModel load_shape_model(const std::filesystem::path& path) {
    const json j = parse_json_file(path);
    PcaShapeModel m;
    try {
        m.vertex_count = j.at("vertex_count").get<int>();
        m.num_components = j.at("num_components").get<int>();
        m.mean = j.at("mean").get<std::vector<double>>();
        m.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
        const auto& cols = j.at("components");
        const int d = 2 * m.vertex_count;
        if (static_cast<int>(cols.size()) != m.num_components) {
            throw IoError(path.string() + ": components column count mismatch");
        }
        m.components.resize(static_cast<std::size_t>(d) * m.num_components);
        for (int k = 0; k < m.num_components; ++k) {
            const auto col = cols[static_cast<std::size_t>(k)].get<std::vector<double>>();
            if (static_cast<int>(col.size()) != d) {
                throw IoError(path.string() + ": component column " + std::to_string(k) +
                              " has wrong length");
            }
            std::copy(col.begin(), col.end(),
                      m.components.begin() + static_cast<std::size_t>(k) * d);
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": invalid shape model document: " + e.what());
    }
    if (static_cast<int>(m.mean.size()) != 2 * m.vertex_count ||
        static_cast<int>(m.eigenvalues.size()) != m.num_components) {
        throw IoError(path.string() + ": shape model field lengths inconsistent");
    }
    return m;
}

}  // namespace probcontour
