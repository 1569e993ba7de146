#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracles {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

// -- Jacobi ------------------------------------------------------------------------

EigenSym jacobi_eigen_sym(std::vector<double> a, int n) {
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

    const auto at = [&](std::vector<double>& m, int r, int c) -> double& {
        return m[static_cast<std::size_t>(r) * n + c];
    };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        }
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = at(a, i, p), aiq = at(a, i, q);
                    at(a, i, p) = c * aip - s * aiq;
                    at(a, i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = at(a, p, i), aqi = at(a, q, i);
                    at(a, p, i) = c * api - s * aqi;
                    at(a, q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = at(v, i, p), viq = at(v, i, q);
                    at(v, i, p) = c * vip - s * viq;
                    at(v, i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return a[static_cast<std::size_t>(x) * n + x] > a[static_cast<std::size_t>(y) * n + y];
    });

    EigenSym out;
    out.values.resize(static_cast<std::size_t>(n));
    out.vectors.resize(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        const int src = order[static_cast<std::size_t>(j)];
        out.values[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(src) * n + src];
        for (int i = 0; i < n; ++i) {
            out.vectors[static_cast<std::size_t>(i) * n + j] = v[static_cast<std::size_t>(i) * n + src];
        }
    }
    return out;
}

// -- dense Gaussian ------------------------------------------------------------------

void DenseGaussian::check_psd() const {
    const int n = static_cast<int>(mean.size());
    const EigenSym es = jacobi_eigen_sym(cov, n);
    const double scale = std::max(1.0, std::abs(es.values.front()));
    if (es.values.back() < -1e-12 * scale) {
        throw std::runtime_error("DenseGaussian: covariance has eigenvalue " +
                                 std::to_string(es.values.back()));
    }
}

double DenseGaussian::log_density(const std::vector<double>& y) const {
    const int n = static_cast<int>(mean.size());
    if (static_cast<int>(y.size()) != n) throw std::runtime_error("log_density: dim mismatch");
    check_psd();

    // Cholesky cov = L L^T.
    std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = cov[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k) {
                s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
            }
            if (i == j) {
                if (s <= 0.0) throw std::runtime_error("log_density: covariance not PD");
                l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
            }
        }
    }
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(l[static_cast<std::size_t>(i) * n + i]);

    // Solve L w = y - mean.
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = y[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= l[static_cast<std::size_t>(i) * n + k] * w[static_cast<std::size_t>(k)];
        w[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i) * n + i];
    }
    double quad = 0.0;
    for (const double wi : w) quad += wi * wi;
    return -0.5 * (n * kLog2Pi + logdet + quad);
}

DenseGaussian marginal_gaussian(const EncoderOutput& out, const PcaShapeModel& model,
                                double sigma2) {
    const int d = 2 * model.vertex_count;
    const int k = model.num_components;
    // A = U sqrt(S), built directly from the model fields.
    std::vector<double> a(static_cast<std::size_t>(d) * k);
    for (int j = 0; j < k; ++j) {
        const double s = std::sqrt(model.eigenvalues[static_cast<std::size_t>(j)]);
        for (int r = 0; r < d; ++r) {
            a[static_cast<std::size_t>(r) * k + j] = model.component(r, j) * s;
        }
    }
    DenseGaussian g;
    g.mean.resize(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) {
        double acc = model.mean[static_cast<std::size_t>(r)] + out.shift[static_cast<std::size_t>(r % 2)];
        for (int j = 0; j < k; ++j) {
            acc += a[static_cast<std::size_t>(r) * k + j] * out.latent_mean[static_cast<std::size_t>(j)];
        }
        g.mean[static_cast<std::size_t>(r)] = acc;
    }
    g.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            double acc = r == c ? sigma2 : 0.0;
            for (int j = 0; j < k; ++j) {
                const double var_j = std::exp(out.latent_logvar[static_cast<std::size_t>(j)]);
                acc += a[static_cast<std::size_t>(r) * k + j] * var_j * a[static_cast<std::size_t>(c) * k + j];
            }
            g.cov[static_cast<std::size_t>(r) * d + c] = acc;
        }
    }
    return g;
}

double exact_log_marginal(const ContourVector& y, const EncoderOutput& out,
                          const PcaShapeModel& model, double sigma2) {
    if (2 * model.vertex_count > 20) {
        throw std::runtime_error("exact_log_marginal: dense path restricted to 2V <= 20");
    }
    return marginal_gaussian(out, model, sigma2).log_density(y);
}

// -- quadrature KLD -------------------------------------------------------------------

namespace {

double mixture_density(const std::vector<DiagGaussian>& mix, const std::vector<double>& x) {
    const std::size_t dim = x.size();
    double q = 0.0;
    for (const auto& g : mix) {
        double logd = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double diff = x[i] - g.mean[i];
            logd += -0.5 * (kLog2Pi + std::log(g.var[i]) + diff * diff / g.var[i]);
        }
        q += std::exp(logd);
    }
    return q / static_cast<double>(mix.size());
}

double prior_log_density(const std::vector<double>& x) {
    double acc = 0.0;
    for (const double xi : x) acc += xi * xi;
    return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + acc);
}

}  // namespace

double quadrature_kld(const std::vector<DiagGaussian>& mixture, int points_per_axis) {
    if (mixture.empty()) throw std::runtime_error("quadrature_kld: empty mixture");
    const std::size_t dim = mixture.front().mean.size();
    if (dim != 1 && dim != 2) throw std::runtime_error("quadrature_kld: dimension must be 1 or 2");
    if (points_per_axis < 400) points_per_axis = 400;

    std::vector<double> lo(dim, 1e300), hi(dim, -1e300);
    for (const auto& g : mixture) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double s = std::sqrt(g.var[i]);
            lo[i] = std::min(lo[i], g.mean[i] - 8.0 * s);
            hi[i] = std::max(hi[i], g.mean[i] + 8.0 * s);
        }
    }

    const int n = points_per_axis;
    double kld = 0.0, mass = 0.0;
    if (dim == 1) {
        const double dx = (hi[0] - lo[0]) / (n - 1);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> x = {lo[0] + i * dx};
            const double q = mixture_density(mixture, x);
            const double wt = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            mass += wt * q * dx;
            if (q > 0.0) kld += wt * q * (std::log(q) - prior_log_density(x)) * dx;
        }
    } else {
        const double dx = (hi[0] - lo[0]) / (n - 1);
        const double dy = (hi[1] - lo[1]) / (n - 1);
        for (int i = 0; i < n; ++i) {
            const double wx = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            for (int j = 0; j < n; ++j) {
                const double wy = (j == 0 || j == n - 1) ? 0.5 : 1.0;
                const std::vector<double> x = {lo[0] + i * dx, lo[1] + j * dy};
                const double q = mixture_density(mixture, x);
                const double w = wx * wy * dx * dy;
                mass += w * q;
                if (q > 0.0) kld += w * q * (std::log(q) - prior_log_density(x));
            }
        }
    }
    if (std::abs(mass - 1.0) > 1e-6) {
        throw std::runtime_error("quadrature_kld: grid too coarse, tail mass " +
                                 std::to_string(std::abs(mass - 1.0)));
    }
    return kld;
}

double diag_gaussian_kld_to_prior(const DiagGaussian& g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.mean.size(); ++i) {
        acc += 0.5 * (g.var[i] + g.mean[i] * g.mean[i] - 1.0 - std::log(g.var[i]));
    }
    return acc;
}

// -- numerics -------------------------------------------------------------------------

double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t i, double h) {
    x[i] += h;
    const double fp = f(x);
    x[i] -= 2.0 * h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

Tensor naive_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int padding) {
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int o = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
    const int oh = h + 2 * padding - kh + 1;
    const int ow = w + 2 * padding - kw + 1;
    Tensor out({o, oh, ow});
    for (int oc = 0; oc < o; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias[oc];
                for (int ic = 0; ic < c_in; ++ic) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy + ky - padding;
                            const int ix = ox + kx - padding;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += kernel[((oc * c_in + ic) * kh + ky) * kw + kx] *
                                   input[(ic * h + iy) * w + ix];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    return out;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const int m = a.shape[0], k = a.shape[1];
    const int n = b.rank() == 1 ? 1 : b.shape[1];
    Tensor out(b.rank() == 1 ? std::vector<int>{m} : std::vector<int>{m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
            out[i * n + j] = acc;
        }
    }
    return out;
}

// -- PCA ------------------------------------------------------------------------------

NaivePca naive_pca(const std::vector<ContourVector>& contours) {
    const int n = static_cast<int>(contours.size());
    const int d = static_cast<int>(contours.front().size());
    NaivePca out;
    out.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (const auto& c : contours) {
        for (int j = 0; j < d; ++j) out.mean[static_cast<std::size_t>(j)] += c[static_cast<std::size_t>(j)];
    }
    for (auto& m : out.mean) m /= n;

    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (const auto& c : contours) {
        for (int r = 0; r < d; ++r) {
            const double xr = c[static_cast<std::size_t>(r)] - out.mean[static_cast<std::size_t>(r)];
            for (int s = 0; s < d; ++s) {
                const double xs = c[static_cast<std::size_t>(s)] - out.mean[static_cast<std::size_t>(s)];
                cov[static_cast<std::size_t>(r) * d + s] += xr * xs;
            }
        }
    }
    for (auto& v : cov) v /= (n - 1);

    EigenSym es = jacobi_eigen_sym(std::move(cov), d);
    out.eigenvalues = std::move(es.values);
    out.components = std::move(es.vectors);
    return out;
}

// -- polygon fill ----------------------------------------------------------------------

bool point_in_polygon_even_odd(double px, double py, const ContourVector& poly) {
    const int v = static_cast<int>(poly.size() / 2);
    bool inside = false;
    for (int i = 0; i < v; ++i) {
        const double x1 = poly[2 * static_cast<std::size_t>(i)];
        const double y1 = poly[2 * static_cast<std::size_t>(i) + 1];
        const std::size_t j = 2 * ((static_cast<std::size_t>(i) + 1) % static_cast<std::size_t>(v));
        const double x2 = poly[j];
        const double y2 = poly[j + 1];
        if ((y1 > py) == (y2 > py)) continue;
        const double x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
        if (px < x_cross) inside = !inside;
    }
    return inside;
}

std::vector<std::uint8_t> brute_force_fill(const ContourVector& poly, int height, int width) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            mask[static_cast<std::size_t>(r) * width + c] =
                point_in_polygon_even_odd(c + 0.5, r + 0.5, poly) ? 1 : 0;
        }
    }
    return mask;
}

}  // namespace oracles
