#include "probcontour/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "probcontour/errors.hpp"
#include "probcontour/json_io.hpp"

namespace probcontour {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

double clamp_logvar(double lv) { return std::min(std::max(lv, kLogVarMin), kLogVarMax); }

ad::Var decode_graph(ad::Tape& t, ad::Var z, ad::Var shift, const PcaShapeModel& model) {
    const int d = 2 * model.vertex_count;
    const ad::Var factor = t.constant(Tensor({d, model.num_components}, model.factor_row_major()));
    const ad::Var mean = t.constant(Tensor({d}, model.mean));
    return t.add(t.add(t.matmul(factor, z), mean), t.tile_pair(shift, model.vertex_count));
}

}  // namespace

void LossConfig::validate() const {
    if (!(sigma2 > 0.0)) throw ConfigError("loss: sigma2 must be > 0");
    if (lambda < 0.0) throw ConfigError("loss: lambda must be >= 0");
    if (num_mc_samples < 1) throw ConfigError("loss: num_mc_samples must be >= 1");
    if (batch_size < 1) throw ConfigError("loss: batch_size must be >= 1");
}

// -- graph-level -----------------------------------------------------------------

ad::Var sample_latent_graph(ad::Tape& t, const EncoderOutputVars& out,
                            const std::vector<double>& eps) {
    const int k = t.value(out.latent_mean).size();
    if (static_cast<int>(eps.size()) != k) {
        throw ShapeError("sample_latent: eps length " + std::to_string(eps.size()) +
                         " != latent dim " + std::to_string(k));
    }
    const ad::Var std_dev = t.exp(t.scale(t.clamp(out.latent_logvar, kLogVarMin, kLogVarMax), 0.5));
    const ad::Var eps_c = t.constant(Tensor({k}, eps));
    return t.add(out.latent_mean, t.mul(std_dev, eps_c));
}

ad::Var log_lik_graph(ad::Tape& t, const ContourVector& y, ad::Var z, ad::Var shift,
                      const PcaShapeModel& model, double sigma2) {
    if (!(sigma2 > 0.0)) throw ConfigError("log_lik: sigma2 must be > 0");
    const int d = 2 * model.vertex_count;
    if (static_cast<int>(y.size()) != d) {
        throw ShapeError("log_lik: contour length " + std::to_string(y.size()) + " != 2V=" +
                         std::to_string(d));
    }
    const ad::Var decoded = decode_graph(t, z, shift, model);
    const ad::Var resid = t.sub(t.constant(Tensor({d}, y)), decoded);
    const ad::Var quad = t.scale(t.sum(t.square(resid)), -0.5 / sigma2);
    return t.add_const(quad, -0.5 * d * (kLog2Pi + std::log(sigma2)));
}

ad::Var mc_lower_bound_graph(ad::Tape& t, const ContourVector& y, const EncoderOutputVars& out,
                             const PcaShapeModel& model, int num_samples, double sigma2,
                             RngStream rng) {
    if (num_samples < 1) throw ConfigError("mc_lower_bound: need at least one sample");
    const int k = t.value(out.latent_mean).size();
    ad::Var acc;
    for (int l = 0; l < num_samples; ++l) {
        std::vector<double> eps(static_cast<std::size_t>(k));
        for (auto& e : eps) e = rng.normal();
        const ad::Var z = sample_latent_graph(t, out, eps);
        const ad::Var ll = log_lik_graph(t, y, z, out.shift, model, sigma2);
        acc = l == 0 ? ll : t.add(acc, ll);
    }
    return t.scale(acc, 1.0 / num_samples);
}

namespace {

/// ln N(z | mu_n, diag exp(lv_n)) as a graph, shared by the mixture density.
ad::Var component_log_density(ad::Tape& t, ad::Var z, const EncoderOutputVars& out, int k) {
    const ad::Var lv = t.clamp(out.latent_logvar, kLogVarMin, kLogVarMax);
    const ad::Var diff = t.sub(z, out.latent_mean);
    const ad::Var quad = t.sum(t.mul(t.square(diff), t.exp(t.neg(lv))));
    const ad::Var logdet = t.sum(lv);
    return t.add_const(t.scale(t.add(logdet, quad), -0.5), -0.5 * k * kLog2Pi);
}

}  // namespace

ad::Var kld_mc_graph(ad::Tape& t, const std::vector<EncoderOutputVars>& outs, int num_samples,
                     RngStream rng) {
    if (outs.empty()) throw ConfigError("kld_mc: empty batch");
    if (num_samples < 1) throw ConfigError("kld_mc: need at least one sample");
    const int n = static_cast<int>(outs.size());
    const int k = t.value(outs[0].latent_mean).size();
    ad::Var acc;
    for (int l = 0; l < num_samples; ++l) {
        const auto comp = static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(n)));
        std::vector<double> eps(static_cast<std::size_t>(k));
        for (auto& e : eps) e = rng.normal();
        const ad::Var z = sample_latent_graph(t, outs[comp], eps);

        std::vector<ad::Var> densities;
        densities.reserve(static_cast<std::size_t>(n));
        for (const auto& out : outs) densities.push_back(component_log_density(t, z, out, k));
        const ad::Var ln_q = t.add_const(t.logsumexp(t.pack_scalars(densities)), -std::log(n));
        const ad::Var ln_p = t.add_const(t.scale(t.sum(t.square(z)), -0.5), -0.5 * k * kLog2Pi);
        const ad::Var term = t.sub(ln_q, ln_p);
        acc = l == 0 ? term : t.add(acc, term);
    }
    return t.scale(acc, 1.0 / num_samples);
}

TotalLossVars total_loss_graph(BoundNetwork& net, std::vector<BatchExample> batch,
                               const PcaShapeModel& model, const LossConfig& cfg,
                               std::uint64_t seed, int epoch) {
    cfg.validate();
    if (batch.empty()) throw ConfigError("total_loss: empty batch");
    std::sort(batch.begin(), batch.end(),
              [](const BatchExample& a, const BatchExample& b) { return a.id < b.id; });

    ad::Tape& t = net.tape();
    const RngStream root(seed);

    std::vector<EncoderOutputVars> outs;
    outs.reserve(batch.size());
    ad::Var nll_acc;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const EncoderOutputVars out = net.encoder_outputs(*ex.image);
        outs.push_back(out);
        RngStream ex_rng = root.substream("mc", fnv1a64(ex.id), static_cast<std::uint64_t>(epoch));
        const ad::Var bound = mc_lower_bound_graph(t, *ex.contour, out, model, cfg.num_mc_samples,
                                                   cfg.sigma2, ex_rng);
        nll_acc = i == 0 ? bound : t.add(nll_acc, bound);
    }
    const ad::Var neg_loglik = t.neg(nll_acc);

    // Keyed by the sorted id set, so the KLD draws are also order-independent.
    std::uint64_t batch_key = 0xcbf29ce484222325ULL;
    for (const auto& ex : batch) batch_key = RngStream::mix(batch_key ^ fnv1a64(ex.id));
    RngStream kld_rng = root.substream("kld", static_cast<std::uint64_t>(epoch), batch_key);
    const ad::Var kld = kld_mc_graph(t, outs, cfg.num_mc_samples, kld_rng);
    const ad::Var total = t.add(t.scale(kld, cfg.lambda), neg_loglik);
    return TotalLossVars{total, neg_loglik, kld};
}

ad::Var baseline_loss_graph(BoundNetwork& net, const std::vector<BatchExample>& batch,
                            const PcaShapeModel& model) {
    if (batch.empty()) throw ConfigError("baseline_loss: empty batch");
    ad::Tape& t = net.tape();
    ad::Var acc;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const int d = static_cast<int>(ex.contour->size());
        ad::Var pred;
        switch (net.network().spec().mode) {
            case HeadMode::DirectVertex:
                pred = net.direct_vertices(*ex.image);
                break;
            case HeadMode::DetPca: {
                const auto dp = net.detpca_outputs(*ex.image);
                pred = decode_graph(t, dp.latent, dp.shift, model);
                break;
            }
            case HeadMode::Probabilistic:
                throw ConfigError("baseline_loss: network head is probabilistic");
        }
        if (t.value(pred).size() != d) {
            throw ShapeError("baseline_loss: prediction dim " +
                             std::to_string(t.value(pred).size()) + " != contour dim " +
                             std::to_string(d));
        }
        const ad::Var mse = t.mean(t.square(t.sub(pred, t.constant(Tensor({d}, *ex.contour)))));
        acc = i == 0 ? mse : t.add(acc, mse);
    }
    return t.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

// -- value-level -----------------------------------------------------------------

std::vector<double> sample_latent(const EncoderOutput& out, const std::vector<double>& eps) {
    const std::size_t k = out.latent_mean.size();
    if (eps.size() != k || out.latent_logvar.size() != k) {
        throw ShapeError("sample_latent: dimension mismatch");
    }
    std::vector<double> z(k);
    for (std::size_t i = 0; i < k; ++i) {
        z[i] = out.latent_mean[i] + std::exp(clamp_logvar(out.latent_logvar[i]) * 0.5) * eps[i];
    }
    return z;
}

double log_lik(const ContourVector& y, const std::vector<double>& z,
               const std::array<double, 2>& shift, const PcaShapeModel& model, double sigma2) {
    if (!(sigma2 > 0.0)) throw ConfigError("log_lik: sigma2 must be > 0");
    const ContourVector decoded = decode(model, z, shift);
    if (decoded.size() != y.size()) {
        throw ShapeError("log_lik: contour length mismatch");
    }
    const int d = static_cast<int>(y.size());
    double quad = 0.0;
    for (int i = 0; i < d; ++i) {
        const double r = y[static_cast<std::size_t>(i)] - decoded[static_cast<std::size_t>(i)];
        quad += r * r;
    }
    return -0.5 * (d * (kLog2Pi + std::log(sigma2)) + quad / sigma2);
}

namespace {

McEstimate summarize(const std::vector<double>& vals) {
    McEstimate e;
    e.samples = static_cast<long>(vals.size());
    double mean = 0.0;
    for (const double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (const double v : vals) var += (v - mean) * (v - mean);
    var = vals.size() > 1 ? var / (static_cast<double>(vals.size()) - 1.0) : 0.0;
    e.mean = mean;
    e.std_error = std::sqrt(var / static_cast<double>(vals.size()));
    return e;
}

}  // namespace

McEstimate mc_lower_bound(const ContourVector& y, const EncoderOutput& out,
                          const PcaShapeModel& model, long num_samples, double sigma2,
                          RngStream rng) {
    if (num_samples < 1) throw ConfigError("mc_lower_bound: need at least one sample");
    const std::size_t k = out.latent_mean.size();
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(num_samples));
    std::vector<double> eps(k);
    for (long l = 0; l < num_samples; ++l) {
        for (auto& e : eps) e = rng.normal();
        vals.push_back(log_lik(y, sample_latent(out, eps), out.shift, model, sigma2));
    }
    return summarize(vals);
}

McEstimate kld_mc(const std::vector<EncoderOutput>& outs, long num_samples, RngStream rng) {
    if (outs.empty()) throw ConfigError("kld_mc: empty batch");
    if (num_samples < 1) throw ConfigError("kld_mc: need at least one sample");
    const int n = static_cast<int>(outs.size());
    const std::size_t k = outs[0].latent_mean.size();
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(num_samples));
    std::vector<double> eps(k);
    std::vector<double> comp_ld(static_cast<std::size_t>(n));
    for (long l = 0; l < num_samples; ++l) {
        const auto comp = static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(n)));
        for (auto& e : eps) e = rng.normal();
        const std::vector<double> z = sample_latent(outs[comp], eps);

        for (int j = 0; j < n; ++j) {
            const auto& o = outs[static_cast<std::size_t>(j)];
            double logdet = 0.0, quad = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double lv = clamp_logvar(o.latent_logvar[i]);
                const double diff = z[i] - o.latent_mean[i];
                logdet += lv;
                quad += diff * diff * std::exp(-lv);
            }
            comp_ld[static_cast<std::size_t>(j)] =
                -0.5 * (static_cast<double>(k) * kLog2Pi + logdet + quad);
        }
        const double m = *std::max_element(comp_ld.begin(), comp_ld.end());
        double s = 0.0;
        for (const double v : comp_ld) s += std::exp(v - m);
        const double ln_q = m + std::log(s) - std::log(n);

        double zz = 0.0;
        for (const double zi : z) zz += zi * zi;
        const double ln_p = -0.5 * (static_cast<double>(k) * kLog2Pi + zz);
        vals.push_back(ln_q - ln_p);
    }
    return summarize(vals);
}

LossBreakdown total_loss(const std::vector<BatchExample>& batch, const Network& net,
                         const PcaShapeModel& model, const LossConfig& cfg, std::uint64_t seed,
                         int epoch) {
    ad::Tape tape;
    BoundNetwork bound(tape, net);
    const TotalLossVars vars = total_loss_graph(bound, batch, model, cfg, seed, epoch);
    LossBreakdown b;
    b.neg_loglik = tape.value(vars.neg_loglik)[0];
    b.kld = tape.value(vars.kld)[0];
    b.total = tape.value(vars.total)[0];
    return b;
}

double baseline_loss(const std::vector<BatchExample>& batch, const Network& net,
                     const PcaShapeModel& model) {
    ad::Tape tape;
    BoundNetwork bound(tape, net);
    return tape.value(baseline_loss_graph(bound, batch, model))[0];
}

}  // namespace probcontour
