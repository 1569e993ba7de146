#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "probcontour/autodiff.hpp"
#include "probcontour/encoder.hpp"
#include "probcontour/rng.hpp"
#include "probcontour/shape_model.hpp"

namespace probcontour {

struct LossConfig {
    double sigma2 = 5e-2;      // data noise
    double lambda = 1e5;       // KLD weight
    int num_mc_samples = 5;    // L
    int batch_size = 5;        // N (mixture size of the KLD term)

    void validate() const;
};

struct LossBreakdown {
    double neg_loglik = 0.0;  // -sum_n (1/L) sum_l ln p(y_n | z_l)
    double kld = 0.0;
    double total = 0.0;       // lambda * kld + neg_loglik
};

/// Monte-Carlo estimate with its standard error of the mean.
struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long samples = 0;
};

/// Log-variances are clamped to this range before exponentiation.
inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 10.0;

// -- graph-level (differentiable) ----------------------------------------------

/// Reparameterized draw z = mu(x) + exp(logvar/2) * eps.
ad::Var sample_latent_graph(ad::Tape& tape, const EncoderOutputVars& out,
                            const std::vector<double>& eps);

/// Isotropic Gaussian log-density ln N(y | U S^{1/2} z + mean + shift, sigma2 I).
ad::Var log_lik_graph(ad::Tape& tape, const ContourVector& y, ad::Var z, ad::Var shift,
                      const PcaShapeModel& model, double sigma2);

/// (1/L) sum_l ln p(y | z_l), z_l reparameterized from the encoder output.
ad::Var mc_lower_bound_graph(ad::Tape& tape, const ContourVector& y, const EncoderOutputVars& out,
                             const PcaShapeModel& model, int num_samples, double sigma2,
                             RngStream rng);

/// MC estimate of KLD( (1/N) sum_n N(mu_n, Sigma_n) || N(0, I) ): z_l is drawn
/// from the mixture (uniform component, reparameterized), the mixture density
/// uses log-sum-exp over components, and gradients flow through both the
/// sample path and the densities.
ad::Var kld_mc_graph(ad::Tape& tape, const std::vector<EncoderOutputVars>& outs, int num_samples,
                     RngStream rng);

struct BatchExample {
    const Image* image = nullptr;
    const ContourVector* contour = nullptr;
    std::string id;
};

struct TotalLossVars {
    ad::Var total;
    ad::Var neg_loglik;
    ad::Var kld;
};

/// Eq.-7-style objective over one mini-batch:
///   lambda * KLD(mixture, prior) - sum_n (1/L) sum_l ln p(y_n | z_l).
/// The batch is canonicalized by id internally, and per-example noise comes
/// from substreams keyed by (seed, example id, epoch), so the value is exactly
/// invariant to batch ordering.
TotalLossVars total_loss_graph(BoundNetwork& net, std::vector<BatchExample> batch,
                               const PcaShapeModel& model, const LossConfig& cfg,
                               std::uint64_t seed, int epoch);

/// Coordinate MSE for the deterministic baselines (DirectVertex: raw head;
/// DetPca: decoded prediction), averaged over the batch.
ad::Var baseline_loss_graph(BoundNetwork& net, const std::vector<BatchExample>& batch,
                            const PcaShapeModel& model);

// -- value-level -----------------------------------------------------------------

std::vector<double> sample_latent(const EncoderOutput& out, const std::vector<double>& eps);

double log_lik(const ContourVector& y, const std::vector<double>& z,
               const std::array<double, 2>& shift, const PcaShapeModel& model, double sigma2);

/// Plain-double estimator; consumes the RNG exactly like the graph version,
/// so both produce bit-identical values for the same stream.
McEstimate mc_lower_bound(const ContourVector& y, const EncoderOutput& out,
                          const PcaShapeModel& model, long num_samples, double sigma2,
                          RngStream rng);

McEstimate kld_mc(const std::vector<EncoderOutput>& outs, long num_samples, RngStream rng);

LossBreakdown total_loss(const std::vector<BatchExample>& batch, const Network& net,
                         const PcaShapeModel& model, const LossConfig& cfg, std::uint64_t seed,
                         int epoch);

double baseline_loss(const std::vector<BatchExample>& batch, const Network& net,
                     const PcaShapeModel& model);

}  // namespace probcontour
