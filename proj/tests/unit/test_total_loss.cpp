#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "probcontour/data.hpp"
#include "probcontour/errors.hpp"
#include "probcontour/loss.hpp"
#include "probcontour/rng.hpp"

using namespace probcontour;

namespace {

struct Fixture {
    ShapeDataset ds;
    PcaShapeModel model;
    std::vector<BatchExample> batch;

    explicit Fixture(int batch_size = 4, std::uint64_t seed = 5) {
        SynthConfig cfg;
        cfg.count = 24;
        cfg.height = 16;
        cfg.width = 16;
        cfg.vertex_count = 8;
        cfg.radius_min = 3.5;
        cfg.radius_max = 5.0;
        cfg.wall_min = 1.2;
        cfg.wall_max = 2.0;
        cfg.harmonic_amp_max = {0.5, 0.3, 0.15, 0.1};
        cfg.center_jitter_frac = 0.08;
        cfg.seed = seed;
        ds = generate(cfg);
        std::vector<ContourVector> contours;
        for (const auto* item : ds.split_items("train")) contours.push_back(item->contour);
        model = fit_pca(contours, 3);
        for (int i = 0; i < batch_size; ++i) {
            const auto& item = ds.items[static_cast<std::size_t>(i)];
            batch.push_back(BatchExample{&item.image, &item.contour, item.id});
        }
    }

    Network make_net(HeadMode mode, std::uint64_t seed = 1) const {
        return Network(NetworkSpec::small_cnn(16, 16, model.num_components, ds.vertex_count, mode),
                       seed);
    }
};

}  // namespace

TEST_CASE("lambda = 0 reduces the total to the negative log-likelihood alone") {
    const Fixture fx;
    const Network net = fx.make_net(HeadMode::Probabilistic);
    LossConfig cfg;
    cfg.lambda = 0.0;
    cfg.num_mc_samples = 3;
    const LossBreakdown b = total_loss(fx.batch, net, fx.model, cfg, 7, 0);
    CHECK(b.total == b.neg_loglik);
}

TEST_CASE("doubling lambda adds exactly lambda * kld under the same seed") {
    const Fixture fx;
    const Network net = fx.make_net(HeadMode::Probabilistic);
    LossConfig cfg;
    cfg.lambda = 100.0;
    cfg.num_mc_samples = 3;
    const LossBreakdown b1 = total_loss(fx.batch, net, fx.model, cfg, 7, 0);
    cfg.lambda = 200.0;
    const LossBreakdown b2 = total_loss(fx.batch, net, fx.model, cfg, 7, 0);
    CHECK(b1.kld == b2.kld);
    CHECK(b1.neg_loglik == b2.neg_loglik);
    CHECK(b2.total - b1.total == doctest::Approx(100.0 * b1.kld).epsilon(1e-12));
    CHECK(b1.total == 100.0 * b1.kld + b1.neg_loglik);  // exact decomposition
}

TEST_CASE("total loss is exactly invariant to batch ordering") {
    const Fixture fx;
    const Network net = fx.make_net(HeadMode::Probabilistic);
    LossConfig cfg;
    cfg.num_mc_samples = 4;
    cfg.lambda = 50.0;

    std::vector<BatchExample> reversed(fx.batch.rbegin(), fx.batch.rend());
    std::vector<BatchExample> rotated = fx.batch;
    std::rotate(rotated.begin(), rotated.begin() + 1, rotated.end());

    const LossBreakdown a = total_loss(fx.batch, net, fx.model, cfg, 11, 3);
    const LossBreakdown b = total_loss(reversed, net, fx.model, cfg, 11, 3);
    const LossBreakdown c = total_loss(rotated, net, fx.model, cfg, 11, 3);
    CHECK(a.total == b.total);
    CHECK(a.total == c.total);
    CHECK(a.kld == b.kld);
    CHECK(a.neg_loglik == c.neg_loglik);
}

TEST_CASE("total loss gradients match finite differences with frozen draws") {
    const Fixture fx(3);
    const Network net = fx.make_net(HeadMode::Probabilistic, 2);
    LossConfig cfg;
    cfg.num_mc_samples = 2;
    cfg.lambda = 10.0;

    ad::Tape tape;
    BoundNetwork bound(tape, net);
    const TotalLossVars vars = total_loss_graph(bound, fx.batch, fx.model, cfg, 13, 1);
    tape.backward(vars.total);

    RngStream pick(14);
    int checked = 0;
    while (checked < 10) {
        const auto pidx = static_cast<std::size_t>(pick.bounded(net.params().size()));
        const auto i = static_cast<std::size_t>(
            pick.bounded(static_cast<std::uint64_t>(net.params()[pidx].size())));
        const auto f = [&](const std::vector<double>& v) {
            Network mod = net;
            mod.params()[pidx].data = v;
            return total_loss(fx.batch, mod, fx.model, cfg, 13, 1).total;
        };
        const double fd = oracles::central_difference(f, net.params()[pidx].data, i);
        const double an = tape.grad(bound.param_vars()[pidx])[static_cast<int>(i)];
        if (std::abs(fd) < 1e-6) continue;  // skip dead ReLU coordinates
        CHECK(std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)) < 1e-3);
        ++checked;
    }
}

TEST_CASE("baseline loss: perfect prediction gives zero, (3,4) offset gives 12.5") {
    const Fixture fx;

    // Direct-vertex net with zeroed weights and bias = reference contour of
    // the first example: exact for that item.
    Network net = fx.make_net(HeadMode::DirectVertex, 3);
    auto& params = net.params();
    params[params.size() - 2].fill(0.0);
    const ContourVector& target = *fx.batch[0].contour;
    params[params.size() - 1].data = target;

    const std::vector<BatchExample> one = {fx.batch[0]};
    CHECK(baseline_loss(one, net, fx.model) == doctest::Approx(0.0).epsilon(1e-20));

    // Shift the bias by (3,4) per vertex: per-coordinate MSE = (9+16)/2.
    for (std::size_t i = 0; i < params.back().data.size(); i += 2) {
        params.back().data[i] += 3.0;
        params.back().data[i + 1] += 4.0;
    }
    CHECK(baseline_loss(one, net, fx.model) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("detPCA with the projected z attains the truncation-residual MSE") {
    const Fixture fx;
    const ContourVector& y = *fx.batch[0].contour;
    const auto z = project(fx.model, y);
    const ContourVector recon = decode(fx.model, z, {0.0, 0.0});
    double expected = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        expected += (recon[i] - y[i]) * (recon[i] - y[i]);
    }
    expected /= static_cast<double>(y.size());

    Network net = fx.make_net(HeadMode::DetPca, 4);
    auto& params = net.params();
    params[params.size() - 2].fill(0.0);
    std::vector<double> head = z;
    head.push_back(0.0);
    head.push_back(0.0);
    params[params.size() - 1].data = head;

    const std::vector<BatchExample> one = {fx.batch[0]};
    CHECK(baseline_loss(one, net, fx.model) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("baseline loss rejects probabilistic networks") {
    const Fixture fx;
    const Network net = fx.make_net(HeadMode::Probabilistic, 5);
    CHECK_THROWS_AS(baseline_loss(fx.batch, net, fx.model), ConfigError);
}

TEST_CASE("forcing encoder outputs to (0, I) sends the batch KLD toward zero") {
    // Mixture equal to the prior: estimator magnitude is sampling noise only.
    std::vector<EncoderOutput> outs(4);
    for (auto& o : outs) {
        o.latent_mean = {0.0, 0.0, 0.0};
        o.latent_logvar = {0.0, 0.0, 0.0};
    }
    const McEstimate est = kld_mc(outs, 50000, RngStream(15));
    CHECK(std::abs(est.mean) < 0.02);

    // And a spread-out batch has strictly larger divergence.
    std::vector<EncoderOutput> spread(4);
    for (std::size_t i = 0; i < spread.size(); ++i) {
        spread[i].latent_mean = {2.0 + static_cast<double>(i), -2.0, 1.0};
        spread[i].latent_logvar = {0.0, 0.0, 0.0};
    }
    const McEstimate far = kld_mc(spread, 50000, RngStream(16));
    CHECK(far.mean > est.mean + 1.0);
}
