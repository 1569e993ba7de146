#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "probcontour/encoder.hpp"
#include "probcontour/errors.hpp"
#include "probcontour/rng.hpp"

using namespace probcontour;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
    RngStream rng(seed);
    Image img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    for (auto& p : img.pixels) p = rng.uniform(0.0, 255.0);
    standardize(img);
    return img;
}

void zero_final_layer(Network& net) {
    // The last two parameters are the head dense weight and bias.
    auto& params = net.params();
    params[params.size() - 2].fill(0.0);
    params[params.size() - 1].fill(0.0);
}

}  // namespace

TEST_CASE("cl9p3dl1 on 60x60 with K=8 has head dim 18 and the pinned parameter count") {
    const NetworkSpec spec = NetworkSpec::cl9p3dl1(60, 60, 8, 50, HeadMode::Probabilistic);
    CHECK(spec.head_dim() == 18);
    int convs = 0, pools = 0, denses = 0;
    for (const auto& l : spec.layers) {
        convs += l.kind == LayerSpec::Kind::Conv ? 1 : 0;
        pools += l.kind == LayerSpec::Kind::Pool ? 1 : 0;
        denses += l.kind == LayerSpec::Kind::Dense ? 1 : 0;
    }
    CHECK(convs == 9);
    CHECK(pools == 3);
    CHECK(denses == 1);

    const Network net(spec, 0);
    // Regression guard against silent architecture drift:
    // convs 16/16/16/32/32/32/64/64/64 (3x3), dense 64*7*7 -> 18.
    const long expected = (16 * 1 * 9 + 16) + 2 * (16 * 16 * 9 + 16) + (32 * 16 * 9 + 32) +
                          2 * (32 * 32 * 9 + 32) + (64 * 32 * 9 + 64) + 2 * (64 * 64 * 9 + 64) +
                          (3136 * 18 + 18);
    CHECK(net.param_count() == expected);
    CHECK(net.param_count() == 176754);
}

TEST_CASE("same spec and seed build identical parameters") {
    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 4, 16, HeadMode::Probabilistic);
    const Network a(spec, 1234);
    const Network b(spec, 1234);
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].data == b.params()[i].data);
    }
    const Network c(spec, 1235);
    CHECK(c.params()[0].data != a.params()[0].data);
}

TEST_CASE("three pools on a 4x4 input collapse and the error names the layer") {
    NetworkSpec spec;
    spec.input_height = 4;
    spec.input_width = 4;
    spec.latent_dim = 2;
    spec.vertex_count = 4;
    spec.layers = {{LayerSpec::Kind::Pool, 0, 0, 0},
                   {LayerSpec::Kind::Pool, 0, 0, 0},
                   {LayerSpec::Kind::Pool, 0, 0, 0},
                   {LayerSpec::Kind::Dense, 0, 0, 0}};
    try {
        spec.validate();
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
}

TEST_CASE("zero final layer: latent mean 0, logvar 0 (unit variance), shift 0") {
    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 4, 16, HeadMode::Probabilistic);
    Network net(spec, 5);
    zero_final_layer(net);
    const EncoderOutput out = net.forward(random_image(32, 32, 6));
    for (const double v : out.latent_mean) CHECK(v == 0.0);
    for (const double v : out.latent_logvar) CHECK(v == 0.0);
    CHECK(out.shift[0] == 0.0);
    CHECK(out.shift[1] == 0.0);
}

TEST_CASE("forward output is finite with the expected dimensions") {
    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 4, 16, HeadMode::Probabilistic);
    const Network net(spec, 7);
    const EncoderOutput out = net.forward(random_image(32, 32, 8));
    CHECK(out.latent_mean.size() == 4);
    CHECK(out.latent_logvar.size() == 4);
    for (const double v : out.latent_mean) CHECK(std::isfinite(v));
    for (const double v : out.latent_logvar) CHECK(std::isfinite(v));
    CHECK(std::isfinite(out.shift[0]));
    CHECK(std::isfinite(out.shift[1]));
}

TEST_CASE("head gradients match finite differences across layer types") {
    const NetworkSpec spec = NetworkSpec::small_cnn(12, 12, 2, 5, HeadMode::Probabilistic);
    const Network net(spec, 11);
    const Image img = random_image(12, 12, 12);

    ad::Tape tape;
    const BoundNetwork bound(tape, net);
    tape.backward(tape.sum(bound.head(img)));

    RngStream pick(13);
    for (int rep = 0; rep < 12; ++rep) {
        const auto pidx = static_cast<std::size_t>(pick.bounded(net.params().size()));
        const auto i = static_cast<std::size_t>(
            pick.bounded(static_cast<std::uint64_t>(net.params()[pidx].size())));
        const auto f = [&](const std::vector<double>& v) {
            Network mod = net;
            mod.params()[pidx].data = v;
            ad::Tape t2;
            const BoundNetwork b2(t2, mod);
            return t2.value(t2.sum(b2.head(img)))[0];
        };
        const double fd = oracles::central_difference(f, net.params()[pidx].data, i);
        const double an = tape.grad(bound.param_vars()[pidx])[static_cast<int>(i)];
        if (std::abs(fd) > 1e-7) {
            CHECK(std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)) < 1e-4);
        } else {
            CHECK(std::abs(an - fd) < 1e-6);
        }
    }
}

TEST_CASE("baseline heads have the documented output dimensions") {
    const NetworkSpec direct = NetworkSpec::small_cnn(60, 60, 8, 50, HeadMode::DirectVertex);
    CHECK(direct.head_dim() == 100);
    const NetworkSpec detpca = NetworkSpec::small_cnn(60, 60, 12, 50, HeadMode::DetPca);
    CHECK(detpca.head_dim() == 14);

    const Network net(direct, 3);
    const ContourVector y = net.forward_direct(random_image(60, 60, 4));
    CHECK(y.size() == 100);
}

TEST_CASE("mode/head mismatch is rejected") {
    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 4, 16, HeadMode::DirectVertex);
    const Network net(spec, 9);
    const Image img = random_image(32, 32, 10);
    CHECK_THROWS_AS(net.forward(img), ConfigError);
    CHECK_THROWS_AS(net.forward_detpca(img), ConfigError);
    CHECK(net.forward_direct(img).size() == 32);
}

TEST_CASE("zero-final-layer detPCA decodes to the mean shape") {
    RngStream rng(14);
    std::vector<ContourVector> contours;
    for (int i = 0; i < 8; ++i) {
        ContourVector c(12);
        for (auto& x : c) x = rng.uniform(0.0, 30.0);
        contours.push_back(std::move(c));
    }
    const PcaShapeModel model = fit_pca(contours, 3);

    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 3, 6, HeadMode::DetPca);
    Network net(spec, 15);
    zero_final_layer(net);
    const auto [z, shift] = net.forward_detpca(random_image(32, 32, 16));
    const ContourVector decoded = decode(model, z, shift);
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        CHECK(decoded[i] == doctest::Approx(model.mean[i]).epsilon(1e-12));
    }
}

TEST_CASE("mlp arch builds and runs") {
    const NetworkSpec spec = NetworkSpec::by_name("mlp-32", 16, 16, 3, 8, HeadMode::Probabilistic);
    const Network net(spec, 17);
    const EncoderOutput out = net.forward(random_image(16, 16, 18));
    CHECK(out.latent_mean.size() == 3);
}

TEST_CASE("checkpoint save/load round-trips parameters bit-exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "probcontour_ckpt_test";
    std::filesystem::create_directories(dir);
    const NetworkSpec spec = NetworkSpec::small_cnn(32, 32, 4, 16, HeadMode::Probabilistic);
    const Network net(spec, 19);

    std::vector<Tensor> acc;
    for (const auto& p : net.params()) {
        Tensor a(p.shape);
        a.fill(0.25);
        acc.push_back(std::move(a));
    }
    save_checkpoint(net, dir / "ckpt.json", CheckpointMeta{123, 4, true}, &acc);
    const LoadedCheckpoint lc = load_checkpoint(dir / "ckpt.json");

    CHECK(lc.meta.step == 123);
    CHECK(lc.meta.epoch == 4);
    CHECK(lc.net.seed() == net.seed());
    REQUIRE(lc.net.params().size() == net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        CHECK(lc.net.params()[i].data == net.params()[i].data);
    }
    REQUIRE(lc.optimizer_acc.size() == acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(lc.optimizer_acc[i].data == acc[i].data);

    const EncoderOutput a = net.forward(random_image(32, 32, 20));
    const EncoderOutput b = lc.net.forward(random_image(32, 32, 20));
    CHECK(a.latent_mean == b.latent_mean);

    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint blob corruption is detected via the checksum") {
    const auto dir = std::filesystem::temp_directory_path() / "probcontour_ckpt_corrupt";
    std::filesystem::create_directories(dir);
    const NetworkSpec spec = NetworkSpec::mlp(8, 8, 4, 2, 4, HeadMode::Probabilistic);
    const Network net(spec, 21);
    save_checkpoint(net, dir / "ckpt.json");

    std::fstream f(dir / "ckpt.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(16);
    f.put('\x7f');
    f.close();

    CHECK_THROWS_AS(load_checkpoint(dir / "ckpt.json"), IoError);
    std::filesystem::remove_all(dir);
}
