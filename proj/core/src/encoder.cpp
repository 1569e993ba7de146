#include "probcontour/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "probcontour/errors.hpp"
#include "probcontour/rng.hpp"

namespace probcontour {

std::string to_string(HeadMode mode) {
    switch (mode) {
        case HeadMode::Probabilistic: return "probabilistic";
        case HeadMode::DirectVertex: return "direct-vertex";
        case HeadMode::DetPca: return "det-pca";
    }
    throw Error("unreachable head mode");
}

HeadMode head_mode_from_string(const std::string& s) {
    if (s == "probabilistic") return HeadMode::Probabilistic;
    if (s == "direct-vertex") return HeadMode::DirectVertex;
    if (s == "det-pca") return HeadMode::DetPca;
    throw ConfigError("unknown mode '" + s + "' (expected probabilistic|direct-vertex|det-pca)");
}

int NetworkSpec::head_dim() const {
    switch (mode) {
        case HeadMode::Probabilistic: return 2 * latent_dim + 2;
        case HeadMode::DirectVertex: return 2 * vertex_count;
        case HeadMode::DetPca: return latent_dim + 2;
    }
    throw Error("unreachable head mode");
}

void NetworkSpec::validate() const {
    if (input_height < 1 || input_width < 1) throw ShapeError("network: empty input image");
    if (latent_dim < 1 || vertex_count < 1) throw ConfigError("network: latent_dim and vertex_count must be >= 1");
    if (layers.empty()) throw ConfigError("network: no layers");
    if (layers.back().kind != LayerSpec::Kind::Dense || layers.back().units != 0) {
        throw ConfigError("network: last layer must be the dense head (units = 0)");
    }
    int h = input_height, w = input_width;
    bool flattened = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        switch (l.kind) {
            case LayerSpec::Kind::Conv:
                if (flattened) throw ConfigError("network: conv after dense at layer " + std::to_string(i));
                if (l.channels < 1 || l.kernel < 1) throw ConfigError("network: bad conv at layer " + std::to_string(i));
                break;  // same padding keeps h, w
            case LayerSpec::Kind::Pool:
                if (flattened) throw ConfigError("network: pool after dense at layer " + std::to_string(i));
                h /= 2;
                w /= 2;
                if (h < 1 || w < 1) {
                    throw ShapeError("network: spatial collapse at layer " + std::to_string(i) +
                                     " (pool output " + std::to_string(h) + "x" + std::to_string(w) + ")");
                }
                break;
            case LayerSpec::Kind::Relu:
                break;
            case LayerSpec::Kind::Dense:
                flattened = true;
                if (l.units < 0) throw ConfigError("network: bad dense at layer " + std::to_string(i));
                break;
        }
    }
}

NetworkSpec NetworkSpec::cl9p3dl1(int h, int w, int latent_dim, int vertex_count, HeadMode mode) {
    NetworkSpec s;
    s.input_height = h;
    s.input_width = w;
    s.latent_dim = latent_dim;
    s.vertex_count = vertex_count;
    s.mode = mode;
    s.arch_name = "cl9p3dl1";
    const int widths[3] = {16, 32, 64};
    for (const int c : widths) {
        for (int rep = 0; rep < 3; ++rep) {
            s.layers.push_back({LayerSpec::Kind::Conv, c, 3, 0});
            s.layers.push_back({LayerSpec::Kind::Relu, 0, 0, 0});
        }
        s.layers.push_back({LayerSpec::Kind::Pool, 0, 0, 0});
    }
    s.layers.push_back({LayerSpec::Kind::Dense, 0, 0, 0});
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::small_cnn(int h, int w, int latent_dim, int vertex_count, HeadMode mode) {
    NetworkSpec s;
    s.input_height = h;
    s.input_width = w;
    s.latent_dim = latent_dim;
    s.vertex_count = vertex_count;
    s.mode = mode;
    s.arch_name = "small-cnn";
    const int widths[3] = {8, 16, 16};
    for (const int c : widths) {
        s.layers.push_back({LayerSpec::Kind::Conv, c, 3, 0});
        s.layers.push_back({LayerSpec::Kind::Relu, 0, 0, 0});
        s.layers.push_back({LayerSpec::Kind::Pool, 0, 0, 0});
    }
    s.layers.push_back({LayerSpec::Kind::Dense, 0, 0, 0});
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::mlp(int h, int w, int hidden, int latent_dim, int vertex_count,
                             HeadMode mode) {
    NetworkSpec s;
    s.input_height = h;
    s.input_width = w;
    s.latent_dim = latent_dim;
    s.vertex_count = vertex_count;
    s.mode = mode;
    s.arch_name = "mlp-" + std::to_string(hidden);
    s.layers.push_back({LayerSpec::Kind::Dense, 0, 0, hidden});
    s.layers.push_back({LayerSpec::Kind::Relu, 0, 0, 0});
    s.layers.push_back({LayerSpec::Kind::Dense, 0, 0, 0});
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::by_name(const std::string& arch, int h, int w, int latent_dim,
                                 int vertex_count, HeadMode mode) {
    if (arch == "cl9p3dl1") return cl9p3dl1(h, w, latent_dim, vertex_count, mode);
    if (arch == "small-cnn") return small_cnn(h, w, latent_dim, vertex_count, mode);
    if (arch.rfind("mlp-", 0) == 0) {
        const int hidden = std::stoi(arch.substr(4));
        return mlp(h, w, hidden, latent_dim, vertex_count, mode);
    }
    throw ConfigError("unknown arch '" + arch + "' (expected cl9p3dl1|small-cnn|mlp-<hidden>)");
}

json NetworkSpec::to_json() const {
    json j;
    j["input_height"] = input_height;
    j["input_width"] = input_width;
    j["mode"] = to_string(mode);
    j["latent_dim"] = latent_dim;
    j["vertex_count"] = vertex_count;
    j["arch"] = arch_name;
    json layers_j = json::array();
    for (const auto& l : layers) {
        json lj;
        switch (l.kind) {
            case LayerSpec::Kind::Conv:
                lj = {{"kind", "conv"}, {"channels", l.channels}, {"kernel", l.kernel}};
                break;
            case LayerSpec::Kind::Pool: lj = {{"kind", "pool"}}; break;
            case LayerSpec::Kind::Relu: lj = {{"kind", "relu"}}; break;
            case LayerSpec::Kind::Dense: lj = {{"kind", "dense"}, {"units", l.units}}; break;
        }
        layers_j.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers_j);
    return j;
}

NetworkSpec NetworkSpec::from_json(const json& j) {
    NetworkSpec s;
    try {
        s.input_height = j.at("input_height").get<int>();
        s.input_width = j.at("input_width").get<int>();
        s.mode = head_mode_from_string(j.at("mode").get<std::string>());
        s.latent_dim = j.at("latent_dim").get<int>();
        s.vertex_count = j.at("vertex_count").get<int>();
        s.arch_name = j.value("arch", std::string("custom"));
        for (const auto& lj : j.at("layers")) {
            const std::string kind = lj.at("kind").get<std::string>();
            LayerSpec l;
            if (kind == "conv") {
                l.kind = LayerSpec::Kind::Conv;
                l.channels = lj.at("channels").get<int>();
                l.kernel = lj.at("kernel").get<int>();
            } else if (kind == "pool") {
                l.kind = LayerSpec::Kind::Pool;
            } else if (kind == "relu") {
                l.kind = LayerSpec::Kind::Relu;
            } else if (kind == "dense") {
                l.kind = LayerSpec::Kind::Dense;
                l.units = lj.at("units").get<int>();
            } else {
                throw ConfigError("unknown layer kind '" + kind + "'");
            }
            s.layers.push_back(l);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid network spec: ") + e.what());
    }
    s.validate();
    return s;
}

namespace {

double glorot_limit(int fan_in, int fan_out) {
    return std::sqrt(6.0 / (fan_in + fan_out));
}

void init_uniform(Tensor& t, double limit, RngStream& rng) {
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
}

}  // namespace

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    RngStream rng{RngStream(seed).substream("init").seed()};
    int c = 1, h = spec_.input_height, w = spec_.input_width;
    bool flattened = false;
    int flat_dim = 0;
    int dense_index = 0;
    // Count dense layers so the final one gets the small-scale init.
    int dense_total = 0;
    for (const auto& l : spec_.layers) dense_total += l.kind == LayerSpec::Kind::Dense ? 1 : 0;

    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const auto& l = spec_.layers[i];
        switch (l.kind) {
            case LayerSpec::Kind::Conv: {
                Tensor kern({l.channels, c, l.kernel, l.kernel});
                const int fan_in = c * l.kernel * l.kernel;
                const int fan_out = l.channels * l.kernel * l.kernel;
                init_uniform(kern, glorot_limit(fan_in, fan_out), rng);
                params_.push_back(std::move(kern));
                param_names_.push_back("conv" + std::to_string(i) + ".kernel");
                params_.emplace_back(std::vector<int>{l.channels});
                param_names_.push_back("conv" + std::to_string(i) + ".bias");
                c = l.channels;
                break;
            }
            case LayerSpec::Kind::Pool:
                h /= 2;
                w /= 2;
                break;
            case LayerSpec::Kind::Relu:
                break;
            case LayerSpec::Kind::Dense: {
                if (!flattened) {
                    flat_dim = c * h * w;
                    flattened = true;
                }
                ++dense_index;
                const int in_dim = flat_dim;
                const int out_dim = l.units > 0 ? l.units : spec_.head_dim();
                Tensor wgt({out_dim, in_dim});
                double limit = glorot_limit(in_dim, out_dim);
                // Final layer starts near zero so predictions begin at the
                // mean shape and the latent prior.
                if (dense_index == dense_total) limit *= 0.01;
                init_uniform(wgt, limit, rng);
                params_.push_back(std::move(wgt));
                param_names_.push_back("dense" + std::to_string(i) + ".weight");
                params_.emplace_back(std::vector<int>{out_dim});
                param_names_.push_back("dense" + std::to_string(i) + ".bias");
                flat_dim = out_dim;
                break;
            }
        }
    }
}

long Network::param_count() const {
    long n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

BoundNetwork::BoundNetwork(ad::Tape& tape, const Network& net) : tape_(tape), net_(net) {
    param_vars_.reserve(net.params_.size());
    for (std::size_t i = 0; i < net.params_.size(); ++i) {
        param_vars_.push_back(tape.leaf(net.params_[i], net.param_names_[i]));
    }
}

ad::Var BoundNetwork::head(const Image& image) const {
    const auto& spec = net_.spec_;
    if (image.height != spec.input_height || image.width != spec.input_width) {
        throw ShapeError("forward: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " does not match spec " +
                         std::to_string(spec.input_height) + "x" + std::to_string(spec.input_width));
    }
    ad::Tape& t = tape_;
    ad::Var x = t.constant(Tensor({1, image.height, image.width}, image.pixels));
    std::size_t pi = 0;
    bool flattened = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        switch (l.kind) {
            case LayerSpec::Kind::Conv: {
                const ad::Var kern = param_vars_[pi++];
                const ad::Var bias = param_vars_[pi++];
                x = t.conv2d(x, kern, bias, l.kernel / 2);
                break;
            }
            case LayerSpec::Kind::Pool:
                x = t.maxpool2(x);
                break;
            case LayerSpec::Kind::Relu:
                x = t.relu(x);
                break;
            case LayerSpec::Kind::Dense: {
                const ad::Var wgt = param_vars_[pi++];
                const ad::Var bias = param_vars_[pi++];
                if (!flattened) {
                    x = t.reshape(x, {t.value(x).size()});
                    flattened = true;
                }
                x = t.add_bias(t.matmul(wgt, x), bias);
                break;
            }
        }
        if (!t.value(x).all_finite()) {
            throw NumericError("forward: non-finite activation at layer " + std::to_string(i));
        }
    }
    return x;
}

EncoderOutputVars BoundNetwork::encoder_outputs(const Image& image) const {
    if (net_.spec_.mode != HeadMode::Probabilistic) {
        throw ConfigError("encoder_outputs: network head is " + to_string(net_.spec_.mode));
    }
    const int k = net_.spec_.latent_dim;
    const ad::Var h = head(image);
    return EncoderOutputVars{tape_.slice(h, 0, k), tape_.slice(h, k, k), tape_.slice(h, 2 * k, 2)};
}

ad::Var BoundNetwork::direct_vertices(const Image& image) const {
    if (net_.spec_.mode != HeadMode::DirectVertex) {
        throw ConfigError("direct_vertices: network head is " + to_string(net_.spec_.mode));
    }
    return head(image);
}

BoundNetwork::DetPcaVars BoundNetwork::detpca_outputs(const Image& image) const {
    if (net_.spec_.mode != HeadMode::DetPca) {
        throw ConfigError("detpca_outputs: network head is " + to_string(net_.spec_.mode));
    }
    const int k = net_.spec_.latent_dim;
    const ad::Var h = head(image);
    return DetPcaVars{tape_.slice(h, 0, k), tape_.slice(h, k, 2)};
}

EncoderOutput encoder_output_values(const ad::Tape& tape, const EncoderOutputVars& vars) {
    EncoderOutput out;
    out.latent_mean = tape.value(vars.latent_mean).data;
    out.latent_logvar = tape.value(vars.latent_logvar).data;
    const auto& s = tape.value(vars.shift);
    out.shift = {s[0], s[1]};
    return out;
}

EncoderOutput Network::forward(const Image& image) const {
    ad::Tape tape;
    const BoundNetwork bound(tape, *this);
    return encoder_output_values(tape, bound.encoder_outputs(image));
}

ContourVector Network::forward_direct(const Image& image) const {
    ad::Tape tape;
    const BoundNetwork bound(tape, *this);
    return tape.value(bound.direct_vertices(image)).data;
}

std::pair<std::vector<double>, std::array<double, 2>> Network::forward_detpca(
    const Image& image) const {
    ad::Tape tape;
    const BoundNetwork bound(tape, *this);
    const auto vars = bound.detpca_outputs(image);
    const auto& s = tape.value(vars.shift);
    return {tape.value(vars.latent).data, {s[0], s[1]}};
}

// -- checkpoints ----------------------------------------------------------------

namespace {

void append_le_doubles(std::string& blob, const Tensor& t) {
    static_assert(sizeof(double) == 8);
    const std::size_t off = blob.size();
    blob.resize(off + t.data.size() * 8);
    std::memcpy(blob.data() + off, t.data.data(), t.data.size() * 8);
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& manifest_path,
                     const CheckpointMeta& meta, const std::vector<Tensor>* optimizer_acc) {
    std::string blob;
    for (const auto& p : net.params()) append_le_doubles(blob, p);
    if (optimizer_acc != nullptr) {
        for (const auto& a : *optimizer_acc) append_le_doubles(blob, a);
    }

    std::filesystem::path blob_path = manifest_path;
    blob_path.replace_extension(".bin");

    json manifest;
    manifest["spec"] = net.spec().to_json();
    manifest["seed"] = net.seed();
    manifest["param_count"] = net.param_count();
    manifest["blob_file"] = blob_path.filename().string();
    manifest["blob_bytes"] = static_cast<std::int64_t>(blob.size());
    manifest["checksum_fnv1a64"] = to_hex(fnv1a64(blob.data(), blob.size()));
    manifest["step"] = meta.step;
    manifest["epoch"] = meta.epoch;
    manifest["optimizer_state"] = optimizer_acc != nullptr;

    write_text_file(blob_path, blob);
    write_text_file(manifest_path, dump_json(manifest));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& manifest_path) {
    const json manifest = parse_json_file(manifest_path);
    NetworkSpec spec;
    std::uint64_t seed = 0;
    std::string blob_file;
    std::int64_t blob_bytes = 0;
    std::string checksum;
    CheckpointMeta meta;
    try {
        spec = NetworkSpec::from_json(manifest.at("spec"));
        seed = manifest.at("seed").get<std::uint64_t>();
        blob_file = manifest.at("blob_file").get<std::string>();
        blob_bytes = manifest.at("blob_bytes").get<std::int64_t>();
        checksum = manifest.at("checksum_fnv1a64").get<std::string>();
        meta.step = manifest.at("step").get<long>();
        meta.epoch = manifest.at("epoch").get<int>();
        meta.has_optimizer_state = manifest.at("optimizer_state").get<bool>();
    } catch (const json::exception& e) {
        throw IoError(manifest_path.string() + ": invalid checkpoint manifest: " + e.what());
    }

    const std::string blob = read_text_file(manifest_path.parent_path() / blob_file);
    if (static_cast<std::int64_t>(blob.size()) != blob_bytes) {
        throw IoError(manifest_path.string() + ": blob length " + std::to_string(blob.size()) +
                      " != manifest " + std::to_string(blob_bytes));
    }
    if (to_hex(fnv1a64(blob.data(), blob.size())) != checksum) {
        throw IoError(manifest_path.string() + ": blob checksum mismatch");
    }

    LoadedCheckpoint out{Network(spec, seed), meta, {}};
    std::size_t off = 0;
    const auto take = [&](Tensor& t) {
        const std::size_t bytes = t.data.size() * 8;
        if (off + bytes > blob.size()) {
            throw IoError(manifest_path.string() + ": blob too short at offset " + std::to_string(off));
        }
        std::memcpy(t.data.data(), blob.data() + off, bytes);
        off += bytes;
    };
    for (auto& p : out.net.params()) take(p);
    if (meta.has_optimizer_state) {
        for (const auto& p : out.net.params()) out.optimizer_acc.emplace_back(p.shape);
        for (auto& a : out.optimizer_acc) take(a);
    }
    if (off != blob.size()) {
        throw IoError(manifest_path.string() + ": trailing bytes in blob (" +
                      std::to_string(blob.size() - off) + ")");
    }
    return out;
}

}  // namespace probcontour
