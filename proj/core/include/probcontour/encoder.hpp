#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "probcontour/autodiff.hpp"
#include "probcontour/image.hpp"
#include "probcontour/json_io.hpp"
#include "probcontour/shape_model.hpp"
#include "probcontour/tensor.hpp"

namespace probcontour {

enum class HeadMode { Probabilistic, DirectVertex, DetPca };

std::string to_string(HeadMode mode);
HeadMode head_mode_from_string(const std::string& s);

struct LayerSpec {
    enum class Kind { Conv, Pool, Relu, Dense };
    Kind kind = Kind::Conv;
    int channels = 0;  // conv out-channels
    int kernel = 3;    // conv kernel size (square, same-padded)
    int units = 0;     // dense out-dim; 0 marks the head layer
};

/// Image-conditioned network description. The final layer must be a Dense
/// head whose width is determined by the mode: 2K+2 (latent mean, latent
/// log-variance, global shift), 2V for direct vertex regression, K+2 for the
/// deterministic PCA baseline.
struct NetworkSpec {
    int input_height = 60;
    int input_width = 60;
    HeadMode mode = HeadMode::Probabilistic;
    int latent_dim = 8;    // K
    int vertex_count = 50; // V
    std::vector<LayerSpec> layers;

    int head_dim() const;
    /// Throws ShapeError naming the layer on spatial collapse or a malformed
    /// layer sequence.
    void validate() const;

    /// 9 conv (3x3, widths 16/16/16/32/32/32/64/64/64), 3 pools, 1 dense.
    static NetworkSpec cl9p3dl1(int h, int w, int latent_dim, int vertex_count, HeadMode mode);
    /// 3 conv (widths 8/16/16), 3 pools, 1 dense. CPU-friendly.
    static NetworkSpec small_cnn(int h, int w, int latent_dim, int vertex_count, HeadMode mode);
    /// Flatten -> dense(hidden) -> relu -> dense(head).
    static NetworkSpec mlp(int h, int w, int hidden, int latent_dim, int vertex_count, HeadMode mode);
    /// Dispatch by name: "cl9p3dl1" | "small-cnn" | "mlp-<hidden>".
    static NetworkSpec by_name(const std::string& arch, int h, int w, int latent_dim,
                               int vertex_count, HeadMode mode);

    json to_json() const;
    static NetworkSpec from_json(const json& j);
    std::string arch_name = "small-cnn";
};

/// Latent Gaussian parameters plus global shift predicted from one image.
struct EncoderOutput {
    std::vector<double> latent_mean;    // K
    std::vector<double> latent_logvar;  // K; Sigma(x) = exp(latent_logvar)
    std::array<double, 2> shift = {0.0, 0.0};
};

/// Graph-level view of the same three heads.
struct EncoderOutputVars {
    ad::Var latent_mean;
    ad::Var latent_logvar;
    ad::Var shift;
};

class Network {
public:
    Network(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return param_names_; }
    long param_count() const;

    /// Value-level forward passes (scratch tape). Pure in (params, image).
    EncoderOutput forward(const Image& image) const;
    ContourVector forward_direct(const Image& image) const;
    std::pair<std::vector<double>, std::array<double, 2>> forward_detpca(const Image& image) const;

private:
    NetworkSpec spec_;
    std::uint64_t seed_;
    std::vector<Tensor> params_;
    std::vector<std::string> param_names_;

    friend class BoundNetwork;
};

/// Registers the network's parameters as leaves on a tape and builds forward
/// graphs that share those leaves, so one backward pass accumulates gradients
/// over a whole batch.
class BoundNetwork {
public:
    BoundNetwork(ad::Tape& tape, const Network& net);

    /// Full head vector for one image; checks activations stay finite and
    /// reports the failing layer index otherwise.
    ad::Var head(const Image& image) const;
    EncoderOutputVars encoder_outputs(const Image& image) const;  // Probabilistic mode
    ad::Var direct_vertices(const Image& image) const;            // DirectVertex mode
    struct DetPcaVars {
        ad::Var latent;
        ad::Var shift;
    };
    DetPcaVars detpca_outputs(const Image& image) const;          // DetPca mode

    const std::vector<ad::Var>& param_vars() const { return param_vars_; }
    ad::Tape& tape() const { return tape_; }
    const Network& network() const { return net_; }

private:
    ad::Tape& tape_;
    const Network& net_;
    std::vector<ad::Var> param_vars_;
};

EncoderOutput encoder_output_values(const ad::Tape& tape, const EncoderOutputVars& vars);

/// Checkpoint = JSON manifest (spec, seed, mode, blob length, fnv1a64
/// checksum, step/epoch counters, optional optimizer flag) next to a flat
/// little-endian float64 blob of parameters in declaration order, followed by
/// the RMSProp accumulators when present.
struct CheckpointMeta {
    long step = 0;
    int epoch = 0;
    bool has_optimizer_state = false;
};

void save_checkpoint(const Network& net, const std::filesystem::path& manifest_path,
                     const CheckpointMeta& meta = {},
                     const std::vector<Tensor>* optimizer_acc = nullptr);

struct LoadedCheckpoint {
    Network net;
    CheckpointMeta meta;
    std::vector<Tensor> optimizer_acc;  // empty unless stored
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace probcontour
