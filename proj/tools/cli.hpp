#pragma once

#include <filesystem>
#include <string>

#include "probcontour/data.hpp"
#include "probcontour/encoder.hpp"
#include "probcontour/json_io.hpp"
#include "probcontour/trainer.hpp"

namespace probcontour::cli {

/// Full run configuration: one JSON document with optional sections
/// "synth" | "pca" | "train" | "loss", a required top-level "seed", and an
/// optional "mode". Unknown keys are rejected with their JSON path.
struct RunConfig {
    std::uint64_t seed = 0;
    HeadMode mode = HeadMode::Probabilistic;
    SynthConfig synth;
    int pca_components = 8;
    TrainConfig train;

    static RunConfig from_json(const json& doc);
    static RunConfig load(const std::filesystem::path& path);
};

/// Entry point used by main() and by tests; never calls exit().
/// Returns 0 on success, 2 on configuration/usage errors, 3 on runtime errors.
int run_cli(int argc, const char* const* argv);

}  // namespace probcontour::cli
