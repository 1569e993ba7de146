#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace probcontour {

/// Deterministic random stream. All distributions are implemented by hand on
/// top of mt19937_64 so that draws are bit-identical across platforms and
/// standard-library versions. Substreams are derived by hashing the parent
/// seed with arbitrary key words, which keeps per-example draws independent
/// of batch order.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t bounded(std::uint64_t n);

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal();

    /// Derive an independent substream from (this stream's seed, key words).
    RngStream substream(std::uint64_t a, std::uint64_t b = 0) const;
    RngStream substream(std::string_view label, std::uint64_t a = 0, std::uint64_t b = 0) const;

    static std::uint64_t mix(std::uint64_t x);

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace probcontour
