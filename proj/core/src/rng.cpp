#include "probcontour/rng.hpp"

#include <cmath>
#include <numbers>

namespace probcontour {

std::uint64_t RngStream::mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t RngStream::bounded(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t r = gen_();
        if (r >= threshold) return r % n;
    }
}

double RngStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

RngStream RngStream::substream(std::uint64_t a, std::uint64_t b) const {
    std::uint64_t h = mix(seed_ ^ 0x243f6a8885a308d3ULL);
    h = mix(h ^ a);
    h = mix(h ^ b);
    return RngStream(h);
}

RngStream RngStream::substream(std::string_view label, std::uint64_t a, std::uint64_t b) const {
    std::uint64_t h = mix(seed_ ^ 0x452821e638d01377ULL);
    for (const char c : label) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    h = mix(h ^ a);
    h = mix(h ^ b);
    return RngStream(h);
}

}  // namespace probcontour
