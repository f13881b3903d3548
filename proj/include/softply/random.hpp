#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace softply {

// SplitMix64 finalizer; used as a stateless hash for counter-based streams.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic child seed from a parent seed and a path of indices.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

// Uniform in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// Counter-based stream: draw `n` of stream `key`.
class CounterStream {
public:
    constexpr explicit CounterStream(std::uint64_t key) : key_(key) {}
    constexpr std::uint64_t bits(std::uint64_t n) const { return mix64(key_ ^ mix64(n)); }
    constexpr double uniform(std::uint64_t n) const { return to_unit(bits(n)); }

    // Box-Muller on draws n and n + 1.
    double gaussian(std::uint64_t n) const {
        const double u1 = 1.0 - uniform(n);  // (0, 1]
        const double u2 = uniform(n + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t key_;
};

}  // namespace softply
