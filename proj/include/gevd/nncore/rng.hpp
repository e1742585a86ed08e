#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace gevd {

/// All stochastic code takes this engine so a single seed pins a run.
using Rng = std::mt19937_64;

/// Uniform double on [0, 1) built from the top 53 bits. Unlike
/// std::uniform_real_distribution this never returns 1.0 and is identical
/// across standard library implementations.
inline double unit_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
}

/// Fisher-Yates with uniform_index so permutations are portable.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

/// Derives an independent child seed from a parent seed and a stream label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace gevd
