#pragma once

// Benign content injection: append one whole benign file to the overlay.

#include <cstdint>
#include <span>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/rng.hpp"
#include "gevd/petk/edit.hpp"

namespace gevd {

struct InjectionResult {
    pe::PeImage image;
    std::size_t donor = 0; // index into the pool
};

inline InjectionResult benign_injection_traced(const pe::PeImage& image, std::span<const std::vector<std::uint8_t>> pool,
                                               Rng& rng) {
    if (pool.empty()) throw ContractError("benign_injection: empty benign pool");
    std::size_t pick = uniform_index(rng, pool.size());
    return {pe::append_bytes(image, pool[pick]), pick};
}

inline pe::PeImage benign_injection(const pe::PeImage& image, std::span<const std::vector<std::uint8_t>> pool, Rng& rng) {
    return benign_injection_traced(image, pool, rng).image;
}

} // namespace gevd
