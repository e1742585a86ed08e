#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gevd/error.hpp"

namespace gevd {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

struct HashedVector {
    std::vector<double> values;
    [[nodiscard]] std::size_t dim() const { return values.size(); }
};

inline constexpr std::size_t kDefaultApiHashDim = 1280;

/// Hashing trick over a token multiset. Token t contributes sign(t) at
/// index fnv1a64(t) mod dim, where sign is +1 when bit 63 of the hash is
/// clear and -1 otherwise.
inline std::size_t hash_index(std::string_view token, std::size_t dim) {
    return static_cast<std::size_t>(fnv1a64(token) % dim);
}
inline double hash_sign(std::string_view token) { return (fnv1a64(token) >> 63) ? -1.0 : 1.0; }

template <typename Range>
HashedVector hash_features(const Range& tokens, std::size_t dim) {
    if (dim == 0) throw ContractError("hash_features: dim must be positive");
    HashedVector v{std::vector<double>(dim, 0.0)};
    for (const auto& t : tokens) {
        std::uint64_t h = fnv1a64(t);
        v.values[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    return v;
}

} // namespace gevd
