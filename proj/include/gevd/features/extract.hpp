#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/tensor.hpp"
#include "gevd/petk/imports.hpp"

namespace gevd {

/// Raised by byte_histogram on zero-length input.
class EmptyFileError : public Error {
public:
    EmptyFileError() : Error("byte_histogram: empty file") {}
};

struct ByteHistogram {
    std::array<double, 256> freq{};
    std::array<std::uint64_t, 256> counts{};
    std::uint64_t total_bytes = 0;
    bool empty_input = false; // uniform by convention

    [[nodiscard]] std::vector<double> as_vector() const { return {freq.begin(), freq.end()}; }
};

inline ByteHistogram histogram_from_counts(const std::array<std::uint64_t, 256>& counts) {
    ByteHistogram h;
    h.counts = counts;
    for (auto c : counts) h.total_bytes += c;
    if (h.total_bytes == 0) throw EmptyFileError();
    for (std::size_t i = 0; i < 256; ++i) {
        h.freq[i] = static_cast<double>(counts[i]) / static_cast<double>(h.total_bytes);
    }
    return h;
}

inline ByteHistogram byte_histogram(std::span<const std::uint8_t> bytes) {
    std::array<std::uint64_t, 256> counts{};
    for (auto b : bytes) ++counts[b];
    return histogram_from_counts(counts);
}

/// Empty input maps to the uniform distribution with `empty_input` set.
inline ByteHistogram byte_histogram_or_uniform(std::span<const std::uint8_t> bytes) {
    if (!bytes.empty()) return byte_histogram(bytes);
    ByteHistogram h;
    h.freq.fill(1.0 / 256.0);
    h.empty_input = true;
    return h;
}

inline std::set<std::string> extract_imports(const pe::PeImage& image) { return pe::import_tokens(image); }

inline constexpr std::size_t kDefaultMinStringLength = 5;

/// Maximal runs of printable ASCII (0x20..0x7E) of at least min_len bytes, in
/// file order (a multiset).
inline std::vector<std::string> extract_strings(std::span<const std::uint8_t> bytes,
                                                std::size_t min_len = kDefaultMinStringLength) {
    if (min_len == 0) throw ContractError("extract_strings: min_len must be at least 1");
    std::vector<std::string> out;
    std::string run;
    auto flush = [&] {
        if (run.size() >= min_len) out.push_back(run);
        run.clear();
    };
    for (auto b : bytes) {
        if (b >= 0x20 && b <= 0x7E) {
            run.push_back(static_cast<char>(b));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

inline std::set<std::string> string_set(std::span<const std::uint8_t> bytes,
                                        std::size_t min_len = kDefaultMinStringLength) {
    auto all = extract_strings(bytes, min_len);
    return {all.begin(), all.end()};
}

} // namespace gevd
