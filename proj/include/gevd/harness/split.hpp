#pragma once

// Stratified, seeded train/val/test split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/rng.hpp"

namespace gevd {

enum class Subset : std::uint8_t { train, val, test };

struct SplitIndices {
    std::vector<std::size_t> train, val, test;

    [[nodiscard]] const std::vector<std::size_t>& of(Subset s) const {
        return s == Subset::train ? train : s == Subset::val ? val : test;
    }
};

/// Each label is shuffled and cut on its own so all subsets keep the class
/// ratio. Indices within a subset are ascending.
inline SplitIndices stratified_split(std::span<const int> labels, double train_frac, double val_frac,
                                     std::uint64_t seed) {
    if (train_frac <= 0 || val_frac < 0 || train_frac + val_frac >= 1.0 + 1e-12) {
        throw ConfigError("split: invalid fractions");
    }
    SplitIndices out;
    for (int label : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == label) idx.push_back(i);
        }
        Rng rng(derive_seed(seed, 0x5b17 + static_cast<std::uint64_t>(label)));
        shuffle_in_place(idx, rng);
        const auto n = static_cast<double>(idx.size());
        auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
        auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * n)));
        out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.val.insert(out.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                       idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    }
    for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
    return out;
}

} // namespace gevd
