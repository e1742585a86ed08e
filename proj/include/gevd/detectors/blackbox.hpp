#pragma once

// The only view of a detector that attacks are allowed to hold: a label
// for a feature vector, with every call counted.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/tensor.hpp"

namespace gevd {

enum class Label : std::uint8_t { benign = 0, malicious = 1 };

class LabelOracle {
public:
    using Fn = std::function<Label(std::span<const double>)>;

    LabelOracle(Fn fn, std::size_t input_dim) : fn_(std::move(fn)), dim_(input_dim) {}

    Label query(std::span<const double> x) {
        if (x.size() != dim_) throw DimensionError("label oracle: expected dim " + std::to_string(dim_));
        ++queries_;
        return fn_(x);
    }

    /// One query per row.
    std::vector<Label> query_batch(const Tensor& rows) {
        std::vector<Label> out;
        out.reserve(rows.rows());
        for (std::size_t r = 0; r < rows.rows(); ++r) out.push_back(query(rows.row_span(r)));
        return out;
    }

    [[nodiscard]] std::uint64_t query_count() const { return queries_; }
    [[nodiscard]] std::size_t input_dim() const { return dim_; }

private:
    Fn fn_;
    std::size_t dim_;
    std::uint64_t queries_ = 0;
};

} // namespace gevd
