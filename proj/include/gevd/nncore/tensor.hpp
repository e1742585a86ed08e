#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gevd/error.hpp"

namespace gevd {

/// Dense row-major float64 array. Every operation in the library treats a
/// tensor as a matrix: rank-1 tensors are a single row, rank-2 tensors are
/// (rows x cols). Higher ranks are representable but unused by the ops.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({1, n}, std::move(values));
    }

    static Tensor vector(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

    [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::size_t rows() const {
        if (shape_.empty()) return 0;
        if (shape_.size() == 1) return 1;
        return shape_[0];
    }
    [[nodiscard]] std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    [[nodiscard]] double* data() { return data_.data(); }
    [[nodiscard]] const double* data() const { return data_.data(); }
    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }
    [[nodiscard]] const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    [[nodiscard]] std::span<const double> row_span(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * cols(), cols());
    }
    [[nodiscard]] std::span<double> row_span(std::size_t r) {
        return std::span<double>(data_).subspan(r * cols(), cols());
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    [[nodiscard]] double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    [[nodiscard]] bool same_shape(const Tensor& other) const {
        return rows() == other.rows() && cols() == other.cols();
    }

    [[nodiscard]] std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ',';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

    Tensor reshaped(std::vector<std::size_t> shape) const {
        return Tensor(std::move(shape), data_);
    }

    bool operator==(const Tensor& other) const = default;

private:
    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return 0;
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Stacks equally sized rows into a (n x d) matrix.
inline Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Tensor::matrix(0, 0);
    std::size_t d = rows.front().size();
    Tensor out = Tensor::matrix(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw DimensionError("stack_rows: ragged input");
        std::copy(rows[i].begin(), rows[i].end(), out.row_span(i).begin());
    }
    return out;
}

/// Horizontal concatenation [a | b] of two matrices with equal row count.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
    Tensor out = Tensor::matrix(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row_span(r);
        std::copy(a.row_span(r).begin(), a.row_span(r).end(), dst.begin());
        std::copy(b.row_span(r).begin(), b.row_span(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

} // namespace gevd
