#pragma once

// Reverse-mode differentiation over Tensor-valued nodes.
//
// Every backward rule is itself written with recorded ops, so the gradients
// returned by Tape::grad are ordinary Vars on the same tape and can be
// differentiated again. This is what the gradient-penalty term needs: the
// penalty is a function of d(critic)/d(input), and its gradient with respect
// to the critic parameters is a second derivative.

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gevd/error.hpp"
#include "gevd/nncore/tensor.hpp"

namespace gevd {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] bool valid() const { return tape_ != nullptr; }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Maps the upstream adjoint of a node to one contribution per parent.
/// An invalid Var in the result means "no contribution".
using BackwardFn = std::function<std::vector<Var>(const Var& upstream)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return push(std::move(value), {}, false, nullptr, "constant"); }
    Var variable(Tensor value) { return push(std::move(value), {}, true, nullptr, "variable"); }

    /// Records the result of an op. The node requires a gradient iff any
    /// parent does; otherwise the backward rule is dropped.
    Var record(Tensor value, std::vector<Var> parents, BackwardFn backward, const char* op) {
        bool needs = false;
        std::vector<std::size_t> ids;
        ids.reserve(parents.size());
        for (const Var& p : parents) {
            if (p.tape() != this) throw ContractError(std::string(op) + ": operand from another tape");
            ids.push_back(p.id());
            needs = needs || nodes_[p.id()].requires_grad;
        }
        return push(std::move(value), std::move(ids), needs, needs ? std::move(backward) : nullptr, op);
    }

    [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Gradient of a scalar (single-element) node with respect to each of
    /// `wrt`. Results are recorded on this tape, so grad-of-grad works.
    /// Inputs that do not influence the output get a zero constant.
    std::vector<Var> grad(const Var& output, std::span<const Var> wrt);

    Var grad(const Var& output, const Var& wrt) {
        return grad(output, std::span<const Var>(&wrt, 1)).front();
    }

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> parents;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var push(Tensor value, std::vector<std::size_t> parents, bool requires_grad, BackwardFn backward,
             const char* op) {
        if (!value.all_finite()) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
        nodes_.push_back(Node{std::move(value), std::move(parents), requires_grad, std::move(backward)});
        return Var(this, nodes_.size() - 1);
    }

    // deque keeps value references stable while new nodes are appended
    std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// ---------------------------------------------------------------------------
// Ops. All operate on matrices (rank-1 tensors are treated as one row).
// ---------------------------------------------------------------------------

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_matrix(const Tensor& t) {
    return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

template <typename F>
Tensor map_values(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <typename F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

} // namespace detail

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var sum_rows(const Var& a);
Var broadcast_rows(const Var& v, std::size_t rows);
Var sum_cols(const Var& a);
Var broadcast_cols(const Var& v, std::size_t cols);
Var sum_all(const Var& a);
Var fill_like(const Var& s, std::vector<std::size_t> shape);

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "add");
    Tensor out = detail::zip_values(a.value(), b.value(), [](double x, double y) { return x + y; });
    return a.tape()->record(std::move(out), {a, b},
                            [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "sub");
    Tensor out = detail::zip_values(a.value(), b.value(), [](double x, double y) { return x - y; });
    return a.tape()->record(std::move(out), {a, b},
                            [](const Var& g) { return std::vector<Var>{g, scale(g, -1.0)}; }, "sub");
}

inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "mul");
    Tensor out = detail::zip_values(a.value(), b.value(), [](double x, double y) { return x * y; });
    return a.tape()->record(std::move(out), {a, b},
                            [a, b](const Var& g) { return std::vector<Var>{mul(g, b), mul(g, a)}; },
                            "mul");
}

inline Var scale(const Var& a, double c) {
    Tensor out = detail::map_values(a.value(), [c](double x) { return x * c; });
    return a.tape()->record(std::move(out), {a},
                            [c](const Var& g) { return std::vector<Var>{scale(g, c)}; }, "scale");
}

inline Var add_scalar(const Var& a, double c) {
    Tensor out = detail::map_values(a.value(), [c](double x) { return x + c; });
    return a.tape()->record(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{g}; },
                            "add_scalar");
}

/// Element-wise product with a constant mask (dropout, ReLU gates).
inline Var mask_mul(const Var& a, std::shared_ptr<const Tensor> mask) {
    detail::require_same_shape(a.value(), *mask, "mask_mul");
    Tensor out = detail::zip_values(a.value(), *mask, [](double x, double m) { return x * m; });
    return a.tape()->record(std::move(out), {a},
                            [mask](const Var& g) { return std::vector<Var>{mask_mul(g, mask)}; },
                            "mask_mul");
}

/// Element-wise addition of a constant tensor.
inline Var add_const(const Var& a, const Tensor& c) {
    detail::require_same_shape(a.value(), c, "add_const");
    Tensor out = detail::zip_values(a.value(), c, [](double x, double y) { return x + y; });
    return a.tape()->record(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{g}; },
                            "add_const");
}

inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
    std::vector<std::size_t> original = a.value().shape();
    Tensor out = a.value().reshaped(std::move(shape));
    return a.tape()->record(std::move(out), {a},
                            [original](const Var& g) { return std::vector<Var>{reshape(g, original)}; },
                            "reshape");
}

/// op(A) * op(B) where op transposes when the flag is set.
inline Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    std::size_t a_rows = trans_a ? av.cols() : av.rows();
    std::size_t a_inner = trans_a ? av.rows() : av.cols();
    std::size_t b_inner = trans_b ? bv.cols() : bv.rows();
    std::size_t b_cols = trans_b ? bv.rows() : bv.cols();
    if (a_inner != b_inner) {
        throw DimensionError("matmul: inner dimension mismatch " + av.shape_string() + " vs " +
                             bv.shape_string());
    }
    Tensor out = Tensor::matrix(a_rows, b_cols);
    detail::MutMap o(out.data(), static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(b_cols));
    auto am = detail::as_matrix(av);
    auto bm = detail::as_matrix(bv);
    if (!trans_a && !trans_b) o.noalias() = am * bm;
    else if (!trans_a && trans_b) o.noalias() = am * bm.transpose();
    else if (trans_a && !trans_b) o.noalias() = am.transpose() * bm;
    else o.noalias() = am.transpose() * bm.transpose();

    std::vector<std::size_t> a_shape = av.shape();
    std::vector<std::size_t> b_shape = bv.shape();
    return a.tape()->record(
        std::move(out), {a, b},
        [a, b, trans_a, trans_b, a_shape, b_shape](const Var& g) {
            Var ga, gb;
            if (!trans_a && !trans_b) {
                ga = matmul(g, b, false, true);
                gb = matmul(a, g, true, false);
            } else if (!trans_a && trans_b) {
                ga = matmul(g, b, false, false);
                gb = matmul(g, a, true, false);
            } else if (trans_a && !trans_b) {
                ga = matmul(b, g, false, true);
                gb = matmul(a, g, false, false);
            } else {
                ga = matmul(b, g, true, true);
                gb = matmul(g, a, true, true);
            }
            if (ga.value().shape() != a_shape) ga = reshape(ga, a_shape);
            if (gb.value().shape() != b_shape) gb = reshape(gb, b_shape);
            return std::vector<Var>{ga, gb};
        },
        "matmul");
}

/// Column sums of an (n x m) matrix, as a (1 x m) row.
inline Var sum_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out = Tensor::matrix(1, av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto row = av.row_span(r);
        for (std::size_t c = 0; c < av.cols(); ++c) out[c] += row[c];
    }
    std::size_t n = av.rows();
    std::vector<std::size_t> shape = av.shape();
    return a.tape()->record(std::move(out), {a},
                            [n, shape](const Var& g) {
                                Var b = broadcast_rows(g, n);
                                if (b.value().shape() != shape) b = reshape(b, shape);
                                return std::vector<Var>{b};
                            },
                            "sum_rows");
}

/// Repeats a single row `rows` times.
inline Var broadcast_rows(const Var& v, std::size_t rows) {
    const Tensor& vv = v.value();
    if (vv.rows() != 1) throw DimensionError("broadcast_rows: expected one row, got " + vv.shape_string());
    Tensor out = Tensor::matrix(rows, vv.cols());
    for (std::size_t r = 0; r < rows; ++r) std::copy(vv.data(), vv.data() + vv.cols(), out.row_span(r).begin());
    std::vector<std::size_t> shape = vv.shape();
    return v.tape()->record(std::move(out), {v},
                            [shape](const Var& g) {
                                Var s = sum_rows(g);
                                if (s.value().shape() != shape) s = reshape(s, shape);
                                return std::vector<Var>{s};
                            },
                            "broadcast_rows");
}

/// Row sums of an (n x m) matrix, as an (n x 1) column.
inline Var sum_cols(const Var& a) {
    const Tensor& av = a.value();
    Tensor out = Tensor::matrix(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        for (double x : av.row_span(r)) s += x;
        out[r] = s;
    }
    std::size_t m = av.cols();
    std::vector<std::size_t> shape = av.shape();
    return a.tape()->record(std::move(out), {a},
                            [m, shape](const Var& g) {
                                Var b = broadcast_cols(g, m);
                                if (b.value().shape() != shape) b = reshape(b, shape);
                                return std::vector<Var>{b};
                            },
                            "sum_cols");
}

/// Repeats an (n x 1) column `cols` times.
inline Var broadcast_cols(const Var& v, std::size_t cols) {
    const Tensor& vv = v.value();
    if (vv.cols() != 1) throw DimensionError("broadcast_cols: expected one column, got " + vv.shape_string());
    Tensor out = Tensor::matrix(vv.rows(), cols);
    for (std::size_t r = 0; r < vv.rows(); ++r) {
        auto row = out.row_span(r);
        std::fill(row.begin(), row.end(), vv[r]);
    }
    std::vector<std::size_t> shape = vv.shape();
    return v.tape()->record(std::move(out), {v},
                            [shape](const Var& g) {
                                Var s = sum_cols(g);
                                if (s.value().shape() != shape) s = reshape(s, shape);
                                return std::vector<Var>{s};
                            },
                            "broadcast_cols");
}

inline Var sum_all(const Var& a) {
    std::vector<std::size_t> shape = a.value().shape();
    return a.tape()->record(Tensor::scalar(a.value().sum()), {a},
                            [shape](const Var& g) { return std::vector<Var>{fill_like(g, shape)}; },
                            "sum_all");
}

/// Expands a single-element node to `shape`.
inline Var fill_like(const Var& s, std::vector<std::size_t> shape) {
    if (s.value().size() != 1) throw DimensionError("fill_like: expected a single element");
    Tensor out(shape, s.value()[0]);
    return s.tape()->record(std::move(out), {s}, [](const Var& g) { return std::vector<Var>{sum_all(g)}; },
                            "fill_like");
}

inline Var mean_all(const Var& a) {
    if (a.value().size() == 0) throw ContractError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

inline Var add_bias(const Var& x, const Var& bias) {
    return add(x, broadcast_rows(bias, x.value().rows()));
}

inline Var relu(const Var& a) {
    auto mask = std::make_shared<const Tensor>(detail::map_values(a.value(), [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    return mask_mul(a, std::move(mask));
}

inline Var leaky_relu(const Var& a, double slope) {
    auto mask = std::make_shared<const Tensor>(
        detail::map_values(a.value(), [slope](double x) { return x > 0.0 ? 1.0 : slope; }));
    return mask_mul(a, std::move(mask));
}

inline Var sigmoid(const Var& a) {
    Tensor out = detail::map_values(a.value(), [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    });
    Tape* tape = a.tape();
    std::size_t self = tape->size();
    return tape->record(std::move(out), {a},
                        [tape, self](const Var& g) {
                            Var y(tape, self);
                            // dy/dx = y (1 - y)
                            Var one_minus = add_scalar(scale(y, -1.0), 1.0);
                            return std::vector<Var>{mul(g, mul(y, one_minus))};
                        },
                        "sigmoid");
}

/// log(1 + exp(x)), computed without overflow.
inline Var softplus(const Var& a) {
    Tensor out = detail::map_values(a.value(), [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    });
    return a.tape()->record(std::move(out), {a},
                            [a](const Var& g) { return std::vector<Var>{mul(g, sigmoid(a))}; }, "softplus");
}

/// 1/x, with 0 mapped to 0 (used as the derivative of sqrt at the origin).
inline Var reciprocal_safe(const Var& a) {
    Tensor out = detail::map_values(a.value(), [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
    Tape* tape = a.tape();
    std::size_t self = tape->size();
    return tape->record(std::move(out), {a},
                        [tape, self](const Var& g) {
                            Var r(tape, self);
                            return std::vector<Var>{scale(mul(g, mul(r, r)), -1.0)};
                        },
                        "reciprocal_safe");
}

/// Element-wise sqrt; the derivative at 0 is taken as 0.
inline Var sqrt(const Var& a) {
    Tensor out = detail::map_values(a.value(), [](double x) { return std::sqrt(std::max(x, 0.0)); });
    Tape* tape = a.tape();
    std::size_t self = tape->size();
    return tape->record(std::move(out), {a},
                        [tape, self](const Var& g) {
                            Var y(tape, self);
                            return std::vector<Var>{mul(g, scale(reciprocal_safe(y), 0.5))};
                        },
                        "sqrt");
}

/// Row-wise softmax of an (n x m) matrix.
inline Var softmax_rows(const Var& a) {
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto in = av.row_span(r);
        auto dst = out.row_span(r);
        double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = std::exp(in[c] - mx);
            total += dst[c];
        }
        for (double& v : dst) v /= total;
    }
    Tape* tape = a.tape();
    std::size_t self = tape->size();
    std::size_t m = av.cols();
    return tape->record(std::move(out), {a},
                        [tape, self, m](const Var& g) {
                            Var y(tape, self);
                            // dx = y * (g - rowsum(g * y))
                            Var inner = broadcast_cols(sum_cols(mul(g, y)), m);
                            return std::vector<Var>{mul(y, sub(g, inner))};
                        },
                        "softmax_rows");
}

/// Squared L2 norm of each row, as an (n x 1) column.
inline Var row_sq_norm(const Var& a) { return sum_cols(mul(a, a)); }

inline std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt) {
    if (output.tape() != this) throw ContractError("grad: output belongs to another tape");
    if (value(output.id()).size() != 1) {
        throw ContractError("grad: output must be a scalar, got shape " + value(output.id()).shape_string());
    }
    std::size_t root = output.id();
    std::vector<std::optional<Var>> adjoint(root + 1);
    adjoint[root] = constant(Tensor(value(root).shape(), 1.0));

    for (std::size_t i = root + 1; i-- > 0;) {
        if (!adjoint[i] || !nodes_[i].requires_grad || !nodes_[i].backward) continue;
        std::vector<std::size_t> parents = nodes_[i].parents;
        // copy: backward may append nodes and the rule must outlive that
        BackwardFn rule = nodes_[i].backward;
        std::vector<Var> contributions = rule(*adjoint[i]);
        for (std::size_t k = 0; k < parents.size(); ++k) {
            std::size_t p = parents[k];
            if (!contributions[k].valid() || !nodes_[p].requires_grad) continue;
            adjoint[p] = adjoint[p] ? add(*adjoint[p], contributions[k]) : contributions[k];
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        if (w.tape() != this) throw ContractError("grad: wrt belongs to another tape");
        if (w.id() <= root && adjoint[w.id()]) {
            out.push_back(*adjoint[w.id()]);
        } else {
            out.push_back(constant(Tensor(value(w.id()).shape(), 0.0)));
        }
    }
    return out;
}

} // namespace gevd
