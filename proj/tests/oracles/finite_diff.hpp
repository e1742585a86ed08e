#pragma once

// Central finite differences: an oracle independent of the tape.

#include <algorithm>
#include <cmath>
#include <functional>

#include "gevd/nncore/tensor.hpp"

namespace gevd::oracle {

inline Tensor central_difference(const std::function<double(const Tensor&)>& f, const Tensor& at,
                                 double h = 1e-5) {
    Tensor grad(at.shape());
    Tensor probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        double orig = probe[i];
        probe[i] = orig + h;
        double up = f(probe);
        probe[i] = orig - h;
        double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// ||a - b|| / max(||b||, 1e-12)
inline double relative_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

} // namespace gevd::oracle
