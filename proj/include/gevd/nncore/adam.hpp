#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/tensor.hpp"

namespace gevd {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    long step = 0;
};

/// In-place Adam update with bias correction. Moments are created lazily on
/// the first call.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
    if (state.first_moment.empty()) {
        for (const Tensor* p : params) {
            state.first_moment.emplace_back(p->shape(), 0.0);
            state.second_moment.emplace_back(p->shape(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: state size mismatch");

    ++state.step;
    double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (p.size() != g.size() || state.first_moment[k].size() != p.size()) {
            throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(k));
        }
        Tensor& m = state.first_moment[k];
        Tensor& v = state.second_moment[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double m_hat = c1 > 0.0 ? m[i] / c1 : m[i];
            double v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

} // namespace gevd
