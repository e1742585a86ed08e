#pragma once

// Straight-line WGAN-GP critic loss for a two-layer leaky-ReLU critic,
// written with plain loops and a hand-derived input gradient. Shares no
// code with the tape.

#include <cmath>
#include <vector>

#include "gevd/nncore/mlp.hpp"

namespace gevd::oracle {

struct TwoLayerCritic {
    std::vector<std::vector<double>> w1; // hidden x in
    std::vector<double> b1;
    std::vector<double> w2; // hidden
    double b2 = 0.0;
    double slope = 0.2;

    explicit TwoLayerCritic(const Mlp& net) {
        const auto& l1 = net.layers.at(0);
        const auto& l2 = net.layers.at(1);
        slope = l1.slope;
        for (std::size_t h = 0; h < l1.out_dim(); ++h) {
            w1.emplace_back();
            for (std::size_t i = 0; i < l1.in_dim(); ++i) w1.back().push_back(l1.weights.at(h, i));
            b1.push_back(l1.biases[h]);
            w2.push_back(l2.weights.at(0, h));
        }
        b2 = l2.biases[0];
    }

    [[nodiscard]] double score(const std::vector<double>& x) const {
        double s = b2;
        for (std::size_t h = 0; h < w1.size(); ++h) {
            double a = b1[h];
            for (std::size_t i = 0; i < x.size(); ++i) a += w1[h][i] * x[i];
            s += w2[h] * (a > 0 ? a : slope * a);
        }
        return s;
    }

    [[nodiscard]] std::vector<double> input_gradient(const std::vector<double>& x) const {
        std::vector<double> g(x.size(), 0.0);
        for (std::size_t h = 0; h < w1.size(); ++h) {
            double a = b1[h];
            for (std::size_t i = 0; i < x.size(); ++i) a += w1[h][i] * x[i];
            double d = w2[h] * (a > 0 ? 1.0 : slope);
            for (std::size_t i = 0; i < x.size(); ++i) g[i] += d * w1[h][i];
        }
        return g;
    }
};

inline double critic_loss(const TwoLayerCritic& f, const std::vector<std::vector<double>>& real,
                          const std::vector<std::vector<double>>& fake, const std::vector<double>& eps,
                          double lambda) {
    double n = static_cast<double>(real.size());
    double fake_mean = 0.0, real_mean = 0.0, penalty = 0.0;
    for (std::size_t k = 0; k < real.size(); ++k) {
        fake_mean += f.score(fake[k]) / n;
        real_mean += f.score(real[k]) / n;
        std::vector<double> mix(real[k].size());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = eps[k] * real[k][i] + (1 - eps[k]) * fake[k][i];
        double sq = 0.0;
        for (double g : f.input_gradient(mix)) sq += g * g;
        double dev = std::sqrt(sq) - 1.0;
        penalty += dev * dev / n;
    }
    return fake_mean - real_mean + lambda * penalty;
}

} // namespace gevd::oracle
