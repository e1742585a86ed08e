#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/rng.hpp"
#include "gevd/nncore/tape.hpp"
#include "gevd/nncore/tensor.hpp"

namespace gevd {

enum class Activation : std::uint8_t { linear = 0, relu = 1, leaky_relu = 2, sigmoid = 3, softmax = 4 };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    }
    return "unknown";
}

inline constexpr double kLeakySlope = 0.2;

struct DenseLayer {
    Tensor weights; // (out x in)
    Tensor biases;  // (out)
    Activation activation = Activation::linear;
    double slope = kLeakySlope; // only read for leaky_relu

    [[nodiscard]] std::size_t in_dim() const { return weights.cols(); }
    [[nodiscard]] std::size_t out_dim() const { return weights.rows(); }

    void validate() const {
        if (weights.shape().size() != 2 || biases.size() != weights.rows()) {
            throw DimensionError("dense layer: weights " + weights.shape_string() + " incompatible with biases " +
                                 biases.shape_string());
        }
        if (activation == Activation::leaky_relu && !(slope > 0.0 && slope < 1.0)) {
            throw ContractError("dense layer: leaky_relu slope must lie in (0,1)");
        }
    }

    bool operator==(const DenseLayer&) const = default;
};

/// Layer spec used to build fresh networks.
struct LayerSpec {
    std::size_t out = 0;
    Activation activation = Activation::linear;
};

/// Feed-forward network. Dropout sits in front of every dense layer: the
/// first uses input_dropout_rate, the rest use hidden_dropout_rate.
struct Mlp {
    std::vector<DenseLayer> layers;
    double input_dropout_rate = 0.0;
    double hidden_dropout_rate = 0.0;

    [[nodiscard]] std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    [[nodiscard]] std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    [[nodiscard]] double dropout_rate(std::size_t layer) const {
        return layer == 0 ? input_dropout_rate : hidden_dropout_rate;
    }

    void validate() const {
        if (layers.empty()) throw ContractError("mlp: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].validate();
            if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
                throw DimensionError("mlp: layer " + std::to_string(i) + " expects " +
                                     std::to_string(layers[i].in_dim()) + " inputs but previous layer emits " +
                                     std::to_string(layers[i - 1].out_dim()));
            }
        }
        for (double r : {input_dropout_rate, hidden_dropout_rate}) {
            if (!(r >= 0.0 && r < 1.0)) throw ContractError("mlp: dropout rate outside [0,1)");
        }
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& l : layers) {
            out.push_back(&l.weights);
            out.push_back(&l.biases);
        }
        return out;
    }

    [[nodiscard]] std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> out;
        for (const auto& l : layers) {
            out.push_back(&l.weights);
            out.push_back(&l.biases);
        }
        return out;
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size() + l.biases.size();
        return n;
    }

    bool operator==(const Mlp&) const = default;
};

/// Glorot-uniform weights, zero biases.
inline Mlp make_mlp(std::size_t in_dim, const std::vector<LayerSpec>& specs, double input_dropout,
                    double hidden_dropout, Rng& rng) {
    Mlp net;
    net.input_dropout_rate = input_dropout;
    net.hidden_dropout_rate = hidden_dropout;
    std::size_t prev = in_dim;
    for (const auto& s : specs) {
        DenseLayer layer;
        layer.weights = Tensor::matrix(s.out, prev);
        double bound = std::sqrt(6.0 / static_cast<double>(prev + s.out));
        for (double& w : layer.weights.values()) w = (2.0 * unit_uniform(rng) - 1.0) * bound;
        layer.biases = Tensor({s.out}, 0.0);
        layer.activation = s.activation;
        net.layers.push_back(std::move(layer));
        prev = s.out;
    }
    net.validate();
    return net;
}

/// One mask per dense layer input, each (batch x in_dim), entries 0 or
/// 1/(1-rate). A null entry means no dropout at that position.
struct DropoutMasks {
    std::vector<std::shared_ptr<const Tensor>> masks;
};

inline DropoutMasks sample_dropout(const Mlp& net, std::size_t batch, Rng& rng) {
    DropoutMasks out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        double rate = net.dropout_rate(i);
        if (rate <= 0.0) {
            out.masks.push_back(nullptr);
            continue;
        }
        Tensor m = Tensor::matrix(batch, net.layers[i].in_dim());
        double keep = 1.0 - rate;
        for (double& v : m.values()) v = unit_uniform(rng) < keep ? 1.0 / keep : 0.0;
        out.masks.push_back(std::make_shared<const Tensor>(std::move(m)));
    }
    return out;
}

/// Parameters of a network placed on a tape.
struct BoundMlp {
    const Mlp* net = nullptr;
    std::vector<Var> weights;
    std::vector<Var> biases;

    [[nodiscard]] std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(weights[i]);
            out.push_back(biases[i]);
        }
        return out;
    }
};

/// Places `net` on the tape; trainable parameters become gradient leaves.
inline BoundMlp bind(Tape& tape, const Mlp& net, bool trainable) {
    BoundMlp b;
    b.net = &net;
    for (const auto& l : net.layers) {
        b.weights.push_back(trainable ? tape.variable(l.weights) : tape.constant(l.weights));
        b.biases.push_back(trainable ? tape.variable(l.biases) : tape.constant(l.biases));
    }
    return b;
}

inline Var apply_activation(const Var& x, Activation a, double slope) {
    switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, slope);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softmax: return softmax_rows(x);
    }
    throw ContractError("unknown activation");
}

/// Recorded forward pass. `masks` may be null (eval mode).
inline Var forward(const BoundMlp& bound, const Var& input, const DropoutMasks* masks) {
    const Mlp& net = *bound.net;
    if (input.value().cols() != net.in_dim()) {
        throw DimensionError("forward: input has " + std::to_string(input.value().cols()) +
                             " features, network expects " + std::to_string(net.in_dim()));
    }
    Var h = input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (masks && i < masks->masks.size() && masks->masks[i]) {
            if (masks->masks[i]->rows() != h.value().rows()) {
                throw DimensionError("forward: dropout mask batch size differs from input");
            }
            h = mask_mul(h, masks->masks[i]);
        }
        const auto& layer = net.layers[i];
        h = add_bias(matmul(h, bound.weights[i], false, true), bound.biases[i]);
        h = apply_activation(h, layer.activation, layer.slope);
    }
    return h;
}

struct ForwardMode {
    bool train = false;
    std::uint64_t seed = 0;

    static ForwardMode eval() { return {}; }
    static ForwardMode training(std::uint64_t seed) { return {true, seed}; }
};

/// Stand-alone forward pass. Input may be a single row (rank 1) or a batch.
inline Tensor forward(const Mlp& net, const Tensor& input, ForwardMode mode = ForwardMode::eval()) {
    Tape tape;
    BoundMlp bound = bind(tape, net, false);
    Tensor batch = input.shape().size() == 1 ? input.reshaped({1, input.cols()}) : input;
    if (mode.train) {
        Rng rng(mode.seed);
        DropoutMasks masks = sample_dropout(net, batch.rows(), rng);
        return forward(bound, tape.constant(std::move(batch)), &masks).value();
    }
    return forward(bound, tape.constant(std::move(batch)), nullptr).value();
}

} // namespace gevd
