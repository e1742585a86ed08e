#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/nncore/mlp.hpp"

namespace gevd {

enum class FeatureKind { byte_histogram, api, strings };

inline std::string to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::byte_histogram: return "byte_histogram";
    case FeatureKind::api: return "api";
    case FeatureKind::strings: return "strings";
    }
    return "unknown";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "byte_histogram" || s == "bytes") return FeatureKind::byte_histogram;
    if (s == "api") return FeatureKind::api;
    if (s == "strings") return FeatureKind::strings;
    throw ConfigError("unknown feature kind '" + s + "'");
}

/// Network shapes for one feature family. Hidden lists exclude the output
/// layer: the generator ends in a dense layer of width feature_dim, the
/// critic in a single linear unit.
struct GanPreset {
    FeatureKind kind = FeatureKind::byte_histogram;
    std::size_t feature_dim = 256;
    std::size_t noise_dim = 8;
    std::vector<std::size_t> generator_hidden;
    std::vector<std::size_t> critic_hidden;
    Activation output_activation = Activation::softmax;
    double input_dropout = 0.1;
    double hidden_dropout = 0.5;

    [[nodiscard]] bool binary() const { return kind != FeatureKind::byte_histogram; }

    void validate() const {
        if (feature_dim == 0 || noise_dim == 0) throw ConfigError("gan preset: zero feature or noise dimension");
        if (kind == FeatureKind::byte_histogram) {
            if (feature_dim != 256 || output_activation != Activation::softmax) {
                throw ConfigError("byte preset requires M=256 with a softmax output");
            }
        } else if (output_activation != Activation::sigmoid) {
            throw ConfigError("binary presets require a sigmoid output");
        }
    }

    bool operator==(const GanPreset&) const = default;
};

inline GanPreset byte_preset() {
    return {FeatureKind::byte_histogram, 256, 8, {256, 256}, {128, 64}, Activation::softmax, 0.1, 0.5};
}

/// `feature_dim` defaults to the published 2000-token vocabulary; smaller
/// vocabularies keep the same hidden widths.
inline GanPreset api_preset(std::size_t feature_dim = 2000) {
    return {FeatureKind::api, feature_dim, 128, {2000, 2000}, {500, 300, 100}, Activation::sigmoid, 0.1, 0.5};
}

inline GanPreset strings_preset(std::size_t feature_dim = 2000) {
    return {FeatureKind::strings, feature_dim, 128, {512, 512}, {500, 300, 100}, Activation::sigmoid, 0.1, 0.5};
}

inline GanPreset preset_for(FeatureKind kind, std::size_t feature_dim) {
    switch (kind) {
    case FeatureKind::byte_histogram: return byte_preset();
    case FeatureKind::api: return api_preset(feature_dim);
    case FeatureKind::strings: return strings_preset(feature_dim);
    }
    throw ConfigError("unknown feature kind");
}

inline Mlp build_generator(const GanPreset& p, Rng& rng) {
    std::vector<LayerSpec> specs;
    for (std::size_t h : p.generator_hidden) specs.push_back({h, Activation::relu});
    specs.push_back({p.feature_dim, p.output_activation});
    return make_mlp(p.feature_dim + p.noise_dim, specs, p.input_dropout, p.hidden_dropout, rng);
}

inline Mlp build_critic(const GanPreset& p, Rng& rng) {
    std::vector<LayerSpec> specs;
    for (std::size_t h : p.critic_hidden) specs.push_back({h, Activation::leaky_relu});
    specs.push_back({1, Activation::linear});
    return make_mlp(p.feature_dim, specs, p.input_dropout, p.hidden_dropout, rng);
}

inline nlohmann::json preset_to_json(const GanPreset& p) {
    return {{"kind", to_string(p.kind)},
            {"feature_dim", p.feature_dim},
            {"noise_dim", p.noise_dim},
            {"generator_hidden", p.generator_hidden},
            {"critic_hidden", p.critic_hidden},
            {"output_activation", to_string(p.output_activation)},
            {"input_dropout", p.input_dropout},
            {"hidden_dropout", p.hidden_dropout}};
}

inline GanPreset preset_from_json(const nlohmann::json& j) {
    GanPreset p;
    p.kind = feature_kind_from_string(j.at("kind").get<std::string>());
    p.feature_dim = j.at("feature_dim").get<std::size_t>();
    p.noise_dim = j.at("noise_dim").get<std::size_t>();
    p.generator_hidden = j.at("generator_hidden").get<std::vector<std::size_t>>();
    p.critic_hidden = j.at("critic_hidden").get<std::vector<std::size_t>>();
    p.output_activation = j.at("output_activation").get<std::string>() == "softmax" ? Activation::softmax
                                                                                     : Activation::sigmoid;
    p.input_dropout = j.at("input_dropout").get<double>();
    p.hidden_dropout = j.at("hidden_dropout").get<double>();
    p.validate();
    return p;
}

} // namespace gevd
