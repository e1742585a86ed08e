#pragma once

// Which feature families a detector consumes and how each is represented.

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/features/extract.hpp"
#include "gevd/features/hashing.hpp"
#include "gevd/features/vocabulary.hpp"

namespace gevd {

enum class Family { bytes, api, strings };
enum class Representation { raw, hashed };

inline std::string to_string(Family f) {
    switch (f) {
    case Family::bytes: return "bytes";
    case Family::api: return "api";
    case Family::strings: return "strings";
    }
    return "unknown";
}
inline Family family_from_string(const std::string& s) {
    if (s == "bytes") return Family::bytes;
    if (s == "api") return Family::api;
    if (s == "strings") return Family::strings;
    throw ConfigError("unknown feature family '" + s + "'");
}
inline std::string to_string(Representation r) { return r == Representation::raw ? "raw" : "hashed"; }
inline Representation representation_from_string(const std::string& s) {
    if (s == "raw" || s == "topk") return Representation::raw;
    if (s == "hashed") return Representation::hashed;
    throw ConfigError("unknown representation '" + s + "'");
}

struct FeatureBlock {
    Family family = Family::bytes;
    Representation representation = Representation::raw;
    std::size_t dim = 256;
    bool operator==(const FeatureBlock&) const = default;
};

/// Blocks are concatenated in declared order.
struct FeatureSpec {
    std::string name;
    std::vector<FeatureBlock> blocks;

    [[nodiscard]] std::size_t dim() const {
        std::size_t d = 0;
        for (const auto& b : blocks) d += b.dim;
        return d;
    }

    bool operator==(const FeatureSpec&) const = default;
};

inline constexpr std::size_t kDefaultStringHashDim = 1024;

namespace specs {
inline FeatureSpec bytes() { return {"bytes", {{Family::bytes, Representation::raw, 256}}}; }
inline FeatureSpec api_topk(std::size_t k) { return {"api_topk", {{Family::api, Representation::raw, k}}}; }
inline FeatureSpec api_hashed(std::size_t dim = kDefaultApiHashDim) {
    return {"api_hashed", {{Family::api, Representation::hashed, dim}}};
}
inline FeatureSpec strings_topk(std::size_t k) { return {"strings_topk", {{Family::strings, Representation::raw, k}}}; }
inline FeatureSpec strings_hashed(std::size_t dim = kDefaultStringHashDim) {
    return {"strings_hashed", {{Family::strings, Representation::hashed, dim}}};
}
/// Byte histogram + hashed imports.
inline FeatureSpec multimodal_v1() {
    return {"multimodal_v1",
            {{Family::bytes, Representation::raw, 256}, {Family::api, Representation::hashed, kDefaultApiHashDim}}};
}
/// Byte histogram + hashed imports + hashed strings.
inline FeatureSpec multimodal_v2() {
    return {"multimodal_v2",
            {{Family::bytes, Representation::raw, 256},
             {Family::api, Representation::hashed, kDefaultApiHashDim},
             {Family::strings, Representation::hashed, kDefaultStringHashDim}}};
}
} // namespace specs

inline nlohmann::json spec_to_json(const FeatureSpec& s) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : s.blocks) {
        blocks.push_back({{"family", to_string(b.family)}, {"representation", to_string(b.representation)}, {"dim", b.dim}});
    }
    return {{"name", s.name}, {"blocks", blocks}};
}

inline FeatureSpec spec_from_json(const nlohmann::json& j) {
    FeatureSpec s;
    s.name = j.at("name").get<std::string>();
    for (const auto& b : j.at("blocks")) {
        s.blocks.push_back({family_from_string(b.at("family").get<std::string>()),
                            representation_from_string(b.at("representation").get<std::string>()),
                            b.at("dim").get<std::size_t>()});
    }
    if (s.blocks.empty()) throw ConfigError("feature spec '" + s.name + "' has no blocks");
    return s;
}

/// Everything extracted from one file, before vectorization.
struct FileFeatures {
    ByteHistogram histogram;
    std::set<std::string> imports;
    std::set<std::string> strings;
};

inline FileFeatures extract_all(const pe::PeImage& image) {
    return {byte_histogram_or_uniform(image.bytes()), extract_imports(image), string_set(image.bytes())};
}

/// Vocabularies for raw (Top-K) blocks.
struct VocabularySet {
    Vocabulary api;
    Vocabulary strings;
};

inline std::vector<double> featurize(const FeatureSpec& spec, const FileFeatures& f, const VocabularySet& vocabs) {
    std::vector<double> out;
    out.reserve(spec.dim());
    for (const auto& b : spec.blocks) {
        std::vector<double> part;
        if (b.family == Family::bytes) {
            if (b.representation != Representation::raw || b.dim != 256) throw ConfigError("byte block must be raw with dim 256");
            part = f.histogram.as_vector();
        } else {
            const auto& tokens = b.family == Family::api ? f.imports : f.strings;
            if (b.representation == Representation::hashed) {
                part = hash_features(tokens, b.dim).values;
            } else {
                const auto& vocab = b.family == Family::api ? vocabs.api : vocabs.strings;
                if (vocab.size() != b.dim) {
                    throw DimensionError("feature spec '" + spec.name + "' expects a " + std::to_string(b.dim) +
                                         "-token vocabulary, got " + std::to_string(vocab.size()));
                }
                part = vectorize(tokens, vocab).bits;
            }
        }
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

} // namespace gevd
