#pragma once

// Experiment configuration: one versioned JSON document drives a whole run.
// Unknown keys are rejected so typos fail loudly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/baselines/malgan.hpp"
#include "gevd/detectors/detector.hpp"
#include "gevd/error.hpp"
#include "gevd/features/hashing.hpp"
#include "gevd/features/spec.hpp"
#include "gevd/gan/gan.hpp"
#include "gevd/harness/corpus.hpp"
#include "gevd/padopt/padopt.hpp"

namespace gevd {

inline constexpr const char* kConfigSchema = "gevd-experiment/1";

struct CorpusSource {
    std::string kind = "synthetic"; // synthetic | directory
    std::size_t benign = 1000;
    std::size_t malicious = 1000;
    std::size_t text_min = 2048;
    std::size_t text_max = 6144;
    std::optional<nlohmann::json> profiles; // explicit class profiles; default profiles otherwise
    std::string benign_dir;
    std::string malicious_dir;
};

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct FeatureSettings {
    std::size_t api_k = 128;
    std::size_t string_k = 128;
    std::size_t api_hash_dim = kDefaultApiHashDim;
    std::size_t string_hash_dim = kDefaultStringHashDim;
};

struct DetectorEntry {
    std::string name;
    DetectorKind kind = DetectorKind::logreg;
    std::string features; // bytes | api_topk | api_hashed | strings_topk | strings_hashed | multimodal_v1 | multimodal_v2
};

struct AttackEntry {
    std::string name;
    std::string method; // gan | malgan | benign_injection
    Family family = Family::bytes;
    std::string target; // malgan only: detector it queries
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    CorpusSource corpus;
    SplitFractions split;
    FeatureSettings features;
    std::map<Family, TrainingConfig> gan;
    MalganConfig malgan;
    DetectorHyperparams detector;
    double gap = 0.001;
    GapUnits gap_units = GapUnits::ratio;
    std::vector<double> gap_sweep;
    std::size_t gap_subsample = 200;
    std::uint64_t subsample_seed = 200;
    bool exact_comparison = true;
    std::size_t max_new_strings = 4096;
    std::size_t max_new_imports = 2048;
    std::uint64_t max_padding_bytes = 64ull << 20;
    bool write_corpus = false;
    bool write_adversarial = false;
    std::vector<DetectorEntry> detectors;
    std::vector<AttackEntry> attacks;
};

inline std::vector<double> default_gap_sweep() {
    return {0.01, 0.008, 0.005, 0.003, 0.001, 0.0008, 0.0005, 0.0003, 0.0001};
}

/// Desk-scale GAN schedules: short runs need a larger step than the usual
/// WGAN-GP rate of 1e-4 to converge.
inline TrainingConfig default_gan_schedule(Family f) {
    TrainingConfig c;
    c.adam.learning_rate = 1e-3;
    c.max_steps = f == Family::bytes ? 2000 : 300;
    return c;
}

inline ExperimentConfig default_experiment() {
    ExperimentConfig c;
    for (Family f : {Family::bytes, Family::api, Family::strings}) c.gan[f] = default_gan_schedule(f);
    c.gap_sweep = default_gap_sweep();
    c.detectors = {{"bytes_logreg", DetectorKind::logreg, "bytes"},
                   {"bytes_mlp", DetectorKind::mlp, "bytes"},
                   {"api_topk_logreg", DetectorKind::logreg, "api_topk"},
                   {"api_hashed_logreg", DetectorKind::logreg, "api_hashed"},
                   {"strings_topk_logreg", DetectorKind::logreg, "strings_topk"},
                   {"strings_hashed_logreg", DetectorKind::logreg, "strings_hashed"},
                   {"multimodal_v1", DetectorKind::logreg, "multimodal_v1"},
                   {"multimodal_v2", DetectorKind::mlp, "multimodal_v2"}};
    c.attacks = {{"gan_bytes", "gan", Family::bytes, ""},
                 {"gan_api", "gan", Family::api, ""},
                 {"gan_strings", "gan", Family::strings, ""},
                 {"malgan_bytes", "malgan", Family::bytes, "bytes_logreg"},
                 {"malgan_api", "malgan", Family::api, "api_topk_logreg"},
                 {"benign_injection", "benign_injection", Family::bytes, ""}};
    return c;
}

inline FeatureSpec resolve_features(const std::string& name, const FeatureSettings& fs) {
    if (name == "bytes") return specs::bytes();
    if (name == "api_topk") return specs::api_topk(fs.api_k);
    if (name == "api_hashed") return specs::api_hashed(fs.api_hash_dim);
    if (name == "strings_topk") return specs::strings_topk(fs.string_k);
    if (name == "strings_hashed") return specs::strings_hashed(fs.string_hash_dim);
    if (name == "multimodal_v1") {
        return {"multimodal_v1",
                {{Family::bytes, Representation::raw, 256}, {Family::api, Representation::hashed, fs.api_hash_dim}}};
    }
    if (name == "multimodal_v2") {
        return {"multimodal_v2",
                {{Family::bytes, Representation::raw, 256},
                 {Family::api, Representation::hashed, fs.api_hash_dim},
                 {Family::strings, Representation::hashed, fs.string_hash_dim}}};
    }
    throw ConfigError("unknown detector feature set '" + name + "'");
}

/// Feature set a generator for `family` works in.
inline std::string attack_space(Family f) {
    switch (f) {
    case Family::bytes: return "bytes";
    case Family::api: return "api_topk";
    case Family::strings: return "strings_topk";
    }
    return "";
}

inline void validate(const ExperimentConfig& c) {
    if (c.corpus.kind == "synthetic") {
        if (c.corpus.benign == 0 || c.corpus.malicious == 0) throw ConfigError("corpus: both classes need files");
    } else if (c.corpus.kind == "directory") {
        if (c.corpus.benign_dir.empty() || c.corpus.malicious_dir.empty()) {
            throw ConfigError("corpus: directory source needs benign_dir and malicious_dir");
        }
    } else {
        throw ConfigError("corpus: unknown source '" + c.corpus.kind + "'");
    }
    const auto& s = c.split;
    if (s.train <= 0 || s.test <= 0 || s.val < 0) throw ConfigError("split: train and test must be positive, val non-negative");
    if (std::abs(s.train + s.val + s.test - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
    if (c.features.api_k == 0 || c.features.string_k == 0 || c.features.api_hash_dim == 0 || c.features.string_hash_dim == 0) {
        throw ConfigError("features: dimensions must be positive");
    }
    if (!(c.gap > 0)) throw ConfigError("gap must be positive");
    for (double g : c.gap_sweep) {
        if (!(g > 0)) throw ConfigError("gap_sweep: gaps must be positive");
    }
    for (const auto& [f, t] : c.gan) t.validate();
    c.malgan.validate();

    std::set<std::string> names;
    std::map<std::string, const DetectorEntry*> by_name;
    for (const auto& d : c.detectors) {
        if (d.name.empty() || !names.insert(d.name).second) throw ConfigError("detectors: empty or duplicate name '" + d.name + "'");
        (void)resolve_features(d.features, c.features);
        by_name[d.name] = &d;
    }
    names.clear();
    for (const auto& a : c.attacks) {
        if (a.name.empty() || !names.insert(a.name).second) throw ConfigError("attacks: empty or duplicate name '" + a.name + "'");
        if (a.method == "malgan") {
            auto it = by_name.find(a.target);
            if (it == by_name.end()) throw ConfigError("attack '" + a.name + "': unknown target detector '" + a.target + "'");
            if (it->second->features != attack_space(a.family)) {
                throw ConfigError("attack '" + a.name + "': target '" + a.target + "' must consume " + attack_space(a.family));
            }
        } else if (a.method != "gan" && a.method != "benign_injection") {
            throw ConfigError("attack '" + a.name + "': unknown method '" + a.method + "'");
        }
        if (a.method == "gan" && !c.gan.count(a.family)) {
            throw ConfigError("attack '" + a.name + "': no GAN schedule for family " + to_string(a.family));
        }
    }
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline nlohmann::json training_to_json(const TrainingConfig& t) {
    return {{"lambda_gp", t.lambda_gp},
            {"n_generator", t.n_generator},
            {"batch_size", t.batch_size},
            {"num_epochs", t.num_epochs},
            {"max_steps", t.max_steps},
            {"learning_rate", t.adam.learning_rate},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"epsilon", t.adam.epsilon},
            {"early_stop", t.early_stop},
            {"early_stop_window", t.early_stop_window},
            {"early_stop_tolerance", t.early_stop_tolerance},
            {"early_stop_patience", t.early_stop_patience}};
}

inline TrainingConfig training_from_json(const nlohmann::json& j, TrainingConfig t) {
    reject_unknown(j,
                   {"lambda_gp", "n_generator", "batch_size", "num_epochs", "max_steps", "learning_rate", "beta1", "beta2",
                    "epsilon", "early_stop", "early_stop_window", "early_stop_tolerance", "early_stop_patience"},
                   "gan");
    read_opt(j, "lambda_gp", t.lambda_gp);
    read_opt(j, "n_generator", t.n_generator);
    read_opt(j, "batch_size", t.batch_size);
    read_opt(j, "num_epochs", t.num_epochs);
    read_opt(j, "max_steps", t.max_steps);
    read_opt(j, "learning_rate", t.adam.learning_rate);
    read_opt(j, "beta1", t.adam.beta1);
    read_opt(j, "beta2", t.adam.beta2);
    read_opt(j, "epsilon", t.adam.epsilon);
    read_opt(j, "early_stop", t.early_stop);
    read_opt(j, "early_stop_window", t.early_stop_window);
    read_opt(j, "early_stop_tolerance", t.early_stop_tolerance);
    read_opt(j, "early_stop_patience", t.early_stop_patience);
    return t;
}

inline nlohmann::json malgan_to_json(const MalganConfig& m) {
    return {{"max_steps", m.max_steps},         {"batch_size", m.batch_size},
            {"learning_rate", m.adam.learning_rate}, {"beta1", m.adam.beta1},
            {"beta2", m.adam.beta2},             {"query_budget", m.query_budget},
            {"target_detection", m.target_detection}, {"probe_every", m.probe_every},
            {"probe_size", m.probe_size}};
}

inline MalganConfig malgan_from_json(const nlohmann::json& j, MalganConfig m) {
    reject_unknown(j,
                   {"max_steps", "batch_size", "learning_rate", "beta1", "beta2", "query_budget", "target_detection",
                    "probe_every", "probe_size"},
                   "malgan");
    read_opt(j, "max_steps", m.max_steps);
    read_opt(j, "batch_size", m.batch_size);
    read_opt(j, "learning_rate", m.adam.learning_rate);
    read_opt(j, "beta1", m.adam.beta1);
    read_opt(j, "beta2", m.adam.beta2);
    read_opt(j, "query_budget", m.query_budget);
    read_opt(j, "target_detection", m.target_detection);
    read_opt(j, "probe_every", m.probe_every);
    read_opt(j, "probe_size", m.probe_size);
    return m;
}

inline nlohmann::json hyper_to_json(const DetectorHyperparams& h) {
    return {{"epochs", h.epochs}, {"batch_size", h.batch_size}, {"learning_rate", h.learning_rate}, {"l2", h.l2},
            {"hidden", h.hidden}, {"threshold", h.threshold},   {"standardize", h.standardize}};
}

inline DetectorHyperparams hyper_from_json(const nlohmann::json& j, DetectorHyperparams h) {
    reject_unknown(j, {"epochs", "batch_size", "learning_rate", "l2", "hidden", "threshold", "standardize"}, "detector");
    read_opt(j, "epochs", h.epochs);
    read_opt(j, "batch_size", h.batch_size);
    read_opt(j, "learning_rate", h.learning_rate);
    read_opt(j, "l2", h.l2);
    read_opt(j, "hidden", h.hidden);
    read_opt(j, "threshold", h.threshold);
    read_opt(j, "standardize", h.standardize);
    return h;
}

} // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json corpus = {{"source", c.corpus.kind}};
    if (c.corpus.kind == "synthetic") {
        corpus["benign"] = c.corpus.benign;
        corpus["malicious"] = c.corpus.malicious;
        corpus["text_min"] = c.corpus.text_min;
        corpus["text_max"] = c.corpus.text_max;
        if (c.corpus.profiles) corpus["profiles"] = *c.corpus.profiles;
    } else {
        corpus["benign_dir"] = c.corpus.benign_dir;
        corpus["malicious_dir"] = c.corpus.malicious_dir;
    }
    nlohmann::json gan = nlohmann::json::object();
    for (const auto& [f, t] : c.gan) gan[to_string(f)] = detail::training_to_json(t);
    nlohmann::json detectors = nlohmann::json::array();
    for (const auto& d : c.detectors) detectors.push_back({{"name", d.name}, {"kind", to_string(d.kind)}, {"features", d.features}});
    nlohmann::json attacks = nlohmann::json::array();
    for (const auto& a : c.attacks) {
        nlohmann::json e = {{"name", a.name}, {"method", a.method}, {"family", to_string(a.family)}};
        if (!a.target.empty()) e["target"] = a.target;
        attacks.push_back(e);
    }
    return {{"schema", kConfigSchema},
            {"seed", c.seed},
            {"corpus", corpus},
            {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
            {"features",
             {{"api_k", c.features.api_k},
              {"string_k", c.features.string_k},
              {"api_hash_dim", c.features.api_hash_dim},
              {"string_hash_dim", c.features.string_hash_dim}}},
            {"gan", gan},
            {"malgan", detail::malgan_to_json(c.malgan)},
            {"detector", detail::hyper_to_json(c.detector)},
            {"padding",
             {{"gap", c.gap},
              {"units", c.gap_units == GapUnits::ratio ? "ratio" : "count"},
              {"max_padding_bytes", c.max_padding_bytes},
              {"exact_comparison", c.exact_comparison}}},
            {"gap_sweep", {{"gaps", c.gap_sweep}, {"subsample", c.gap_subsample}, {"subsample_seed", c.subsample_seed}}},
            {"caps", {{"max_new_strings", c.max_new_strings}, {"max_new_imports", c.max_new_imports}}},
            {"artifacts", {{"write_corpus", c.write_corpus}, {"write_adversarial", c.write_adversarial}}},
            {"detectors", detectors},
            {"attacks", attacks}};
}

/// Missing sections take the defaults of default_experiment().
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::read_opt;
    try {
        detail::reject_unknown(j,
                               {"schema", "seed", "corpus", "split", "features", "gan", "malgan", "detector", "padding",
                                "gap_sweep", "caps", "artifacts", "detectors", "attacks"},
                               "config");
        if (j.value("schema", std::string(kConfigSchema)) != kConfigSchema) {
            throw ConfigError("config: unsupported schema '" + j.at("schema").get<std::string>() + "' (expected " +
                              kConfigSchema + ")");
        }
        ExperimentConfig c = default_experiment();
        read_opt(j, "seed", c.seed);
        if (j.contains("corpus")) {
            const auto& k = j.at("corpus");
            detail::reject_unknown(k, {"source", "benign", "malicious", "text_min", "text_max", "profiles", "benign_dir",
                                       "malicious_dir"},
                                   "corpus");
            read_opt(k, "source", c.corpus.kind);
            read_opt(k, "benign", c.corpus.benign);
            read_opt(k, "malicious", c.corpus.malicious);
            read_opt(k, "text_min", c.corpus.text_min);
            read_opt(k, "text_max", c.corpus.text_max);
            if (k.contains("profiles")) c.corpus.profiles = k.at("profiles");
            read_opt(k, "benign_dir", c.corpus.benign_dir);
            read_opt(k, "malicious_dir", c.corpus.malicious_dir);
        }
        if (j.contains("split")) {
            const auto& k = j.at("split");
            detail::reject_unknown(k, {"train", "val", "test"}, "split");
            read_opt(k, "train", c.split.train);
            read_opt(k, "val", c.split.val);
            read_opt(k, "test", c.split.test);
        }
        if (j.contains("features")) {
            const auto& k = j.at("features");
            detail::reject_unknown(k, {"api_k", "string_k", "api_hash_dim", "string_hash_dim"}, "features");
            read_opt(k, "api_k", c.features.api_k);
            read_opt(k, "string_k", c.features.string_k);
            read_opt(k, "api_hash_dim", c.features.api_hash_dim);
            read_opt(k, "string_hash_dim", c.features.string_hash_dim);
        }
        if (j.contains("gan")) {
            detail::reject_unknown(j.at("gan"), {"bytes", "api", "strings"}, "gan");
            for (const auto& [key, value] : j.at("gan").items()) {
                Family f = family_from_string(key);
                c.gan[f] = detail::training_from_json(value, c.gan.count(f) ? c.gan[f] : default_gan_schedule(f));
            }
        }
        if (j.contains("malgan")) c.malgan = detail::malgan_from_json(j.at("malgan"), c.malgan);
        if (j.contains("detector")) c.detector = detail::hyper_from_json(j.at("detector"), c.detector);
        if (j.contains("padding")) {
            const auto& k = j.at("padding");
            detail::reject_unknown(k, {"gap", "units", "max_padding_bytes", "exact_comparison"}, "padding");
            read_opt(k, "gap", c.gap);
            if (k.contains("units")) {
                auto u = k.at("units").get<std::string>();
                if (u != "ratio" && u != "count") throw ConfigError("padding: units must be ratio or count");
                c.gap_units = u == "ratio" ? GapUnits::ratio : GapUnits::count;
            }
            read_opt(k, "max_padding_bytes", c.max_padding_bytes);
            read_opt(k, "exact_comparison", c.exact_comparison);
        }
        if (j.contains("gap_sweep")) {
            const auto& k = j.at("gap_sweep");
            detail::reject_unknown(k, {"gaps", "subsample", "subsample_seed"}, "gap_sweep");
            read_opt(k, "gaps", c.gap_sweep);
            read_opt(k, "subsample", c.gap_subsample);
            read_opt(k, "subsample_seed", c.subsample_seed);
        }
        if (j.contains("caps")) {
            const auto& k = j.at("caps");
            detail::reject_unknown(k, {"max_new_strings", "max_new_imports"}, "caps");
            read_opt(k, "max_new_strings", c.max_new_strings);
            read_opt(k, "max_new_imports", c.max_new_imports);
        }
        if (j.contains("artifacts")) {
            const auto& k = j.at("artifacts");
            detail::reject_unknown(k, {"write_corpus", "write_adversarial"}, "artifacts");
            read_opt(k, "write_corpus", c.write_corpus);
            read_opt(k, "write_adversarial", c.write_adversarial);
        }
        if (j.contains("detectors")) {
            c.detectors.clear();
            for (const auto& d : j.at("detectors")) {
                detail::reject_unknown(d, {"name", "kind", "features"}, "detectors[]");
                c.detectors.push_back({d.at("name").get<std::string>(),
                                       detector_kind_from_string(d.value("kind", std::string("logreg"))),
                                       d.at("features").get<std::string>()});
            }
        }
        if (j.contains("attacks")) {
            c.attacks.clear();
            for (const auto& a : j.at("attacks")) {
                detail::reject_unknown(a, {"name", "method", "family", "target"}, "attacks[]");
                c.attacks.push_back({a.at("name").get<std::string>(), a.at("method").get<std::string>(),
                                     family_from_string(a.value("family", std::string("bytes"))),
                                     a.value("target", std::string())});
            }
        }
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// Hash of the canonical (defaults filled) config.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Corpus profiles from JSON

inline ClassProfile profile_from_json(const nlohmann::json& j) {
    detail::reject_unknown(j, {"byte_alpha", "imports", "strings"}, "profile");
    ClassProfile p;
    p.byte_alpha = j.at("byte_alpha").get<std::vector<double>>();
    if (j.contains("imports")) p.imports = j.at("imports").get<std::map<std::string, double>>();
    if (j.contains("strings")) p.strings = j.at("strings").get<std::map<std::string, double>>();
    return p;
}

inline nlohmann::json profile_to_json(const ClassProfile& p) {
    return {{"byte_alpha", p.byte_alpha}, {"imports", p.imports}, {"strings", p.strings}};
}

inline CorpusSpec corpus_spec_of(const CorpusSource& src) {
    CorpusSpec spec = default_corpus_spec(src.benign, src.malicious);
    spec.text_min = src.text_min;
    spec.text_max = src.text_max;
    if (src.profiles) {
        try {
            detail::reject_unknown(*src.profiles, {"benign", "malicious"}, "corpus.profiles");
            spec.benign_profile = profile_from_json(src.profiles->at("benign"));
            spec.malicious_profile = profile_from_json(src.profiles->at("malicious"));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("corpus.profiles: ") + e.what());
        }
    }
    spec.validate();
    return spec;
}

} // namespace gevd
