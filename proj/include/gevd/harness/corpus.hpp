#pragma once

// Synthetic two-class PE corpora with planted, separable class signal, plus
// reading and writing corpora as directories with a JSON manifest.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/nncore/checkpoint.hpp"
#include "gevd/nncore/rng.hpp"
#include "gevd/petk/imports.hpp"
#include "gevd/petk/pe_image.hpp"
#include "gevd/petk/synth.hpp"

namespace gevd {

/// Sampling profile of one class.
struct ClassProfile {
    std::vector<double> byte_alpha = std::vector<double>(256, 1.0); // Dirichlet over byte values
    std::map<std::string, double> imports;                          // token -> inclusion probability
    std::map<std::string, double> strings;

    bool operator==(const ClassProfile&) const = default;
};

struct CorpusSpec {
    std::size_t benign = 100;
    std::size_t malicious = 100;
    std::size_t text_min = 2048;
    std::size_t text_max = 6144;
    ClassProfile benign_profile;
    ClassProfile malicious_profile;

    void validate() const {
        if (benign == 0 || malicious == 0) throw ConfigError("corpus spec: both classes need at least one file");
        if (text_min == 0 || text_min > text_max) throw ConfigError("corpus spec: need 0 < text_min <= text_max");
        for (const auto* p : {&benign_profile, &malicious_profile}) {
            if (p->byte_alpha.size() != 256) throw ConfigError("corpus spec: byte_alpha needs 256 entries");
            for (double a : p->byte_alpha) {
                if (!(a > 0.0)) throw ConfigError("corpus spec: Dirichlet parameters must be positive");
            }
            for (const auto* pool : {&p->imports, &p->strings}) {
                for (const auto& [tok, prob] : *pool) {
                    if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("corpus spec: probability out of [0,1] for " + tok);
                }
            }
            for (const auto& [tok, prob] : p->imports) (void)pe::parse_import_token(tok);
            for (const auto& [s, prob] : p->strings) {
                if (s.size() < 5) throw ConfigError("corpus spec: pool string '" + s + "' is shorter than 5 characters");
                for (char c : s) {
                    if (c < 0x20 || c > 0x7E) throw ConfigError("corpus spec: pool strings must be printable ASCII");
                }
            }
        }
    }

    [[nodiscard]] bool degenerate() const { return benign_profile == malicious_profile; }
};

// ---------------------------------------------------------------------------
// Default profiles

namespace detail {

inline const std::vector<std::string>& corpus_libraries() {
    static const std::vector<std::string> libs = {"kernel32.dll", "user32.dll",   "advapi32.dll", "gdi32.dll",
                                                  "shell32.dll",  "ole32.dll",    "ws2_32.dll",   "wininet.dll",
                                                  "crypt32.dll",  "ntdll.dll",    "comctl32.dll", "msvcrt.dll"};
    return libs;
}

/// Deterministic pool of distinct "lib!Function" tokens.
inline std::vector<std::string> synthetic_api_pool(std::size_t n, std::uint64_t stream) {
    static const std::vector<std::string> verbs = {"Get",   "Set",    "Create", "Open",  "Close",  "Read",   "Write",
                                                   "Query", "Delete", "Find",   "Load",  "Enum",   "Register",
                                                   "Map",   "Alloc",  "Free",   "Start", "Inject", "Hook",   "Send"};
    static const std::vector<std::string> nouns = {"File",   "Window",  "Process", "Thread", "Module", "Key",
                                                   "Value",  "Service", "Socket",  "Buffer", "Handle", "Token",
                                                   "Object", "Event",   "Mutex",   "Memory", "Font",   "Icon",
                                                   "Cursor", "Clip",    "Pipe",    "Cert",   "Url",    "Section"};
    static const std::vector<std::string> suffixes = {"", "A", "W", "Ex", "ExA", "ExW"};
    Rng rng(derive_seed(0xA91, stream));
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
        const auto& lib = corpus_libraries()[uniform_index(rng, corpus_libraries().size())];
        std::string fn = verbs[uniform_index(rng, verbs.size())] + nouns[uniform_index(rng, nouns.size())] +
                         nouns[uniform_index(rng, nouns.size())] + suffixes[uniform_index(rng, suffixes.size())];
        std::string tok = pe::import_token(lib, pe::ImportFunction{fn, std::nullopt});
        if (seen.insert(tok).second) out.push_back(tok);
    }
    return out;
}

inline std::vector<std::string> synthetic_string_pool(std::size_t n, std::uint64_t stream) {
    static const std::vector<std::string> words = {"config",  "update",  "server",   "client", "version", "license",
                                                   "window",  "dialog",  "settings", "button", "install", "system",
                                                   "payload", "beacon",  "encrypt",  "bitcoin", "victim", "keylog",
                                                   "shell",   "profile", "document", "network", "service", "manager"};
    static const std::vector<std::string> seps = {" ", "_", "\\", "/", ".", ": "};
    Rng rng(derive_seed(0x57A, stream));
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string s = words[uniform_index(rng, words.size())];
        std::size_t parts = 1 + uniform_index(rng, 3);
        for (std::size_t i = 0; i < parts; ++i) {
            s += seps[uniform_index(rng, seps.size())] + words[uniform_index(rng, words.size())];
        }
        s += std::to_string(uniform_index(rng, 100));
        if (seen.insert(s).second) out.push_back(s);
    }
    return out;
}

inline void add_band(std::vector<double>& alpha, int lo, int hi, double amount) {
    for (int i = lo; i <= hi; ++i) alpha[static_cast<std::size_t>(i)] += amount;
}

} // namespace detail

/// Benign files: opcode-like and text-like bytes, a broad set of common
/// imports and strings. Malicious files: high-entropy bytes concentrated in
/// a band benign files almost never use, fewer common imports, and a pool
/// of imports and strings rare in benign files.
inline CorpusSpec default_corpus_spec(std::size_t benign, std::size_t malicious) {
    CorpusSpec spec;
    spec.benign = benign;
    spec.malicious = malicious;

    auto& ba = spec.benign_profile.byte_alpha;
    ba.assign(256, 0.3);
    detail::add_band(ba, 0x00, 0x0F, 2.0);
    detail::add_band(ba, 0x41, 0x7A, 1.5);
    for (int op : {0x48, 0x89, 0x8B, 0xE8, 0xFF, 0xC3, 0x55, 0x5D}) ba[static_cast<std::size_t>(op)] += 3.0;
    detail::add_band(ba, 0x90, 0xBF, -0.28); // nearly absent band

    auto& ma = spec.malicious_profile.byte_alpha;
    ma.assign(256, 0.3);
    detail::add_band(ma, 0x80, 0xFF, 1.0);
    detail::add_band(ma, 0x90, 0xBF, 2.0);
    detail::add_band(ma, 0x00, 0x0F, 0.5);

    // Imports: common to both, benign-skewed, malicious-skewed.
    auto api = detail::synthetic_api_pool(300, 1);
    Rng rng(derive_seed(0xC0, 7));
    for (std::size_t i = 0; i < api.size(); ++i) {
        double pb, pm;
        if (i < 50) {
            pb = pm = 0.6;
        } else if (i < 200) {
            pb = 0.2 + 0.4 * unit_uniform(rng);
            pm = 0.3 * pb;
        } else {
            pm = 0.2 + 0.3 * unit_uniform(rng);
            pb = 0.02;
        }
        spec.benign_profile.imports[api[i]] = pb;
        spec.malicious_profile.imports[api[i]] = pm;
    }
    auto strs = detail::synthetic_string_pool(300, 2);
    for (std::size_t i = 0; i < strs.size(); ++i) {
        double pb, pm;
        if (i < 50) {
            pb = pm = 0.5;
        } else if (i < 200) {
            pb = 0.15 + 0.4 * unit_uniform(rng);
            pm = 0.3 * pb;
        } else {
            pm = 0.2 + 0.3 * unit_uniform(rng);
            pb = 0.02;
        }
        spec.benign_profile.strings[strs[i]] = pb;
        spec.malicious_profile.strings[strs[i]] = pm;
    }
    return spec;
}

// ---------------------------------------------------------------------------

struct CorpusFile {
    std::string id;
    int label = 0; // 1 = malicious
    std::vector<std::uint8_t> bytes;
};

struct Corpus {
    std::vector<CorpusFile> files;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng) {
    std::vector<double> p(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        std::gamma_distribution<double> g(alpha[i], 1.0);
        p[i] = g(rng);
        total += p[i];
    }
    if (!(total > 0.0)) {
        p.assign(alpha.size(), 1.0 / static_cast<double>(alpha.size()));
        return p;
    }
    for (double& v : p) v /= total;
    return p;
}

inline std::vector<std::uint8_t> sample_bytes(const std::vector<double>& p, std::size_t n, Rng& rng) {
    std::vector<double> cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) {
        double u = unit_uniform(rng) * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        b = static_cast<std::uint8_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), 255));
    }
    return out;
}

inline std::vector<std::string> sample_pool(const std::map<std::string, double>& pool, Rng& rng) {
    std::vector<std::string> out;
    for (const auto& [tok, prob] : pool) {
        if (unit_uniform(rng) < prob) out.push_back(tok);
    }
    return out;
}

inline std::vector<std::uint8_t> synth_file(const CorpusSpec& spec, const ClassProfile& profile, std::uint64_t seed) {
    Rng rng(seed);
    auto dist = sample_dirichlet(profile.byte_alpha, rng);
    std::size_t len = spec.text_min + uniform_index(rng, spec.text_max - spec.text_min + 1);
    pe::SynthSpec s;
    s.seed = seed;
    s.sections.push_back({".text", sample_bytes(dist, len, rng), pe::kScnCode | pe::kScnExecute | pe::kScnRead});
    auto imports = sample_pool(profile.imports, rng);
    if (imports.empty() && !profile.imports.empty()) imports.push_back(profile.imports.begin()->first);
    s.imports = pe::group_tokens(std::set<std::string>(imports.begin(), imports.end()));
    s.strings = sample_pool(profile.strings, rng);
    return pe::synth_pe(s);
}

} // namespace detail

inline std::string corpus_file_id(int label, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", label ? "mal" : "ben", index);
    return buf;
}

/// Benign files first, then malicious; every file strict-parses.
inline Corpus gen_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    spec.validate();
    Corpus c;
    if (spec.degenerate()) c.warnings.push_back("class profiles are identical: the corpus carries no class signal");
    for (int label : {0, 1}) {
        const auto& profile = label ? spec.malicious_profile : spec.benign_profile;
        std::size_t n = label ? spec.malicious : spec.benign;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t file_seed = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(label) + 1), i);
            c.files.push_back({corpus_file_id(label, i), label, detail::synth_file(spec, profile, file_seed)});
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/manifest.json plus one file per sample.

inline constexpr const char* kManifestSchema = "gevd-corpus/1";

inline nlohmann::json write_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                                   const nlohmann::json& provenance = nlohmann::json::object()) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "benign");
    fs::create_directories(dir / "malicious");
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : corpus.files) {
        fs::path rel = fs::path(f.label ? "malicious" : "benign") / (f.id + ".exe");
        binio::write_file((dir / rel).string(), f.bytes);
        files.push_back({{"id", f.id}, {"label", f.label}, {"path", rel.generic_string()}, {"size", f.bytes.size()}});
    }
    nlohmann::json manifest = {{"schema", kManifestSchema}, {"files", files}, {"provenance", provenance},
                               {"warnings", corpus.warnings}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    return manifest;
}

inline Corpus read_corpus(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError("no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corpus manifest: " + std::string(e.what()));
    }
    if (manifest.value("schema", "") != kManifestSchema) throw FormatError("corpus manifest: unsupported schema");
    Corpus c;
    for (const auto& f : manifest.at("files")) {
        c.files.push_back(CorpusFile{f.at("id").get<std::string>(), f.at("label").get<int>(),
                           binio::read_file((dir / f.at("path").get<std::string>()).string())});
    }
    return c;
}

/// User-supplied PEs: every regular file under each directory, sorted by path.
inline Corpus ingest_directories(const std::filesystem::path& benign_dir, const std::filesystem::path& malicious_dir) {
    namespace fs = std::filesystem;
    Corpus c;
    for (int label : {0, 1}) {
        const fs::path& root = label ? malicious_dir : benign_dir;
        if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root.string());
        std::vector<fs::path> paths;
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.is_regular_file()) paths.push_back(e.path());
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& p : paths) {
            auto bytes = binio::read_file(p.string());
            try {
                (void)pe::parse(bytes, pe::ParseMode::lenient);
            } catch (const pe::PeEditError& e) {
                c.warnings.push_back("skipped " + p.string() + ": " + e.message);
                continue;
            }
            c.files.push_back(CorpusFile{(label ? "mal:" : "ben:") + fs::relative(p, root).generic_string(), label, std::move(bytes)});
        }
    }
    return c;
}

} // namespace gevd
