#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/features/hashing.hpp"

namespace gevd {

enum class VocabKind { api, string };

inline std::string to_string(VocabKind k) { return k == VocabKind::api ? "api" : "string"; }
inline VocabKind vocab_kind_from_string(const std::string& s) {
    if (s == "api") return VocabKind::api;
    if (s == "string" || s == "strings") return VocabKind::string;
    throw FormatError("unknown vocabulary kind '" + s + "'");
}

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(VocabKind kind, std::vector<std::string> entries, std::string provenance)
        : kind_(kind), entries_(std::move(entries)), provenance_(std::move(provenance)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!index_.emplace(entries_[i], i).second) throw ContractError("vocabulary: duplicate token '" + entries_[i] + "'");
        }
    }

    [[nodiscard]] VocabKind kind() const { return kind_; }
    [[nodiscard]] const std::vector<std::string>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] const std::string& provenance() const { return provenance_; }
    /// Identifier tying indicator vectors to this vocabulary.
    [[nodiscard]] std::string id() const {
        std::uint64_t h = fnv1a64(to_string(kind_));
        for (const auto& e : entries_) h = fnv1a64(e, fnv1a64("\n", h));
        return hex64(h);
    }

    [[nodiscard]] std::ptrdiff_t index_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
    }

    bool truncated = false; // fewer distinct tokens than requested K

    bool operator==(const Vocabulary& o) const {
        return kind_ == o.kind_ && entries_ == o.entries_ && provenance_ == o.provenance_;
    }

private:
    VocabKind kind_ = VocabKind::api;
    std::vector<std::string> entries_;
    std::string provenance_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Order-independent fingerprint of a corpus of token sets.
inline std::string corpus_hash(const std::vector<std::set<std::string>>& docs) {
    std::vector<std::uint64_t> doc_hashes;
    doc_hashes.reserve(docs.size());
    for (const auto& d : docs) {
        std::uint64_t h = kFnvOffset;
        for (const auto& t : d) h = fnv1a64(t, fnv1a64("\n", h));
        doc_hashes.push_back(h);
    }
    std::sort(doc_hashes.begin(), doc_hashes.end());
    std::uint64_t h = kFnvOffset;
    for (auto d : doc_hashes) h = fnv1a64(hex64(d), h);
    return hex64(h);
}

/// Top-K tokens by document frequency in the benign corpus; ties break
/// lexicographically.
inline Vocabulary select_topk(const std::vector<std::set<std::string>>& benign_docs, std::size_t k, VocabKind kind) {
    if (benign_docs.empty()) throw ContractError("select_topk: empty corpus");
    if (k == 0) throw ContractError("select_topk: K must be positive");
    std::map<std::string, std::size_t> df;
    for (const auto& d : benign_docs) {
        for (const auto& t : d) ++df[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    bool truncated = ranked.size() < k;
    ranked.resize(std::min(k, ranked.size()));
    std::vector<std::string> entries;
    for (auto& [t, _] : ranked) entries.push_back(t);
    Vocabulary v(kind, std::move(entries), corpus_hash(benign_docs));
    v.truncated = truncated;
    return v;
}

struct IndicatorVector {
    std::vector<double> bits; // 0.0 / 1.0
    std::string vocab_id;
};

template <typename Range>
IndicatorVector vectorize(const Range& tokens, const Vocabulary& vocab) {
    if (vocab.size() == 0) throw ContractError("vectorize: empty vocabulary");
    IndicatorVector v{std::vector<double>(vocab.size(), 0.0), vocab.id()};
    for (const auto& t : tokens) {
        auto i = vocab.index_of(t);
        if (i >= 0) v.bits[static_cast<std::size_t>(i)] = 1.0;
    }
    return v;
}

/// Tokens whose indicator bit is set.
inline std::vector<std::string> tokens_of(const std::vector<double>& bits, const Vocabulary& vocab) {
    if (bits.size() != vocab.size()) throw DimensionError("tokens_of: vector/vocabulary size mismatch");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] > 0.5) out.push_back(vocab.entries()[i]);
    }
    return out;
}

// Vocabulary file: a header line "#gevd-vocab kind=<k> K=<n> corpus=<hex>"
// followed by one token per line.
inline std::string encode_vocabulary(const Vocabulary& v) {
    std::ostringstream os;
    os << "#gevd-vocab kind=" << to_string(v.kind()) << " K=" << v.size() << " corpus=" << v.provenance() << "\n";
    for (const auto& e : v.entries()) os << e << "\n";
    return os.str();
}

inline Vocabulary decode_vocabulary(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    if (!std::getline(is, header) || header.rfind("#gevd-vocab ", 0) != 0) throw FormatError("vocabulary: missing header");
    std::map<std::string, std::string> fields;
    std::istringstream hs(header.substr(12));
    for (std::string kv; hs >> kv;) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw FormatError("vocabulary: malformed header field '" + kv + "'");
        fields[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (!fields.count("kind") || !fields.count("K") || !fields.count("corpus")) throw FormatError("vocabulary: incomplete header");
    std::vector<std::string> entries;
    for (std::string line; std::getline(is, line);) entries.push_back(line);
    if (std::to_string(entries.size()) != fields["K"]) throw FormatError("vocabulary: K does not match entry count");
    return Vocabulary(vocab_kind_from_string(fields["kind"]), std::move(entries), fields["corpus"]);
}

inline void save_vocabulary(const std::string& path, const Vocabulary& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << encode_vocabulary(v);
}

inline Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return decode_vocabulary(ss.str());
}

} // namespace gevd
