#pragma once

// Turning an adversarial feature vector into a concrete file. Failures here
// never abort a run: the original file is kept and a warning recorded.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gevd/features/spec.hpp"
#include "gevd/padopt/apply.hpp"
#include "gevd/petk/edit.hpp"

namespace gevd {

struct Realized {
    pe::PeImage image;
    std::size_t added = 0; // bytes appended, or features added
    bool modified = false;
    std::vector<std::string> warnings;
};

inline constexpr const char* kStringSectionName = ".gvstr";

/// Pads the overlay so the byte histogram lands within `gap` of `target`.
inline Realized realize_bytes(const pe::PeImage& image, std::span<const double> target, double gap, GapUnits units,
                              std::uint64_t max_padding_bytes, const std::string& id = {}) {
    Realized out{image, 0, false, {}};
    PaddingRequest req = byte_request(image, {target.begin(), target.end()}, gap);
    req.units = units;
    try {
        PaddingPlan plan = plan_padding(req);
        if (plan.total_appended > max_padding_bytes) {
            out.warnings.push_back(id + ": padding plan of " + std::to_string(plan.total_appended) +
                                   " bytes exceeds the cap; file left unchanged");
            return out;
        }
        out.image = append_overlay(image, plan);
        out.added = plan.total_appended;
        out.modified = plan.total_appended > 0;
    } catch (const InfeasibleError& e) {
        out.warnings.push_back(id + ": " + e.what());
    } catch (const RoundingError& e) {
        out.warnings.push_back(id + ": " + e.what());
    } catch (const pe::PeEditError& e) {
        out.warnings.push_back(id + ": " + e.what());
    }
    return out;
}

namespace detail {

inline std::vector<std::string> new_tokens(const std::vector<std::string>& wanted, const std::set<std::string>& have,
                                           std::size_t cap, const std::string& what, const std::string& id,
                                           std::vector<std::string>& warnings) {
    std::vector<std::string> fresh;
    for (const auto& t : wanted) {
        if (!have.count(t)) fresh.push_back(t);
    }
    std::sort(fresh.begin(), fresh.end());
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
    if (fresh.size() > cap) {
        warnings.push_back(id + ": " + std::to_string(fresh.size()) + " new " + what + " exceed the per-file cap of " +
                           std::to_string(cap) + "; truncated");
        fresh.resize(cap);
    }
    return fresh;
}

} // namespace detail

/// Adds every import token in `tokens` that the file does not already import.
inline Realized realize_imports(const pe::PeImage& image, const std::vector<std::string>& tokens,
                                const std::set<std::string>& existing, std::size_t cap, const std::string& id = {}) {
    Realized out{image, 0, false, {}};
    auto fresh = detail::new_tokens(tokens, existing, cap, "imports", id, out.warnings);
    if (fresh.empty()) return out;
    try {
        auto edit = pe::extend_imports(image, std::set<std::string>(fresh.begin(), fresh.end()));
        out.image = std::move(edit.image);
        out.added = edit.added.size();
        out.modified = !edit.added.empty();
    } catch (const pe::PeEditError& e) {
        out.warnings.push_back(id + ": " + e.what());
    }
    return out;
}

/// Writes the missing strings NUL-separated into a new read-only data section.
inline Realized realize_strings(const pe::PeImage& image, const std::vector<std::string>& tokens,
                                const std::set<std::string>& existing, std::size_t cap, const std::string& id = {}) {
    Realized out{image, 0, false, {}};
    auto fresh = detail::new_tokens(tokens, existing, cap, "strings", id, out.warnings);
    if (fresh.empty()) return out;
    std::vector<std::uint8_t> content;
    for (const auto& s : fresh) {
        content.insert(content.end(), s.begin(), s.end());
        content.push_back(0);
    }
    try {
        out.image = pe::add_section(image, kStringSectionName, content, pe::kScnInitializedData | pe::kScnRead).image;
        out.added = fresh.size();
        out.modified = true;
    } catch (const pe::PeEditError& e) {
        out.warnings.push_back(id + ": " + e.what());
    }
    return out;
}

} // namespace gevd
