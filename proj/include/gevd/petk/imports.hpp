#pragma once

// Import tokens ("library!function", "library!#ordinal") and the builder for
// a self-contained import directory block.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/petk/pe_image.hpp"

namespace gevd::pe {

struct LibraryImports {
    std::string library;
    std::vector<ImportFunction> functions;
    bool operator==(const LibraryImports&) const = default;
};

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string import_token(const std::string& library, const ImportFunction& fn) {
    if (fn.ordinal) return to_lower(library) + "!#" + std::to_string(*fn.ordinal);
    return to_lower(library) + "!" + to_lower(fn.name);
}

/// Lowercased token set of everything the image imports.
inline std::set<std::string> import_tokens(const PeImage& pe) {
    std::set<std::string> out;
    for (const auto& d : pe.imports) {
        for (const auto& fn : d.functions) out.insert(import_token(d.library, fn));
    }
    return out;
}

namespace detail {
inline bool valid_name(const std::string& s) {
    if (s.empty() || s.size() > 255) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c > 0x20 && c < 0x7F && c != '!'; });
}
} // namespace detail

/// Parses one token; throws ContractError on malformed syntax.
inline std::pair<std::string, ImportFunction> parse_import_token(const std::string& token) {
    auto bang = token.find('!');
    if (bang == std::string::npos) throw ContractError("import token '" + token + "' lacks '!'");
    std::string lib = token.substr(0, bang);
    std::string fn = token.substr(bang + 1);
    if (!detail::valid_name(lib)) throw ContractError("import token '" + token + "' has an invalid library name");
    if (fn.size() > 1 && fn[0] == '#') {
        std::string digits = fn.substr(1);
        if (digits.size() > 5 || !std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw ContractError("import token '" + token + "' has an invalid ordinal");
        }
        unsigned long v = std::stoul(digits);
        if (v > 0xFFFF) throw ContractError("import token '" + token + "' ordinal out of range");
        return {lib, ImportFunction{"", static_cast<std::uint16_t>(v)}};
    }
    if (!detail::valid_name(fn)) throw ContractError("import token '" + token + "' has an invalid function name");
    return {lib, ImportFunction{fn, std::nullopt}};
}

/// Groups tokens by library, sorted by library then token.
inline std::vector<LibraryImports> group_tokens(const std::set<std::string>& tokens) {
    std::map<std::string, std::vector<ImportFunction>> by_lib;
    for (const auto& t : tokens) {
        auto [lib, fn] = parse_import_token(t);
        by_lib[lib].push_back(fn);
    }
    std::vector<LibraryImports> out;
    for (auto& [lib, fns] : by_lib) out.push_back({lib, std::move(fns)});
    return out;
}

using RawDescriptor = std::array<std::uint8_t, kImportDescriptorSize>;

struct ImportBlock {
    std::vector<std::uint8_t> bytes;
    std::uint32_t descriptor_table_size = 0; // includes the null terminator
};

/// Lays out, at `base_rva`: the descriptor table (copied descriptors, then
/// one per new library, then a null entry), per-library ILT and IAT arrays,
/// hint/name entries and library names.
inline ImportBlock build_import_block(std::uint32_t base_rva, const std::vector<RawDescriptor>& existing,
                                      const std::vector<LibraryImports>& libs, bool pe32_plus) {
    const std::size_t thunk = pe32_plus ? 8 : 4;
    const std::uint64_t ordinal_flag = pe32_plus ? 0x8000000000000000ULL : 0x80000000ULL;

    ImportBlock block;
    block.descriptor_table_size = static_cast<std::uint32_t>((existing.size() + libs.size() + 1) * kImportDescriptorSize);
    std::size_t cursor = align_up(block.descriptor_table_size, 8);

    std::vector<std::size_t> ilt(libs.size()), iat(libs.size()), lib_name(libs.size());
    for (std::size_t i = 0; i < libs.size(); ++i) {
        ilt[i] = cursor;
        cursor += (libs[i].functions.size() + 1) * thunk;
        iat[i] = cursor;
        cursor += (libs[i].functions.size() + 1) * thunk;
    }
    std::vector<std::vector<std::size_t>> hint(libs.size());
    for (std::size_t i = 0; i < libs.size(); ++i) {
        for (const auto& fn : libs[i].functions) {
            if (fn.ordinal) {
                hint[i].push_back(0);
                continue;
            }
            cursor = align_up(cursor, 2);
            hint[i].push_back(cursor);
            cursor += 2 + fn.name.size() + 1;
        }
    }
    for (std::size_t i = 0; i < libs.size(); ++i) {
        lib_name[i] = cursor;
        cursor += libs[i].library.size() + 1;
    }
    block.bytes.assign(cursor, 0);
    auto& out = block.bytes;

    for (std::size_t i = 0; i < existing.size(); ++i) {
        std::copy(existing[i].begin(), existing[i].end(), out.begin() + static_cast<std::ptrdiff_t>(i * kImportDescriptorSize));
    }
    for (std::size_t i = 0; i < libs.size(); ++i) {
        std::size_t d = (existing.size() + i) * kImportDescriptorSize;
        write_u32(out, d, static_cast<std::uint32_t>(base_rva + ilt[i]));
        write_u32(out, d + 12, static_cast<std::uint32_t>(base_rva + lib_name[i]));
        write_u32(out, d + 16, static_cast<std::uint32_t>(base_rva + iat[i]));
        for (std::size_t f = 0; f < libs[i].functions.size(); ++f) {
            const auto& fn = libs[i].functions[f];
            std::uint64_t value = fn.ordinal ? (ordinal_flag | *fn.ordinal) : base_rva + hint[i][f];
            write_le(out, ilt[i] + f * thunk, value, thunk);
            write_le(out, iat[i] + f * thunk, value, thunk);
            if (!fn.ordinal) std::copy(fn.name.begin(), fn.name.end(), out.begin() + static_cast<std::ptrdiff_t>(hint[i][f] + 2));
        }
        const auto& name = libs[i].library;
        std::copy(name.begin(), name.end(), out.begin() + static_cast<std::ptrdiff_t>(lib_name[i]));
    }
    return block;
}

} // namespace gevd::pe
