#pragma once

// Editors. Each takes an image by const reference, rewrites a copy of its
// bytes and returns the re-parsed result.

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gevd/petk/imports.hpp"
#include "gevd/petk/pe_image.hpp"

namespace gevd::pe {

struct EditOptions {
    bool allow_header_shift = true;
    bool recompute_checksum = false;
};

using ByteCounts = std::array<std::uint64_t, 256>;

/// Appends counts[v] copies of each byte value v, values ascending.
inline PeImage append_overlay(const PeImage& pe, const ByteCounts& counts) {
    std::vector<std::uint8_t> bytes = pe.bytes();
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    bytes.reserve(bytes.size() + total);
    for (std::size_t v = 0; v < 256; ++v) bytes.insert(bytes.end(), counts[v], static_cast<std::uint8_t>(v));
    return parse(std::move(bytes), pe.mode);
}

/// Appends raw bytes after the current end of file.
inline PeImage append_bytes(const PeImage& pe, std::span<const std::uint8_t> tail) {
    std::vector<std::uint8_t> bytes = pe.bytes();
    bytes.insert(bytes.end(), tail.begin(), tail.end());
    return parse(std::move(bytes), pe.mode);
}

struct SectionEdit {
    PeImage image;
    std::uint32_t header_shift = 0; // bytes inserted after the headers
};

namespace detail {

inline void finish_headers(std::vector<std::uint8_t>& bytes, const HeaderLayout& L, const EditOptions& opt) {
    write_u32(bytes, L.checksum_offset, 0);
    if (opt.recompute_checksum) write_u32(bytes, L.checksum_offset, compute_checksum(bytes, L.checksum_offset));
}

} // namespace detail

/// Adds a final section holding `content` padded to the file alignment. When
/// the section table has no free slot the headers grow by whole file
/// alignment units and every section's raw data moves down (if allowed).
inline SectionEdit add_section(const PeImage& pe, const std::string& name, std::span<const std::uint8_t> content,
                               std::uint32_t characteristics, const EditOptions& opt = {}) {
    const auto& L = pe.layout;
    if (name.empty() || name.size() > 8) {
        throw PeEditError(ErrorKind::invariant, L.section_table_offset, "section name must be 1..8 bytes");
    }
    if (pe.sections.size() >= kMaxSections) {
        throw PeEditError(ErrorKind::capacity, L.coff_offset + 2, "section count limit reached");
    }
    const std::uint32_t fa = pe.optional.file_alignment;
    const std::uint32_t sa = pe.optional.section_alignment;
    std::vector<std::uint8_t> bytes = pe.bytes();

    std::uint64_t table_end = L.section_table_offset + pe.sections.size() * kSectionHeaderSize;
    std::uint64_t need = table_end + kSectionHeaderSize;
    std::uint64_t soh = pe.optional.size_of_headers;
    bool slot_free = need <= soh;
    for (std::uint64_t i = table_end; slot_free && i < need; ++i) slot_free = bytes[i] == 0;

    std::uint32_t shift = 0;
    if (!slot_free) {
        if (!opt.allow_header_shift) {
            throw PeEditError(ErrorKind::capacity, table_end, "no free section table slot and header shift disabled");
        }
        std::uint64_t new_soh = align_up(std::max(need, soh), fa);
        if (new_soh == soh) new_soh += fa;
        std::uint64_t first_va = UINT64_MAX;
        for (const auto& s : pe.sections) first_va = std::min<std::uint64_t>(first_va, s.virtual_address);
        if (!pe.sections.empty() && align_up(new_soh, sa) > first_va) {
            throw PeEditError(ErrorKind::capacity, L.optional_offset + 60,
                              "headers cannot grow without overlapping the first section's virtual range");
        }
        shift = static_cast<std::uint32_t>(new_soh - soh);
        bytes.insert(bytes.begin() + static_cast<std::ptrdiff_t>(soh), shift, 0);
        std::fill(bytes.begin() + static_cast<std::ptrdiff_t>(table_end), bytes.begin() + static_cast<std::ptrdiff_t>(new_soh), 0);
        for (std::size_t i = 0; i < pe.sections.size(); ++i) {
            std::size_t h = L.section_table_offset + i * kSectionHeaderSize;
            std::uint32_t ptr = pe.sections[i].pointer_to_raw_data;
            if (ptr != 0) write_u32(bytes, h + 20, ptr + shift);
        }
        std::uint32_t symtab = read_u32(bytes, L.coff_offset + 8);
        if (symtab != 0 && symtab >= soh) write_u32(bytes, L.coff_offset + 8, symtab + shift);
        write_u32(bytes, L.optional_offset + 60, static_cast<std::uint32_t>(new_soh));
    }

    std::uint64_t overlay_at = pe.overlay_offset() + shift;
    std::uint64_t raw_ptr = align_up(overlay_at, fa);
    std::uint64_t raw_size = align_up(std::max<std::uint64_t>(content.size(), 1), fa);
    std::uint32_t vsize = content.empty() ? fa : static_cast<std::uint32_t>(content.size());
    std::uint32_t va = pe.next_section_rva();
    if (raw_ptr + raw_size > UINT32_MAX || static_cast<std::uint64_t>(va) + vsize > UINT32_MAX) {
        throw PeEditError(ErrorKind::capacity, raw_ptr, "image exceeds 32-bit limits");
    }

    std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(overlay_at));
    out.resize(raw_ptr, 0);
    out.insert(out.end(), content.begin(), content.end());
    out.resize(raw_ptr + raw_size, 0);
    out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(overlay_at), bytes.end());

    std::size_t h = table_end;
    for (std::size_t i = 0; i < 8; ++i) out[h + i] = i < name.size() ? static_cast<std::uint8_t>(name[i]) : 0;
    write_u32(out, h + 8, vsize);
    write_u32(out, h + 12, va);
    write_u32(out, h + 16, static_cast<std::uint32_t>(raw_size));
    write_u32(out, h + 20, static_cast<std::uint32_t>(raw_ptr));
    for (std::size_t i = 24; i < 36; ++i) out[h + i] = 0;
    write_u32(out, h + 36, characteristics);

    write_u16(out, L.coff_offset + 2, static_cast<std::uint16_t>(pe.sections.size() + 1));
    write_u32(out, L.optional_offset + 56, static_cast<std::uint32_t>(align_up(static_cast<std::uint64_t>(va) + vsize, sa)));
    if (characteristics & kScnCode) {
        write_u32(out, L.optional_offset + 4, pe.optional.size_of_code + static_cast<std::uint32_t>(raw_size));
    }
    if (characteristics & kScnInitializedData) {
        write_u32(out, L.optional_offset + 8,
                  pe.optional.size_of_initialized_data + static_cast<std::uint32_t>(raw_size));
    }
    detail::finish_headers(out, L, opt);
    return {parse(std::move(out), pe.mode), shift};
}

struct ImportEdit {
    PeImage image;
    std::vector<std::string> added;   // tokens written, sorted
    std::vector<std::string> skipped; // already imported
    std::uint32_t header_shift = 0;
};

inline constexpr const char* kImportSectionName = ".gvimp";

/// Rebuilds the import directory in a new section: the original descriptors
/// are copied verbatim and new libraries/functions appended. The old
/// directory stays in place, unreferenced.
inline ImportEdit extend_imports(const PeImage& pe, const std::set<std::string>& tokens, const EditOptions& opt = {}) {
    if (pe.optional.data_directories.size() <= kDirImport) {
        throw PeEditError(ErrorKind::capacity, pe.layout.data_directory_offset, "image has no import data directory slot");
    }
    std::set<std::string> existing = import_tokens(pe);
    std::set<std::string> fresh;
    ImportEdit result{pe, {}, {}, 0};
    for (const auto& t : tokens) {
        auto [lib, fn] = parse_import_token(t);
        std::string canonical = import_token(lib, fn);
        if (existing.count(canonical) || fresh.count(canonical)) {
            result.skipped.push_back(t);
        } else {
            fresh.insert(canonical);
        }
    }
    result.added.assign(fresh.begin(), fresh.end());

    std::vector<RawDescriptor> copied;
    for (const auto& d : pe.imports) {
        RawDescriptor raw{};
        std::copy_n(pe.bytes().begin() + static_cast<std::ptrdiff_t>(d.descriptor_offset), kImportDescriptorSize, raw.begin());
        copied.push_back(raw);
    }
    std::uint32_t base = pe.next_section_rva();
    ImportBlock block = build_import_block(base, copied, group_tokens(fresh), pe.optional.pe32_plus());

    SectionEdit added = add_section(pe, kImportSectionName, block.bytes, kScnInitializedData | kScnRead | kScnWrite, opt);
    if (added.image.sections.back().virtual_address != base) {
        throw PeEditError(ErrorKind::invariant, added.image.layout.section_table_offset, "import section placed at unexpected RVA");
    }
    std::vector<std::uint8_t> bytes = added.image.bytes();
    const auto& L = added.image.layout;
    write_u32(bytes, L.data_directory_offset + 8 * kDirImport, base);
    write_u32(bytes, L.data_directory_offset + 8 * kDirImport + 4, block.descriptor_table_size);
    if (added.image.optional.data_directories.size() > kDirBoundImport) {
        write_u32(bytes, L.data_directory_offset + 8 * kDirBoundImport, 0);
        write_u32(bytes, L.data_directory_offset + 8 * kDirBoundImport + 4, 0);
    }
    detail::finish_headers(bytes, L, opt);
    result.image = parse(std::move(bytes), pe.mode);
    result.header_shift = added.header_shift;
    return result;
}

} // namespace gevd::pe
