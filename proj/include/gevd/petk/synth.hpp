#pragma once

// Deterministic generator of small, valid PE files for fixtures and corpora.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gevd/nncore/rng.hpp"
#include "gevd/petk/imports.hpp"
#include "gevd/petk/pe_image.hpp"

namespace gevd::pe {

struct SynthSection {
    std::string name;
    std::vector<std::uint8_t> content;
    std::uint32_t characteristics = kScnInitializedData | kScnRead;
};

struct SynthSpec {
    bool pe32_plus = false;
    std::vector<SynthSection> sections;  // empty: one seeded .text section
    std::vector<LibraryImports> imports; // placed in a trailing .idata section
    std::vector<std::string> strings;    // NUL-separated in a .data section
    std::vector<std::uint8_t> overlay;
    std::size_t spare_section_slots = 0; // extra header room for later edits
    std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kSynthFileAlignment = 0x200;
inline constexpr std::uint32_t kSynthSectionAlignment = 0x1000;

inline std::vector<std::uint8_t> synth_pe(const SynthSpec& spec) {
    const bool wide = spec.pe32_plus;
    const std::uint32_t fa = kSynthFileAlignment;
    const std::uint32_t sa = kSynthSectionAlignment;
    Rng rng(derive_seed(spec.seed, 0x5e17));

    std::vector<SynthSection> sections = spec.sections;
    if (sections.empty()) {
        SynthSection text{".text", std::vector<std::uint8_t>(256), kScnCode | kScnExecute | kScnRead};
        for (auto& b : text.content) b = static_cast<std::uint8_t>(rng() & 0xFF);
        text.content.push_back(0xC3);
        sections.push_back(std::move(text));
    }
    if (!spec.strings.empty()) {
        SynthSection data{".data", {}, kScnInitializedData | kScnRead | kScnWrite};
        for (const auto& s : spec.strings) {
            data.content.insert(data.content.end(), s.begin(), s.end());
            data.content.push_back(0);
        }
        sections.push_back(std::move(data));
    }
    const bool has_imports = !spec.imports.empty();
    const std::size_t nsec = sections.size() + (has_imports ? 1 : 0);
    if (nsec > kMaxSections) throw PeEditError(ErrorKind::capacity, 0, "spec has too many sections");
    for (const auto& s : sections) {
        if (s.name.empty() || s.name.size() > 8) throw PeEditError(ErrorKind::invariant, 0, "section name must be 1..8 bytes");
    }

    const std::uint32_t pe_off = 0x80;
    const std::uint32_t coff = pe_off + 4;
    const std::uint32_t opt_size = wide ? 240 : 224;
    const std::uint32_t opt = coff + 20;
    const std::uint32_t table = opt + opt_size;
    const std::uint64_t soh = align_up(table + (nsec + spec.spare_section_slots) * kSectionHeaderSize, fa);
    if (soh > sa) throw PeEditError(ErrorKind::capacity, table, "headers exceed one section alignment unit");

    // virtual and raw layout
    struct Placed {
        std::string name;
        std::vector<std::uint8_t> content;
        std::uint32_t characteristics;
        std::uint32_t va;
        std::uint32_t raw_ptr;
        std::uint32_t raw_size;
    };
    std::vector<Placed> placed;
    std::uint64_t va = align_up(soh, sa);
    std::uint64_t raw = soh;
    auto place = [&](const std::string& name, std::vector<std::uint8_t> content, std::uint32_t ch) {
        std::uint64_t size = align_up(std::max<std::uint64_t>(content.size(), 1), fa);
        std::uint64_t vsize = std::max<std::uint64_t>(content.size(), 1);
        if (raw + size > UINT32_MAX || va + vsize > UINT32_MAX) {
            throw PeEditError(ErrorKind::capacity, raw, "spec exceeds 32-bit image limits");
        }
        placed.push_back({name, std::move(content), ch, static_cast<std::uint32_t>(va), static_cast<std::uint32_t>(raw),
                          static_cast<std::uint32_t>(size)});
        raw += size;
        va = align_up(va + vsize, sa);
    };
    for (auto& s : sections) place(s.name, std::move(s.content), s.characteristics);
    std::uint32_t import_rva = 0, import_size = 0;
    if (has_imports) {
        for (const auto& lib : spec.imports) {
            for (const auto& fn : lib.functions) parse_import_token(import_token(lib.library, fn));
        }
        import_rva = static_cast<std::uint32_t>(va);
        ImportBlock block = build_import_block(import_rva, {}, spec.imports, wide);
        import_size = block.descriptor_table_size;
        place(".idata", std::move(block.bytes), kScnInitializedData | kScnRead | kScnWrite);
    }

    std::vector<std::uint8_t> out(raw, 0);
    out[0] = 'M';
    out[1] = 'Z';
    write_u16(out, 0x02, 0x90);
    write_u16(out, 0x04, 3);
    write_u16(out, 0x08, 4);
    write_u16(out, 0x0C, 0xFFFF);
    write_u16(out, 0x10, 0xB8);
    write_u16(out, 0x18, 0x40);
    write_u32(out, 0x3C, pe_off);
    out[pe_off] = 'P';
    out[pe_off + 1] = 'E';

    write_u16(out, coff, wide ? 0x8664 : 0x014C);
    write_u16(out, coff + 2, static_cast<std::uint16_t>(placed.size()));
    write_u32(out, coff + 4, static_cast<std::uint32_t>(0x5A000000u + (rng() & 0x00FFFFFF)));
    write_u16(out, coff + 16, static_cast<std::uint16_t>(opt_size));
    write_u16(out, coff + 18, wide ? 0x0022 : 0x0102);

    std::uint32_t size_of_code = 0, size_of_data = 0, entry = 0, base_of_code = 0, base_of_data = 0;
    for (const auto& p : placed) {
        if (p.characteristics & kScnCode) {
            size_of_code += p.raw_size;
            if (!entry) entry = base_of_code = p.va;
        } else {
            size_of_data += p.raw_size;
            if (!base_of_data) base_of_data = p.va;
        }
    }
    write_u16(out, opt, wide ? kMagicPe32Plus : kMagicPe32);
    out[opt + 2] = 14;
    write_u32(out, opt + 4, size_of_code);
    write_u32(out, opt + 8, size_of_data);
    write_u32(out, opt + 16, entry);
    write_u32(out, opt + 20, base_of_code);
    if (wide) {
        write_u64(out, opt + 24, 0x140000000ULL);
    } else {
        write_u32(out, opt + 24, base_of_data);
        write_u32(out, opt + 28, 0x400000);
    }
    write_u32(out, opt + 32, sa);
    write_u32(out, opt + 36, fa);
    write_u16(out, opt + 40, 6);
    write_u16(out, opt + 48, 6);
    write_u32(out, opt + 56, static_cast<std::uint32_t>(va));
    write_u32(out, opt + 60, static_cast<std::uint32_t>(soh));
    write_u16(out, opt + 68, 2);
    write_u16(out, opt + 70, 0x8100);
    if (wide) {
        write_u64(out, opt + 72, 0x100000);
        write_u64(out, opt + 80, 0x1000);
        write_u64(out, opt + 88, 0x100000);
        write_u64(out, opt + 96, 0x1000);
        write_u32(out, opt + 108, 16);
    } else {
        write_u32(out, opt + 72, 0x100000);
        write_u32(out, opt + 76, 0x1000);
        write_u32(out, opt + 80, 0x100000);
        write_u32(out, opt + 84, 0x1000);
        write_u32(out, opt + 92, 16);
    }
    std::uint32_t dirs = opt + (wide ? 112 : 96);
    write_u32(out, dirs + 8 * kDirImport, import_rva);
    write_u32(out, dirs + 8 * kDirImport + 4, import_size);

    for (std::size_t i = 0; i < placed.size(); ++i) {
        const auto& p = placed[i];
        std::size_t h = table + i * kSectionHeaderSize;
        for (std::size_t c = 0; c < p.name.size(); ++c) out[h + c] = static_cast<std::uint8_t>(p.name[c]);
        write_u32(out, h + 8, static_cast<std::uint32_t>(std::max<std::size_t>(p.content.size(), 1)));
        write_u32(out, h + 12, p.va);
        write_u32(out, h + 16, p.raw_size);
        write_u32(out, h + 20, p.raw_ptr);
        write_u32(out, h + 36, p.characteristics);
        std::copy(p.content.begin(), p.content.end(), out.begin() + p.raw_ptr);
    }
    out.insert(out.end(), spec.overlay.begin(), spec.overlay.end());
    return out;
}

/// Convenience: a spec importing the given tokens.
inline SynthSpec spec_with_imports(const std::set<std::string>& tokens, std::uint64_t seed = 0) {
    SynthSpec s;
    s.imports = group_tokens(tokens);
    s.seed = seed;
    return s;
}

} // namespace gevd::pe
