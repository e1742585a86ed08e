#pragma once

// Minimal PE32 / PE32+ reader. A PeImage keeps the file bytes verbatim plus
// a decoded view of the headers, section table and import directory;
// serialize() of an unmodified image therefore returns the input exactly.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gevd/error.hpp"

namespace gevd::pe {

enum class ErrorKind { parse, alignment, capacity, invariant };

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::invariant: return "invariant";
    }
    return "unknown";
}

/// Every PE failure names the file offset (or structure) involved.
class PeEditError : public Error {
public:
    PeEditError(ErrorKind kind, std::uint64_t offset, const std::string& message)
        : Error(std::string(to_string(kind)) + " error at offset 0x" + hex(offset) + ": " + message),
          kind(kind), offset(offset), message(message) {}

    ErrorKind kind;
    std::uint64_t offset;
    std::string message;

private:
    static std::string hex(std::uint64_t v) {
        static const char* digits = "0123456789abcdef";
        std::string s;
        do {
            s.insert(s.begin(), digits[v & 0xF]);
            v >>= 4;
        } while (v);
        return s;
    }
};

inline constexpr std::uint16_t kMagicPe32 = 0x10B;
inline constexpr std::uint16_t kMagicPe32Plus = 0x20B;
inline constexpr std::size_t kDirImport = 1;
inline constexpr std::size_t kDirBoundImport = 11;
inline constexpr std::size_t kDirIat = 12;
inline constexpr std::size_t kSectionHeaderSize = 40;
inline constexpr std::size_t kImportDescriptorSize = 20;
inline constexpr std::size_t kMaxSections = 96;

inline constexpr std::uint32_t kScnCode = 0x00000020;
inline constexpr std::uint32_t kScnInitializedData = 0x00000040;
inline constexpr std::uint32_t kScnExecute = 0x20000000;
inline constexpr std::uint32_t kScnRead = 0x40000000;
inline constexpr std::uint32_t kScnWrite = 0x80000000;

// ---------------------------------------------------------------------------
// Little-endian field access with bounds checks.

inline std::uint64_t read_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
    if (offset > bytes.size() || width > bytes.size() - offset) {
        throw PeEditError(ErrorKind::parse, offset, "read of " + std::to_string(width) + " bytes past end of file");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    return v;
}
inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t o) {
    return static_cast<std::uint16_t>(read_le(b, o, 2));
}
inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t o) {
    return static_cast<std::uint32_t>(read_le(b, o, 4));
}
inline std::uint64_t read_u64(std::span<const std::uint8_t> b, std::size_t o) { return read_le(b, o, 8); }

inline void write_le(std::vector<std::uint8_t>& bytes, std::size_t offset, std::uint64_t v, std::size_t width) {
    if (offset + width > bytes.size()) {
        throw PeEditError(ErrorKind::invariant, offset, "write past end of buffer");
    }
    for (std::size_t i = 0; i < width; ++i) bytes[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void write_u16(std::vector<std::uint8_t>& b, std::size_t o, std::uint16_t v) { write_le(b, o, v, 2); }
inline void write_u32(std::vector<std::uint8_t>& b, std::size_t o, std::uint32_t v) { write_le(b, o, v, 4); }
inline void write_u64(std::vector<std::uint8_t>& b, std::size_t o, std::uint64_t v) { write_le(b, o, v, 8); }

inline std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return a == 0 ? v : (v + a - 1) / a * a; }

// ---------------------------------------------------------------------------

struct DataDirectory {
    std::uint32_t rva = 0;
    std::uint32_t size = 0;
    bool operator==(const DataDirectory&) const = default;
};

struct CoffHeader {
    std::uint16_t machine = 0;
    std::uint16_t number_of_sections = 0;
    std::uint32_t time_date_stamp = 0;
    std::uint16_t size_of_optional_header = 0;
    std::uint16_t characteristics = 0;
};

struct OptionalHeader {
    std::uint16_t magic = 0;
    std::uint32_t size_of_code = 0;
    std::uint32_t size_of_initialized_data = 0;
    std::uint32_t address_of_entry_point = 0;
    std::uint64_t image_base = 0;
    std::uint32_t section_alignment = 0;
    std::uint32_t file_alignment = 0;
    std::uint32_t size_of_image = 0;
    std::uint32_t size_of_headers = 0;
    std::uint32_t checksum = 0;
    std::uint16_t subsystem = 0;
    std::vector<DataDirectory> data_directories;

    [[nodiscard]] bool pe32_plus() const { return magic == kMagicPe32Plus; }
};

struct SectionHeader {
    std::string name;
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t size_of_raw_data = 0;
    std::uint32_t pointer_to_raw_data = 0;
    std::uint32_t characteristics = 0;

    [[nodiscard]] std::uint64_t raw_end() const {
        return static_cast<std::uint64_t>(pointer_to_raw_data) + size_of_raw_data;
    }
    [[nodiscard]] std::uint32_t virtual_extent() const {
        return virtual_size != 0 ? virtual_size : size_of_raw_data;
    }
};

struct ImportFunction {
    std::string name;                     // empty for ordinal imports
    std::optional<std::uint16_t> ordinal; // set for ordinal imports
    bool operator==(const ImportFunction&) const = default;
};

struct ImportDescriptor {
    std::string library;
    std::vector<ImportFunction> functions;
    std::uint64_t descriptor_offset = 0; // file offset of the 20-byte entry
};

/// Offsets of the header structures inside the file.
struct HeaderLayout {
    std::uint32_t pe_offset = 0;
    std::uint32_t coff_offset = 0;
    std::uint32_t optional_offset = 0;
    std::uint32_t checksum_offset = 0;
    std::uint32_t data_directory_offset = 0;
    std::uint32_t section_table_offset = 0;
};

enum class ParseMode { strict, lenient };

class PeImage {
public:
    CoffHeader coff;
    OptionalHeader optional;
    HeaderLayout layout;
    std::vector<SectionHeader> sections;
    std::vector<ImportDescriptor> imports;
    std::vector<std::string> anomalies; // lenient mode only
    ParseMode mode = ParseMode::strict;

    [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return raw_; }
    [[nodiscard]] std::vector<std::uint8_t> serialize() const { return raw_; }
    [[nodiscard]] std::size_t size() const { return raw_.size(); }

    /// First byte past the last section's raw data (or the headers).
    [[nodiscard]] std::uint64_t overlay_offset() const { return overlay_offset_; }
    [[nodiscard]] std::span<const std::uint8_t> overlay() const {
        return std::span<const std::uint8_t>(raw_).subspan(static_cast<std::size_t>(overlay_offset_));
    }

    [[nodiscard]] std::span<const std::uint8_t> section_data(std::size_t i) const {
        const auto& s = sections.at(i);
        return std::span<const std::uint8_t>(raw_).subspan(s.pointer_to_raw_data, s.size_of_raw_data);
    }

    [[nodiscard]] const DataDirectory& directory(std::size_t i) const {
        static const DataDirectory empty{};
        return i < optional.data_directories.size() ? optional.data_directories[i] : empty;
    }

    /// File offset of an RVA, or nullopt if it is not backed by file data.
    [[nodiscard]] std::optional<std::uint64_t> rva_to_offset(std::uint64_t rva) const {
        if (rva < optional.size_of_headers) return rva;
        for (const auto& s : sections) {
            std::uint64_t extent = std::max(s.virtual_size, s.size_of_raw_data);
            if (rva >= s.virtual_address && rva < s.virtual_address + extent) {
                std::uint64_t delta = rva - s.virtual_address;
                if (delta >= s.size_of_raw_data) return std::nullopt;
                return s.pointer_to_raw_data + delta;
            }
        }
        return std::nullopt;
    }

    /// Smallest aligned RVA past every section.
    [[nodiscard]] std::uint32_t next_section_rva() const {
        std::uint64_t end = align_up(optional.size_of_headers, optional.section_alignment);
        for (const auto& s : sections) end = std::max<std::uint64_t>(end, s.virtual_address + s.virtual_extent());
        return static_cast<std::uint32_t>(align_up(end, optional.section_alignment));
    }

    [[nodiscard]] std::size_t import_count() const {
        std::size_t n = 0;
        for (const auto& d : imports) n += d.functions.size();
        return n;
    }

    friend PeImage parse(std::vector<std::uint8_t> bytes, ParseMode mode);

private:
    std::vector<std::uint8_t> raw_;
    std::uint64_t overlay_offset_ = 0;
};

namespace detail {

inline std::string read_cstring(std::span<const std::uint8_t> bytes, std::uint64_t offset, std::size_t max_len,
                                const char* what) {
    std::string s;
    for (std::uint64_t i = offset;; ++i) {
        if (i >= bytes.size()) throw PeEditError(ErrorKind::parse, offset, std::string("unterminated ") + what);
        if (bytes[i] == 0) break;
        s.push_back(static_cast<char>(bytes[i]));
        if (s.size() > max_len) throw PeEditError(ErrorKind::parse, offset, std::string(what) + " too long");
    }
    return s;
}

inline bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline void parse_imports(PeImage& pe, std::span<const std::uint8_t> bytes) {
    const DataDirectory& dir = pe.directory(kDirImport);
    if (dir.rva == 0) return;
    auto table = pe.rva_to_offset(dir.rva);
    if (!table) throw PeEditError(ErrorKind::parse, dir.rva, "import directory RVA is not backed by file data");
    bool wide = pe.optional.pe32_plus();
    std::size_t thunk_size = wide ? 8 : 4;
    std::uint64_t ordinal_flag = wide ? 0x8000000000000000ULL : 0x80000000ULL;

    for (std::uint64_t off = *table;; off += kImportDescriptorSize) {
        std::uint32_t original_first_thunk = read_u32(bytes, off);
        std::uint32_t name_rva = read_u32(bytes, off + 12);
        std::uint32_t first_thunk = read_u32(bytes, off + 16);
        if (original_first_thunk == 0 && name_rva == 0 && first_thunk == 0) break;
        if (pe.imports.size() > 4096) throw PeEditError(ErrorKind::parse, off, "unterminated import descriptor table");

        ImportDescriptor desc;
        desc.descriptor_offset = off;
        auto name_off = pe.rva_to_offset(name_rva);
        if (!name_off) throw PeEditError(ErrorKind::parse, off + 12, "import library name RVA out of range");
        desc.library = read_cstring(bytes, *name_off, 255, "import library name");

        std::uint32_t thunk_rva = original_first_thunk != 0 ? original_first_thunk : first_thunk;
        auto thunk_off = pe.rva_to_offset(thunk_rva);
        if (!thunk_off) throw PeEditError(ErrorKind::parse, off, "import lookup table RVA out of range");
        for (std::uint64_t t = *thunk_off;; t += thunk_size) {
            std::uint64_t thunk = read_le(bytes, t, thunk_size);
            if (thunk == 0) break;
            if (desc.functions.size() > 65535) throw PeEditError(ErrorKind::parse, t, "unterminated import lookup table");
            ImportFunction fn;
            if (thunk & ordinal_flag) {
                fn.ordinal = static_cast<std::uint16_t>(thunk & 0xFFFF);
            } else {
                auto hint_off = pe.rva_to_offset(thunk & 0x7FFFFFFF);
                if (!hint_off) throw PeEditError(ErrorKind::parse, t, "import name RVA out of range");
                fn.name = read_cstring(bytes, *hint_off + 2, 4096, "import function name");
            }
            desc.functions.push_back(std::move(fn));
        }
        pe.imports.push_back(std::move(desc));
    }
}

} // namespace detail

/// Decodes a PE file. Strict mode rejects structural anomalies; lenient mode
/// records them in `anomalies` and only fails on unreadable headers.
inline PeImage parse(std::vector<std::uint8_t> bytes, ParseMode mode = ParseMode::strict) {
    PeImage pe;
    pe.mode = mode;
    std::span<const std::uint8_t> b(bytes);
    auto flag = [&](ErrorKind kind, std::uint64_t offset, const std::string& msg) {
        if (mode == ParseMode::strict) throw PeEditError(kind, offset, msg);
        pe.anomalies.push_back(msg);
    };

    if (b.size() < 64) throw PeEditError(ErrorKind::parse, 0, "file shorter than a DOS header");
    if (b[0] != 'M' || b[1] != 'Z') throw PeEditError(ErrorKind::parse, 0, "missing MZ signature");
    auto& L = pe.layout;
    L.pe_offset = read_u32(b, 0x3C);
    if (L.pe_offset + 4ULL > b.size() || std::memcmp(b.data() + L.pe_offset, "PE\0\0", 4) != 0) {
        throw PeEditError(ErrorKind::parse, L.pe_offset, "missing PE signature");
    }
    L.coff_offset = L.pe_offset + 4;
    pe.coff.machine = read_u16(b, L.coff_offset);
    pe.coff.number_of_sections = read_u16(b, L.coff_offset + 2);
    pe.coff.time_date_stamp = read_u32(b, L.coff_offset + 4);
    pe.coff.size_of_optional_header = read_u16(b, L.coff_offset + 16);
    pe.coff.characteristics = read_u16(b, L.coff_offset + 18);

    L.optional_offset = L.coff_offset + 20;
    auto& opt = pe.optional;
    opt.magic = read_u16(b, L.optional_offset);
    if (opt.magic != kMagicPe32 && opt.magic != kMagicPe32Plus) {
        throw PeEditError(ErrorKind::parse, L.optional_offset, "unknown optional header magic");
    }
    bool wide = opt.pe32_plus();
    std::size_t o = L.optional_offset;
    opt.size_of_code = read_u32(b, o + 4);
    opt.size_of_initialized_data = read_u32(b, o + 8);
    opt.address_of_entry_point = read_u32(b, o + 16);
    opt.image_base = wide ? read_u64(b, o + 24) : read_u32(b, o + 28);
    opt.section_alignment = read_u32(b, o + 32);
    opt.file_alignment = read_u32(b, o + 36);
    opt.size_of_image = read_u32(b, o + 56);
    opt.size_of_headers = read_u32(b, o + 60);
    L.checksum_offset = static_cast<std::uint32_t>(o + 64);
    opt.checksum = read_u32(b, o + 64);
    opt.subsystem = read_u16(b, o + 68);
    std::size_t count_off = o + (wide ? 108 : 92);
    std::uint32_t dir_count = read_u32(b, count_off);
    L.data_directory_offset = static_cast<std::uint32_t>(count_off + 4);
    if (dir_count > 16) throw PeEditError(ErrorKind::parse, count_off, "more than 16 data directories");
    std::size_t needed = (L.data_directory_offset - o) + 8ULL * dir_count;
    if (pe.coff.size_of_optional_header < needed) {
        throw PeEditError(ErrorKind::parse, L.coff_offset + 16, "SizeOfOptionalHeader too small for its directories");
    }
    for (std::uint32_t i = 0; i < dir_count; ++i) {
        opt.data_directories.push_back({read_u32(b, L.data_directory_offset + 8 * i),
                                        read_u32(b, L.data_directory_offset + 8 * i + 4)});
    }

    if (!detail::is_power_of_two(opt.file_alignment) || !detail::is_power_of_two(opt.section_alignment) ||
        opt.section_alignment < opt.file_alignment) {
        throw PeEditError(ErrorKind::alignment, L.optional_offset + 32, "invalid section/file alignment");
    }

    L.section_table_offset = L.optional_offset + pe.coff.size_of_optional_header;
    std::uint64_t table_end =
        L.section_table_offset + static_cast<std::uint64_t>(pe.coff.number_of_sections) * kSectionHeaderSize;
    if (table_end > b.size()) throw PeEditError(ErrorKind::parse, L.section_table_offset, "section table truncated");
    if (table_end > opt.size_of_headers) {
        flag(ErrorKind::invariant, L.section_table_offset, "section table extends past SizeOfHeaders");
    }
    if (opt.size_of_headers > b.size()) throw PeEditError(ErrorKind::parse, L.optional_offset + 60, "SizeOfHeaders past end of file");

    for (std::size_t i = 0; i < pe.coff.number_of_sections; ++i) {
        std::size_t h = L.section_table_offset + i * kSectionHeaderSize;
        SectionHeader s;
        std::size_t len = 0;
        while (len < 8 && b[h + len] != 0) ++len;
        s.name.assign(reinterpret_cast<const char*>(b.data() + h), len);
        s.virtual_size = read_u32(b, h + 8);
        s.virtual_address = read_u32(b, h + 12);
        s.size_of_raw_data = read_u32(b, h + 16);
        s.pointer_to_raw_data = read_u32(b, h + 20);
        s.characteristics = read_u32(b, h + 36);
        if (s.size_of_raw_data != 0 && s.raw_end() > b.size()) {
            throw PeEditError(ErrorKind::parse, h + 20, "section '" + s.name + "' raw data past end of file");
        }
        if (s.pointer_to_raw_data % opt.file_alignment != 0 || s.size_of_raw_data % opt.file_alignment != 0) {
            flag(ErrorKind::alignment, h + 16, "section '" + s.name + "' raw range not file-aligned");
        }
        if (s.virtual_address % opt.section_alignment != 0) {
            flag(ErrorKind::alignment, h + 12, "section '" + s.name + "' virtual address not section-aligned");
        }
        pe.sections.push_back(std::move(s));
    }

    // raw ranges must not overlap each other or the headers
    std::vector<const SectionHeader*> by_raw;
    for (const auto& s : pe.sections) {
        if (s.size_of_raw_data) by_raw.push_back(&s);
    }
    std::sort(by_raw.begin(), by_raw.end(),
              [](auto* x, auto* y) { return x->pointer_to_raw_data < y->pointer_to_raw_data; });
    std::uint64_t cursor = opt.size_of_headers;
    for (const auto* s : by_raw) {
        if (s->pointer_to_raw_data < cursor) {
            flag(ErrorKind::invariant, s->pointer_to_raw_data, "section '" + s->name + "' raw data overlaps");
        }
        cursor = std::max(cursor, s->raw_end());
    }
    std::uint64_t vcursor = opt.size_of_headers;
    for (const auto& s : pe.sections) {
        if (s.virtual_address < vcursor) {
            flag(ErrorKind::invariant, s.virtual_address, "section '" + s.name + "' virtual range not ascending");
        }
        vcursor = static_cast<std::uint64_t>(s.virtual_address) + s.virtual_extent();
    }
    if (!pe.sections.empty() && align_up(vcursor, opt.section_alignment) > opt.size_of_image) {
        flag(ErrorKind::invariant, L.optional_offset + 56, "SizeOfImage does not cover the last section");
    }

    pe.overlay_offset_ = opt.size_of_headers;
    for (const auto& s : pe.sections) {
        if (s.size_of_raw_data) pe.overlay_offset_ = std::max(pe.overlay_offset_, s.raw_end());
    }

    try {
        detail::parse_imports(pe, b);
    } catch (const PeEditError& e) {
        if (mode == ParseMode::strict) throw;
        pe.anomalies.push_back(e.what());
        pe.imports.clear();
    }

    pe.raw_ = std::move(bytes);
    return pe;
}

/// Standard PE image checksum (16-bit one's-complement-style sum plus length).
inline std::uint32_t compute_checksum(std::span<const std::uint8_t> bytes, std::size_t checksum_offset) {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < bytes.size(); i += 2) {
        if (i == checksum_offset || i == checksum_offset + 2) continue;
        std::uint32_t word = bytes[i];
        if (i + 1 < bytes.size()) word |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        sum += word;
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint32_t>(sum + bytes.size());
}

} // namespace gevd::pe
