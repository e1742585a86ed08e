#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "gevd/petk/edit.hpp"
#include "gevd/petk/manifest.hpp"
#include "gevd/petk/synth.hpp"
#include "oracles/random_pe.hpp"

using namespace gevd;
using namespace gevd::pe;

namespace {

std::vector<std::uint8_t> minimal() { return synth_pe(SynthSpec{}); }

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

bool contains(std::span<const std::uint8_t> hay, const std::string& needle) {
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

void expect_sections_preserved(const PeImage& before, const PeImage& after) {
    ASSERT_GE(after.sections.size(), before.sections.size());
    for (std::size_t i = 0; i < before.sections.size(); ++i) {
        EXPECT_EQ(before.sections[i].name, after.sections[i].name);
        EXPECT_EQ(before.sections[i].virtual_address, after.sections[i].virtual_address);
        auto a = before.section_data(i);
        auto b = after.section_data(i);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << "section " << i;
    }
}

} // namespace

TEST(PeParse, MinimalImageHasOneSectionAndNoOverlay) {
    auto bytes = minimal();
    PeImage pe = parse(bytes);
    EXPECT_EQ(pe.sections.size(), 1u);
    EXPECT_EQ(pe.sections[0].name, ".text");
    EXPECT_TRUE(pe.overlay().empty());
    EXPECT_TRUE(pe.imports.empty());
    EXPECT_EQ(pe.serialize(), bytes);
    EXPECT_EQ(pe.optional.magic, kMagicPe32);
}

TEST(PeParse, SynthIsDeterministic) {
    SynthSpec s;
    s.seed = 42;
    EXPECT_EQ(synth_pe(s), synth_pe(s));
    SynthSpec t = s;
    t.seed = 43;
    EXPECT_NE(synth_pe(s), synth_pe(t));
}

TEST(PeParse, RandomBytesFailAtMagic) {
    Rng rng(1);
    std::vector<std::uint8_t> junk(4096);
    for (auto& b : junk) b = static_cast<std::uint8_t>(rng() & 0xFF);
    junk[0] = 0x00;
    try {
        parse(junk);
        FAIL() << "expected PeEditError";
    } catch (const PeEditError& e) {
        EXPECT_EQ(e.kind, ErrorKind::parse);
        EXPECT_EQ(e.offset, 0u);
    }
}

TEST(PeParse, ShortInputRejected) {
    EXPECT_THROW(parse(std::vector<std::uint8_t>(63, 0)), PeEditError);
}

TEST(PeParse, TruncatedHeadersRejected) {
    auto bytes = minimal();
    bytes.resize(0x100);
    EXPECT_THROW(parse(bytes), PeEditError);
}

TEST(PeParse, SectionPointerPastEndRejected) {
    auto bytes = minimal();
    PeImage pe = parse(bytes);
    write_u32(bytes, pe.layout.section_table_offset + 20, 0x100000);
    try {
        parse(bytes);
        FAIL();
    } catch (const PeEditError& e) {
        EXPECT_EQ(e.kind, ErrorKind::parse);
        EXPECT_EQ(e.offset, pe.layout.section_table_offset + 20);
    }
}

TEST(PeParse, LenientRecordsMisalignment) {
    auto bytes = minimal();
    PeImage pe = parse(bytes);
    write_u32(bytes, pe.layout.section_table_offset + 12, 0x1010);
    EXPECT_THROW(parse(bytes, ParseMode::strict), PeEditError);
    PeImage lenient = parse(bytes, ParseMode::lenient);
    EXPECT_FALSE(lenient.anomalies.empty());
}

TEST(PeParse, PeMagicRequired) {
    auto bytes = minimal();
    bytes[0x80] = 'X';
    try {
        parse(bytes);
        FAIL();
    } catch (const PeEditError& e) {
        EXPECT_EQ(e.offset, 0x80u);
    }
}

TEST(PeParse, ThreeLibrariesSevenFunctions) {
    std::set<std::string> tokens = {"kernel32.dll!exitprocess", "kernel32.dll!getprocaddress",
                                    "kernel32.dll!loadlibrarya", "user32.dll!messageboxa",
                                    "user32.dll!getdc", "advapi32.dll!regopenkeyexa", "advapi32.dll!#17"};
    PeImage pe = parse(synth_pe(spec_with_imports(tokens)));
    EXPECT_EQ(pe.imports.size(), 3u);
    EXPECT_EQ(pe.import_count(), 7u);
    EXPECT_EQ(import_tokens(pe), tokens);
}

TEST(PeParse, Pe32PlusImports) {
    SynthSpec s = spec_with_imports({"ntdll.dll!ntclose", "ws2_32.dll!#23"});
    s.pe32_plus = true;
    PeImage pe = parse(synth_pe(s));
    EXPECT_TRUE(pe.optional.pe32_plus());
    EXPECT_EQ(import_tokens(pe), (std::set<std::string>{"ntdll.dll!ntclose", "ws2_32.dll!#23"}));
}

TEST(PeParse, MalformedImportTableNamesOffset) {
    auto bytes = synth_pe(spec_with_imports({"kernel32.dll!exitprocess"}));
    PeImage pe = parse(bytes);
    std::uint64_t desc = pe.imports[0].descriptor_offset;
    write_u32(bytes, desc + 12, 0x7FFFFFF0);
    try {
        parse(bytes);
        FAIL();
    } catch (const PeEditError& e) {
        EXPECT_EQ(e.kind, ErrorKind::parse);
        EXPECT_EQ(e.offset, desc + 12);
    }
    EXPECT_TRUE(parse(bytes, ParseMode::lenient).imports.empty());
}

TEST(PeImport, TokenSyntax) {
    EXPECT_EQ(parse_import_token("a.dll!#7").second.ordinal, std::optional<std::uint16_t>(7));
    EXPECT_EQ(parse_import_token("a.dll!Foo").second.name, "Foo");
    EXPECT_THROW(parse_import_token("nobang"), ContractError);
    EXPECT_THROW(parse_import_token("!f"), ContractError);
    EXPECT_THROW(parse_import_token("a.dll!"), ContractError);
    EXPECT_THROW(parse_import_token("a.dll!#70000"), ContractError);
    EXPECT_THROW(parse_import_token("a.dll!has space"), ContractError);
    EXPECT_EQ(import_token("KERNEL32.DLL", {"ExitProcess", std::nullopt}), "kernel32.dll!exitprocess");
}

TEST(PeOverlay, ZeroPlanIsIdentity) {
    PeImage pe = parse(minimal());
    ByteCounts zero{};
    EXPECT_EQ(append_overlay(pe, zero).serialize(), pe.serialize());
}

TEST(PeOverlay, AppendsGroupedAscending) {
    PeImage pe = parse(minimal());
    ByteCounts c{};
    c[0x41] = 3;
    PeImage out = append_overlay(pe, c);
    const auto& b = out.bytes();
    ASSERT_EQ(b.size(), pe.size() + 3);
    EXPECT_EQ(std::string(b.end() - 3, b.end()), "AAA");

    c[0x00] = 2;
    c[0xFF] = 1;
    PeImage out2 = append_overlay(pe, c);
    std::vector<std::uint8_t> tail(out2.bytes().end() - 6, out2.bytes().end());
    EXPECT_EQ(tail, (std::vector<std::uint8_t>{0, 0, 0x41, 0x41, 0x41, 0xFF}));
    EXPECT_EQ(out2.overlay().size(), 6u);
    EXPECT_TRUE(std::equal(pe.bytes().begin(), pe.bytes().end(), out2.bytes().begin()));
}

TEST(PeSection, EmptyContentIsOneAlignmentUnit) {
    PeImage pe = parse(minimal());
    SectionEdit e = add_section(pe, ".new", {}, kScnInitializedData | kScnRead);
    const PeImage& out = e.image;
    ASSERT_EQ(out.sections.size(), 2u);
    const auto& s = out.sections.back();
    EXPECT_EQ(s.name, ".new");
    EXPECT_EQ(s.size_of_raw_data, kSynthFileAlignment);
    auto data = out.section_data(1);
    EXPECT_TRUE(std::all_of(data.begin(), data.end(), [](auto b) { return b == 0; }));
    EXPECT_EQ(s.virtual_address % out.optional.section_alignment, 0u);
    EXPECT_GE(out.optional.size_of_image, s.virtual_address + s.virtual_size);
    EXPECT_EQ(out.coff.number_of_sections, 2);
    EXPECT_EQ(e.header_shift, 0u);
    expect_sections_preserved(pe, out);
}

TEST(PeSection, StringsPayloadRecoverable) {
    PeImage pe = parse(minimal());
    auto payload = bytes_of(std::string("foo\0barbaz\0", 11));
    PeImage out = add_section(pe, ".str", payload, kScnInitializedData | kScnRead).image;
    EXPECT_TRUE(contains(out.bytes(), "barbaz"));
    EXPECT_EQ(out.sections.back().virtual_size, 11u);
}

TEST(PeSection, OverlayStaysAtEnd) {
    SynthSpec s;
    s.overlay = bytes_of("OVERLAYDATA");
    PeImage pe = parse(synth_pe(s));
    PeImage out = add_section(pe, ".x", bytes_of("hello"), kScnInitializedData).image;
    auto ov = out.overlay();
    EXPECT_EQ(std::string(ov.begin(), ov.end()), "OVERLAYDATA");
}

TEST(PeSection, ShiftsHeadersWhenTableIsFull) {
    SynthSpec s;
    s.strings = {"alpha_string", "beta_string"};
    s.imports = group_tokens({"kernel32.dll!sleep"});
    s.overlay = bytes_of("tail");
    PeImage pe = parse(synth_pe(s));
    ASSERT_EQ(pe.sections.size(), 3u);
    // PE32 headers with three entries end at 0x1F0: no room for a fourth in 0x200
    EXPECT_THROW(add_section(pe, ".n", bytes_of("x"), kScnRead, {.allow_header_shift = false}), PeEditError);
    SectionEdit e = add_section(pe, ".n", bytes_of("x"), kScnRead);
    EXPECT_EQ(e.header_shift, kSynthFileAlignment);
    EXPECT_EQ(e.image.optional.size_of_headers, pe.optional.size_of_headers + kSynthFileAlignment);
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        EXPECT_EQ(e.image.sections[i].pointer_to_raw_data, pe.sections[i].pointer_to_raw_data + e.header_shift);
    }
    expect_sections_preserved(pe, e.image);
    auto ov = e.image.overlay();
    EXPECT_EQ(std::string(ov.begin(), ov.end()), "tail");
}

TEST(PeSection, SpareSlotsAvoidShift) {
    SynthSpec s;
    s.strings = {"alpha_string", "beta_string"};
    s.spare_section_slots = 2;
    PeImage pe = parse(synth_pe(s));
    SectionEdit e = add_section(pe, ".n", bytes_of("x"), kScnRead, {.allow_header_shift = false});
    EXPECT_EQ(e.header_shift, 0u);
}

TEST(PeSection, NameLimits) {
    PeImage pe = parse(minimal());
    EXPECT_THROW(add_section(pe, "toolongname", {}, 0), PeEditError);
    EXPECT_THROW(add_section(pe, "", {}, 0), PeEditError);
    EXPECT_NO_THROW(add_section(pe, "12345678", {}, 0));
}

TEST(PeSection, ChecksumZeroedOrRecomputed) {
    PeImage pe = parse(minimal());
    PeImage z = add_section(pe, ".a", bytes_of("abc"), kScnRead).image;
    EXPECT_EQ(z.optional.checksum, 0u);
    PeImage c = add_section(pe, ".a", bytes_of("abc"), kScnRead, {.recompute_checksum = true}).image;
    EXPECT_NE(c.optional.checksum, 0u);
    EXPECT_EQ(c.optional.checksum, compute_checksum(c.bytes(), c.layout.checksum_offset));
}

TEST(PeImports, EmptySetRepointsLosslessly) {
    std::set<std::string> tokens = {"kernel32.dll!exitprocess", "user32.dll!getdc"};
    PeImage pe = parse(synth_pe(spec_with_imports(tokens)));
    ImportEdit e = extend_imports(pe, {});
    EXPECT_EQ(import_tokens(e.image), tokens);
    EXPECT_EQ(e.image.directory(kDirImport).rva, e.image.sections.back().virtual_address);
    EXPECT_NE(e.image.directory(kDirImport).rva, pe.directory(kDirImport).rva);
    EXPECT_TRUE(e.added.empty());
}

TEST(PeImports, AddsSingleToken) {
    PeImage pe = parse(synth_pe(spec_with_imports({"kernel32.dll!exitprocess"})));
    ImportEdit e = extend_imports(pe, {"user32.dll!messageboxa"});
    EXPECT_EQ(import_tokens(e.image), (std::set<std::string>{"kernel32.dll!exitprocess", "user32.dll!messageboxa"}));
    EXPECT_EQ(e.added, std::vector<std::string>{"user32.dll!messageboxa"});
    expect_sections_preserved(pe, e.image);
}

TEST(PeImports, ImageWithoutImports) {
    PeImage pe = parse(minimal());
    ImportEdit e = extend_imports(pe, {"a.dll!f1", "a.dll!#3"});
    EXPECT_EQ(import_tokens(e.image), (std::set<std::string>{"a.dll!f1", "a.dll!#3"}));
}

TEST(PeImports, FiftyTokensFiveLibraries) {
    Rng rng(7);
    PeImage pe = parse(synth_pe(spec_with_imports({"kernel32.dll!exitprocess", "kernel32.dll!sleep"})));
    std::set<std::string> add;
    for (int lib = 0; lib < 5; ++lib) {
        for (int f = 0; f < 10; ++f) add.insert("lib" + std::to_string(lib) + ".dll!func_" + std::to_string(f));
    }
    ASSERT_EQ(add.size(), 50u);
    ImportEdit e = extend_imports(pe, add);
    std::set<std::string> expected = import_tokens(pe);
    expected.insert(add.begin(), add.end());
    EXPECT_EQ(import_tokens(e.image), expected);
    EXPECT_NO_THROW(parse(e.image.serialize(), ParseMode::strict));
    EXPECT_EQ(e.added.size(), 50u);
}

TEST(PeImports, DuplicatesSkippedAndReported) {
    PeImage pe = parse(synth_pe(spec_with_imports({"kernel32.dll!exitprocess"})));
    ImportEdit e = extend_imports(pe, {"KERNEL32.dll!ExitProcess", "kernel32.dll!sleep"});
    EXPECT_EQ(e.skipped, std::vector<std::string>{"KERNEL32.dll!ExitProcess"});
    EXPECT_EQ(e.added, std::vector<std::string>{"kernel32.dll!sleep"});
    EXPECT_THROW(extend_imports(pe, {"bad token"}), ContractError);
}

TEST(PeImports, RepeatedEditsCompose) {
    PeImage pe = parse(synth_pe(spec_with_imports({"k.dll!a"})));
    PeImage once = extend_imports(pe, {"k.dll!b"}).image;
    PeImage twice = extend_imports(once, {"m.dll!c"}).image;
    EXPECT_EQ(import_tokens(twice), (std::set<std::string>{"k.dll!a", "k.dll!b", "m.dll!c"}));
}

TEST(PeManifest, SerializesFields) {
    EditManifest m;
    m.file = "x.exe";
    m.operations = {"append_overlay"};
    m.size_before = 10;
    m.size_after = 13;
    auto j = m.to_json();
    EXPECT_EQ(j["size_after"], 13);
    EXPECT_EQ(j["operations"][0], "append_overlay");
}

TEST(PeProperty, RandomSpecsRoundTripAndSurviveEdits) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        SynthSpec spec = oracle::random_spec(seed);
        auto bytes = synth_pe(spec);
        PeImage pe = parse(bytes);
        ASSERT_EQ(pe.serialize(), bytes) << seed;
        std::set<std::string> expected;
        for (const auto& lib : spec.imports) {
            for (const auto& fn : lib.functions) expected.insert(import_token(lib.library, fn));
        }
        ASSERT_EQ(import_tokens(pe), expected) << seed;
        for (std::size_t i = 0; i < spec.sections.size(); ++i) {
            auto data = pe.section_data(i);
            ASSERT_TRUE(std::equal(spec.sections[i].content.begin(), spec.sections[i].content.end(), data.begin())) << seed;
        }
        auto ov = pe.overlay();
        ASSERT_TRUE(std::equal(ov.begin(), ov.end(), spec.overlay.begin(), spec.overlay.end())) << seed;
        for (const auto& s : spec.strings) ASSERT_TRUE(contains(bytes, s));

        Rng rng(seed);
        ByteCounts counts{};
        for (int k = 0; k < 5; ++k) counts[uniform_index(rng, 256)] += uniform_index(rng, 50);
        PeImage a = append_overlay(pe, counts);
        PeImage b = add_section(a, ".s", bytes_of("injected_string"), kScnInitializedData | kScnRead).image;
        auto add = oracle::random_tokens(rng, 2, 5);
        PeImage c = extend_imports(b, add).image;
        std::set<std::string> want = expected;
        want.insert(add.begin(), add.end());
        ASSERT_EQ(import_tokens(c), want) << seed;
        expect_sections_preserved(pe, c);
        ASSERT_NO_THROW(parse(c.serialize())) << seed;
    }
}
