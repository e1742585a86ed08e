#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace gevd::pe {

/// Per-file record of the edits applied to one PE.
struct EditManifest {
    std::string file;
    std::vector<std::string> operations;
    std::uint64_t size_before = 0;
    std::uint64_t size_after = 0;
    nlohmann::json certificate = nullptr;
    std::vector<std::string> imports_added;
    std::vector<std::string> imports_skipped;
    std::size_t strings_added = 0;
    std::uint32_t header_shift = 0;
    std::vector<std::string> warnings;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"file", file},
                {"operations", operations},
                {"size_before", size_before},
                {"size_after", size_after},
                {"certificate", certificate},
                {"imports_added", imports_added},
                {"imports_skipped", imports_skipped},
                {"strings_added", strings_added},
                {"header_shift", header_shift},
                {"warnings", warnings}};
    }
};

} // namespace gevd::pe
