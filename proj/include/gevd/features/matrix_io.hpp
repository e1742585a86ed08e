#pragma once

// Feature matrices on disk. CSV: header "id,label,<columns...>", one row per
// sample, values printed with 17 significant digits. GEVF1 binary:
//
//   magic "GEVF1", u32 column count, column names (u32 len + bytes),
//   u64 row count, per row: id (u32 len + bytes), u8 label, f64 values.

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gevd/error.hpp"
#include "gevd/nncore/checkpoint.hpp"
#include "gevd/nncore/tensor.hpp"

namespace gevd {

struct FeatureMatrix {
    std::vector<std::string> columns;
    std::vector<std::string> ids;
    std::vector<int> labels; // 0 benign, 1 malicious
    Tensor values;           // rows x columns

    [[nodiscard]] std::size_t rows() const { return ids.size(); }

    void validate() const {
        if (labels.size() != ids.size() || values.rows() != ids.size() ||
            (!ids.empty() && values.cols() != columns.size())) {
            throw DimensionError("feature matrix: inconsistent shapes");
        }
    }

    bool operator==(const FeatureMatrix&) const = default;
};

inline std::vector<std::string> bin_columns(std::size_t n) {
    std::vector<std::string> c;
    for (std::size_t i = 0; i < n; ++i) c.push_back(std::to_string(i));
    return c;
}

namespace csv {

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Splits one record; handles quoted fields with doubled quotes.
inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw FormatError("csv: unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("csv: bad number '" + s + "'");
    return v;
}

} // namespace csv

inline std::string encode_csv(const FeatureMatrix& m) {
    m.validate();
    std::ostringstream os;
    os << "id,label";
    for (const auto& c : m.columns) os << ',' << csv::quote(c);
    os << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        os << csv::quote(m.ids[r]) << ',' << m.labels[r];
        for (double v : m.values.row_span(r)) os << ',' << csv::format_double(v);
        os << '\n';
    }
    return os.str();
}

inline FeatureMatrix decode_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("csv: missing header");
    auto header = csv::split(line);
    if (header.size() < 2 || header[0] != "id" || header[1] != "label") throw FormatError("csv: header must start with id,label");
    FeatureMatrix m;
    m.columns.assign(header.begin() + 2, header.end());
    std::vector<double> data;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = csv::split(line);
        if (f.size() != header.size()) throw FormatError("csv: row " + std::to_string(m.rows() + 1) + " has wrong field count");
        m.ids.push_back(f[0]);
        m.labels.push_back(static_cast<int>(csv::parse_double(f[1])));
        for (std::size_t i = 2; i < f.size(); ++i) data.push_back(csv::parse_double(f[i]));
    }
    m.values = Tensor({m.rows(), m.columns.size()}, std::move(data));
    return m;
}

inline constexpr char kFeatureMagic[5] = {'G', 'E', 'V', 'F', '1'};

inline std::vector<std::uint8_t> encode_gevf(const FeatureMatrix& m) {
    m.validate();
    binio::Writer w;
    w.bytes(kFeatureMagic, sizeof kFeatureMagic);
    w.u32(static_cast<std::uint32_t>(m.columns.size()));
    for (const auto& c : m.columns) w.str(c);
    w.u64(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        w.str(m.ids[r]);
        w.u8(static_cast<std::uint8_t>(m.labels[r]));
        for (double v : m.values.row_span(r)) w.f64(v);
    }
    return w.take();
}

inline FeatureMatrix decode_gevf(const std::vector<std::uint8_t>& bytes) {
    binio::Reader r(bytes);
    char magic[5];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kFeatureMagic, sizeof magic) != 0) throw FormatError("bad feature file magic");
    FeatureMatrix m;
    std::uint32_t cols = r.u32();
    for (std::uint32_t i = 0; i < cols; ++i) m.columns.push_back(r.str());
    std::uint64_t rows = r.u64();
    std::vector<double> data;
    for (std::uint64_t i = 0; i < rows; ++i) {
        m.ids.push_back(r.str());
        m.labels.push_back(r.u8());
        auto row = r.f64s(cols);
        data.insert(data.end(), row.begin(), row.end());
    }
    if (!r.at_end()) throw FormatError("trailing bytes in feature file");
    m.values = Tensor({m.rows(), m.columns.size()}, std::move(data));
    return m;
}

inline void save_features(const std::string& path, const FeatureMatrix& m) {
    bool as_csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
    if (as_csv) {
        std::string s = encode_csv(m);
        binio::write_file(path, std::vector<std::uint8_t>(s.begin(), s.end()));
    } else {
        binio::write_file(path, encode_gevf(m));
    }
}

inline FeatureMatrix load_features(const std::string& path) {
    auto bytes = binio::read_file(path);
    if (bytes.size() >= 5 && std::memcmp(bytes.data(), kFeatureMagic, 5) == 0) return decode_gevf(bytes);
    return decode_csv(std::string(bytes.begin(), bytes.end()));
}

} // namespace gevd
