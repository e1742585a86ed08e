#pragma once

// Experiment report: detection tables, gap sweep, query ledger. JSON is the
// lossless form; CSV and markdown are renderings of it.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/features/matrix_io.hpp"

namespace gevd {

inline constexpr const char* kReportSchema = "gevd-report/1";

struct DetectorRow {
    std::string name;
    std::string kind;
    std::string features;
    std::size_t dim = 0;
    double val_accuracy = 0;
    double detection_rate = 0; // test malicious originals
    double false_positive_rate = 0;
    bool operator==(const DetectorRow&) const = default;
};

struct SupersetCheck {
    std::size_t vectors_checked = 0;
    std::size_t vectors_superset = 0;
    std::size_t files_checked = 0;
    std::size_t files_superset = 0;
    bool operator==(const SupersetCheck&) const = default;
};

struct AttackRow {
    std::string name;
    std::string method;
    std::string family;
    std::string target;
    std::uint64_t query_count = 0;
    std::size_t files = 0;
    std::size_t files_modified = 0;
    double mean_size = 0;
    double mean_added = 0; // bytes for byte attacks, features otherwise
    std::map<std::string, double> detection; // detector -> rate on the rewritten files
    SupersetCheck superset;
    std::vector<std::string> warnings;
    bool operator==(const AttackRow&) const = default;
};

struct GapRow {
    double gap = 0;
    std::size_t files = 0;
    double mean_size = 0;
    double mean_appended = 0;
    std::map<std::string, double> detection;
    bool operator==(const GapRow&) const = default;
};

struct ExactComparison {
    double gap = 0;
    std::size_t files = 0;
    double mean_appended_relaxed = 0;
    double mean_appended_exact = 0;
    std::size_t infeasible_exact = 0;
    bool operator==(const ExactComparison&) const = default;
};

/// Wall-clock timings; the only part of a report that varies between runs.
struct RuntimeInfo {
    double total_seconds = 0;
    std::map<std::string, double> stages;
    bool operator==(const RuntimeInfo&) const = default;
};

struct ExperimentReport {
    std::string tool_version;
    std::string config_hash;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json corpus = nlohmann::json::object();
    std::vector<DetectorRow> detectors;
    std::vector<AttackRow> attacks;
    std::vector<GapRow> gap_sweep;
    std::optional<ExactComparison> exact;
    std::vector<std::string> warnings;
    RuntimeInfo runtime;

    bool operator==(const ExperimentReport&) const = default;
};

#ifndef GEVD_VERSION
#define GEVD_VERSION "0.0.0"
#endif
inline std::string tool_version() { return GEVD_VERSION; }

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json report_to_json(const ExperimentReport& r) {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& d : r.detectors) {
        dets.push_back({{"name", d.name},
                        {"kind", d.kind},
                        {"features", d.features},
                        {"dim", d.dim},
                        {"val_accuracy", d.val_accuracy},
                        {"detection_rate", d.detection_rate},
                        {"false_positive_rate", d.false_positive_rate}});
    }
    nlohmann::json atks = nlohmann::json::array();
    for (const auto& a : r.attacks) {
        atks.push_back({{"name", a.name},
                        {"method", a.method},
                        {"family", a.family},
                        {"target", a.target},
                        {"query_count", a.query_count},
                        {"files", a.files},
                        {"files_modified", a.files_modified},
                        {"mean_size", a.mean_size},
                        {"mean_added", a.mean_added},
                        {"detection", a.detection},
                        {"superset",
                         {{"vectors_checked", a.superset.vectors_checked},
                          {"vectors_superset", a.superset.vectors_superset},
                          {"files_checked", a.superset.files_checked},
                          {"files_superset", a.superset.files_superset}}},
                        {"warnings", a.warnings}});
    }
    nlohmann::json gaps = nlohmann::json::array();
    for (const auto& g : r.gap_sweep) {
        gaps.push_back({{"gap", g.gap},
                        {"files", g.files},
                        {"mean_size", g.mean_size},
                        {"mean_appended", g.mean_appended},
                        {"detection", g.detection}});
    }
    nlohmann::json j = {{"schema", kReportSchema},
                        {"tool_version", r.tool_version},
                        {"config_hash", r.config_hash},
                        {"seed", r.seed},
                        {"config", r.config},
                        {"corpus", r.corpus},
                        {"detectors", dets},
                        {"attacks", atks},
                        {"gap_sweep", gaps},
                        {"warnings", r.warnings},
                        {"runtime", {{"total_seconds", r.runtime.total_seconds}, {"stages", r.runtime.stages}}}};
    if (r.exact) {
        j["exact_comparison"] = {{"gap", r.exact->gap},
                                 {"files", r.exact->files},
                                 {"mean_appended_relaxed", r.exact->mean_appended_relaxed},
                                 {"mean_appended_exact", r.exact->mean_appended_exact},
                                 {"infeasible_exact", r.exact->infeasible_exact}};
    } else {
        j["exact_comparison"] = nullptr;
    }
    return j;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
    try {
        if (j.value("schema", "") != kReportSchema) throw FormatError("report: unsupported schema");
        ExperimentReport r;
        r.tool_version = j.at("tool_version").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.config = j.at("config");
        r.corpus = j.at("corpus");
        for (const auto& d : j.at("detectors")) {
            r.detectors.push_back({d.at("name"), d.at("kind"), d.at("features"), d.at("dim"), d.at("val_accuracy"),
                                   d.at("detection_rate"), d.at("false_positive_rate")});
        }
        for (const auto& a : j.at("attacks")) {
            AttackRow row;
            row.name = a.at("name");
            row.method = a.at("method");
            row.family = a.at("family");
            row.target = a.at("target");
            row.query_count = a.at("query_count");
            row.files = a.at("files");
            row.files_modified = a.at("files_modified");
            row.mean_size = a.at("mean_size");
            row.mean_added = a.at("mean_added");
            row.detection = a.at("detection").get<std::map<std::string, double>>();
            const auto& s = a.at("superset");
            row.superset = {s.at("vectors_checked"), s.at("vectors_superset"), s.at("files_checked"), s.at("files_superset")};
            row.warnings = a.at("warnings").get<std::vector<std::string>>();
            r.attacks.push_back(std::move(row));
        }
        for (const auto& g : j.at("gap_sweep")) {
            r.gap_sweep.push_back({g.at("gap"), g.at("files"), g.at("mean_size"), g.at("mean_appended"),
                                   g.at("detection").get<std::map<std::string, double>>()});
        }
        if (!j.at("exact_comparison").is_null()) {
            const auto& e = j.at("exact_comparison");
            r.exact = ExactComparison{e.at("gap"), e.at("files"), e.at("mean_appended_relaxed"),
                                      e.at("mean_appended_exact"), e.at("infeasible_exact")};
        }
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.runtime.total_seconds = j.at("runtime").at("total_seconds");
        r.runtime.stages = j.at("runtime").at("stages").get<std::map<std::string, double>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

/// Canonical text used for determinism checks: everything but the runtime.
inline std::string deterministic_dump(const ExperimentReport& r) {
    auto j = report_to_json(r);
    j.erase("runtime");
    return j.dump();
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { json, csv, markdown };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ConfigError("unknown report format '" + s + "'");
}

namespace detail {

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string gap_label(double g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", g);
    return buf;
}

inline void md_row(std::ostringstream& os, const std::vector<std::string>& cells) {
    os << '|';
    for (const auto& c : cells) os << ' ' << c << " |";
    os << '\n';
}

inline void md_header(std::ostringstream& os, const std::vector<std::string>& cells) {
    md_row(os, cells);
    os << '|';
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i == 0 ? "---|" : "---:|");
    os << '\n';
}

inline std::vector<std::string> sweep_detectors(const ExperimentReport& r) {
    std::vector<std::string> names;
    for (const auto& d : r.detectors) {
        bool present = !r.gap_sweep.empty();
        for (const auto& g : r.gap_sweep) present = present && g.detection.count(d.name);
        if (present) names.push_back(d.name);
    }
    return names;
}

} // namespace detail

/// Rows are detectors; columns are the original set then each attack.
inline std::string render_detection_csv(const ExperimentReport& r) {
    std::ostringstream os;
    os << "detector,original";
    for (const auto& a : r.attacks) os << ',' << csv::quote(a.name);
    os << '\n';
    for (const auto& d : r.detectors) {
        os << csv::quote(d.name) << ',' << csv::format_double(d.detection_rate);
        for (const auto& a : r.attacks) {
            auto it = a.detection.find(d.name);
            os << ',' << (it == a.detection.end() ? std::string() : csv::format_double(it->second));
        }
        os << '\n';
    }
    return os.str();
}

inline std::string render_gap_csv(const ExperimentReport& r) {
    auto names = detail::sweep_detectors(r);
    std::ostringstream os;
    os << "gap,files,mean_size,mean_appended";
    for (const auto& n : names) os << ',' << csv::quote(n);
    os << '\n';
    for (const auto& g : r.gap_sweep) {
        os << csv::format_double(g.gap) << ',' << g.files << ',' << csv::format_double(g.mean_size) << ','
           << csv::format_double(g.mean_appended);
        for (const auto& n : names) os << ',' << csv::format_double(g.detection.at(n));
        os << '\n';
    }
    return os.str();
}

inline std::string render_queries_csv(const ExperimentReport& r) {
    std::ostringstream os;
    os << "attack,method,family,target,query_count,files,files_modified,mean_size,mean_added\n";
    for (const auto& a : r.attacks) {
        os << csv::quote(a.name) << ',' << a.method << ',' << a.family << ',' << csv::quote(a.target) << ','
           << a.query_count << ',' << a.files << ',' << a.files_modified << ',' << csv::format_double(a.mean_size)
           << ',' << csv::format_double(a.mean_added) << '\n';
    }
    return os.str();
}

inline std::string render_markdown(const ExperimentReport& r) {
    std::ostringstream os;
    os << "# Experiment report\n\n";
    os << "- tool version: " << r.tool_version << "\n- config hash: " << r.config_hash << "\n- seed: " << r.seed
       << "\n\n";

    os << "## Detection rate\n\n";
    std::vector<std::string> head{"Detector", "Original"};
    for (const auto& a : r.attacks) head.push_back(a.name);
    detail::md_header(os, head);
    for (const auto& d : r.detectors) {
        std::vector<std::string> row{d.name, detail::pct(d.detection_rate)};
        for (const auto& a : r.attacks) {
            auto it = a.detection.find(d.name);
            row.push_back(it == a.detection.end() ? "-" : detail::pct(it->second));
        }
        detail::md_row(os, row);
    }
    if (r.detectors.empty()) os << "\n_No detectors._\n";
    os << '\n';

    if (!r.gap_sweep.empty()) {
        os << "## Gap sweep\n\n";
        std::vector<std::string> gh{"Metric"};
        for (const auto& g : r.gap_sweep) gh.push_back("g=" + detail::gap_label(g.gap));
        detail::md_header(os, gh);
        std::vector<std::string> size_row{"Mean file size (KB)"};
        for (const auto& g : r.gap_sweep) size_row.push_back(detail::fixed(g.mean_size / 1024.0, 2));
        detail::md_row(os, size_row);
        for (const auto& n : detail::sweep_detectors(r)) {
            std::vector<std::string> row{n};
            for (const auto& g : r.gap_sweep) row.push_back(detail::pct(g.detection.at(n)));
            detail::md_row(os, row);
        }
        os << '\n';
    }
    if (r.exact) {
        os << "## Exact vs relaxed padding\n\n";
        detail::md_header(os, {"Mode", "Mean appended (KB)"});
        detail::md_row(os, {"relaxed g=" + detail::gap_label(r.exact->gap), detail::fixed(r.exact->mean_appended_relaxed / 1024.0, 2)});
        detail::md_row(os, {"exact", detail::fixed(r.exact->mean_appended_exact / 1024.0, 2)});
        os << '\n';
    }
    if (!r.attacks.empty()) {
        os << "## Queries\n\n";
        detail::md_header(os, {"Attack", "Target", "Queries"});
        for (const auto& a : r.attacks) detail::md_row(os, {a.name, a.target.empty() ? "-" : a.target, std::to_string(a.query_count)});
        os << '\n';
    }
    if (!r.warnings.empty()) {
        os << "## Warnings\n\n";
        for (const auto& w : r.warnings) os << "- " << w << '\n';
        os << '\n';
    }
    return os.str();
}

/// Writes the rendering into `dir`; returns the files written.
inline std::vector<std::filesystem::path> report_render(const ExperimentReport& r, ReportFormat format,
                                                        const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<fs::path> written;
    auto put = [&](const char* name, const std::string& text) {
        fs::path p = dir / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write " + p.string());
        out << text;
        written.push_back(p);
    };
    switch (format) {
    case ReportFormat::json: put("report.json", report_to_json(r).dump(2) + "\n"); break;
    case ReportFormat::csv:
        put("detection.csv", render_detection_csv(r));
        put("gap_sweep.csv", render_gap_csv(r));
        put("queries.csv", render_queries_csv(r));
        break;
    case ReportFormat::markdown: put("report.md", render_markdown(r)); break;
    }
    return written;
}

inline ExperimentReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open report " + path);
    try {
        return report_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("report " + path + ": " + e.what());
    }
}

} // namespace gevd
