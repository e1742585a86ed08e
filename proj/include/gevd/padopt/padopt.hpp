#pragma once

// Minimal padding so that a file's byte distribution reaches a target r,
// exactly or within a gap g. With T the padded length, the relaxed model is
//
//   minimize sum p_i  s.t.  r_i T - g' <= b_i + p_i <= r_i T + g',  p_i >= 0,
//   T = sum (b_j + p_j),
//
// where g' = g T (ratio units, default) or g' = g (count units). For fixed T
// the bins decouple into intervals [l_i(T), u_i(T)], so the optimum is the
// smallest T at which those intervals can sum to T - sum b. Feasibility is
// monotone in T and located by bisection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/features/matrix_io.hpp"

namespace gevd {

enum class PadMode { exact, relaxed };
enum class GapUnits { ratio, count };

inline std::string to_string(PadMode m) { return m == PadMode::exact ? "exact" : "relaxed"; }

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& msg, std::vector<std::size_t> bins) : Error(msg), bins(std::move(bins)) {}
    std::vector<std::size_t> bins;
};

class RoundingError : public Error {
public:
    using Error::Error;
};

struct PaddingRequest {
    std::vector<std::uint64_t> b; // original counts
    std::vector<double> r;        // target distribution
    double gap = 0.001;
    PadMode mode = PadMode::relaxed;
    GapUnits units = GapUnits::ratio;

    [[nodiscard]] double effective_gap() const { return mode == PadMode::exact ? 0.0 : gap; }

    void validate() const {
        if (b.empty() || b.size() != r.size()) throw ContractError("padding request: b and r must be nonempty and equal length");
        double s = 0;
        for (double x : r) {
            if (!(x >= 0) || !std::isfinite(x)) throw ContractError("padding request: negative or non-finite target");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ContractError("padding request: target does not sum to 1");
        if (!(gap >= 0) || (units == GapUnits::ratio && gap >= 1)) throw ContractError("padding request: gap out of range");
    }
};

/// Real-valued solution of the relaxed (or exact) model.
struct RealPlan {
    std::vector<double> p;
    double T = 0;      // padded length
    double g_abs = 0;  // g' at T
    double objective = 0;
};

namespace detail {

struct GapTerms {
    double ratio = 0; // coefficient of T
    double count = 0; // constant
};

inline GapTerms gap_terms(const PaddingRequest& req) {
    double g = req.effective_gap();
    if (req.units == GapUnits::ratio) return {g, 0.0};
    return {0.0, g};
}

inline double lower(double r, double b, double T, GapTerms g) { return std::max(0.0, (r - g.ratio) * T - g.count - b); }
inline double upper(double r, double b, double T, GapTerms g) { return (r + g.ratio) * T + g.count - b; }

// relative slack absorbing rounding in sum r_i != 1 exactly
inline constexpr double kFeasTol = 1e-12;

inline bool feasible(const PaddingRequest& req, double B, double T, GapTerms g) {
    double sum_l = 0;
    for (std::size_t i = 0; i < req.b.size(); ++i) {
        double bi = static_cast<double>(req.b[i]);
        if (upper(req.r[i], bi, T, g) < -kFeasTol * std::max(1.0, T)) return false;
        sum_l += lower(req.r[i], bi, T, g);
    }
    return sum_l <= (T - B) + kFeasTol * std::max(1.0, T);
}

/// Lower bounds plus the remainder, poured into the bins furthest below
/// target first (index breaks ties), each up to its upper bound.
inline std::vector<double> water_fill(const PaddingRequest& req, double B, double T, GapTerms g) {
    const std::size_t n = req.b.size();
    std::vector<double> p(n), cap(n), deficit(n);
    double rest = T - B;
    for (std::size_t i = 0; i < n; ++i) {
        double bi = static_cast<double>(req.b[i]);
        p[i] = lower(req.r[i], bi, T, g);
        cap[i] = std::max(0.0, upper(req.r[i], bi, T, g) - p[i]);
        deficit[i] = req.r[i] * T - (bi + p[i]);
        rest -= p[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return deficit[a] > deficit[c]; });
    for (std::size_t i : order) {
        if (rest <= 0) break;
        double add = std::min(rest, cap[i]);
        p[i] += add;
        rest -= add;
    }
    return p;
}

inline std::vector<std::size_t> infeasible_bins(const PaddingRequest& req, GapTerms g) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < req.b.size(); ++i) {
        if (req.r[i] + g.ratio <= 0 && static_cast<double>(req.b[i]) > g.count) bad.push_back(i);
    }
    return bad;
}

} // namespace detail

inline RealPlan solve_relaxed(const PaddingRequest& req) {
    req.validate();
    const auto g = detail::gap_terms(req);
    auto bad = detail::infeasible_bins(req, g);
    if (!bad.empty()) {
        std::ostringstream os;
        os << "padding infeasible: target is zero for bins";
        for (auto i : bad) os << ' ' << i;
        os << " that the file already contains";
        throw InfeasibleError(os.str(), bad);
    }
    double B = 0;
    for (auto x : req.b) B += static_cast<double>(x);

    double lo = B, hi = std::max(B, 1.0);
    if (detail::feasible(req, B, lo, g)) {
        hi = lo;
    } else {
        int doublings = 0;
        while (!detail::feasible(req, B, hi, g)) {
            lo = hi;
            hi *= 2;
            if (++doublings > 200 || !std::isfinite(hi)) throw InfeasibleError("padding infeasible: no finite length", {});
        }
        for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
            double mid = lo + (hi - lo) / 2;
            if (detail::feasible(req, B, mid, g)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    RealPlan plan;
    plan.T = hi;
    plan.g_abs = g.ratio * hi + g.count;
    plan.p = detail::water_fill(req, B, hi, g);
    plan.objective = std::accumulate(plan.p.begin(), plan.p.end(), 0.0);
    return plan;
}

/// Equality model: T = max b_i / r_i, p_i = r_i T - b_i.
inline RealPlan solve_exact(const PaddingRequest& req) {
    req.validate();
    std::vector<std::size_t> bad;
    double T = 0, B = 0;
    for (std::size_t i = 0; i < req.b.size(); ++i) {
        double bi = static_cast<double>(req.b[i]);
        B += bi;
        if (req.r[i] <= 0) {
            if (bi > 0) bad.push_back(i);
            continue;
        }
        T = std::max(T, bi / req.r[i]);
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "exact padding infeasible: target is zero for bins";
        for (auto i : bad) os << ' ' << i;
        throw InfeasibleError(os.str(), bad);
    }
    T = std::max(T, B);
    RealPlan plan;
    plan.T = T;
    for (std::size_t i = 0; i < req.b.size(); ++i) {
        plan.p.push_back(std::max(0.0, req.r[i] * T - static_cast<double>(req.b[i])));
    }
    plan.objective = std::accumulate(plan.p.begin(), plan.p.end(), 0.0);
    return plan;
}

inline RealPlan solve(const PaddingRequest& req) {
    return req.mode == PadMode::exact ? solve_exact(req) : solve_relaxed(req);
}

inline constexpr double kRoundingSlack = 256.0;
inline constexpr int kMaxRoundingIncrements = 512;

struct Certificate {
    double T = 0;
    double g_eff = 0;
    std::vector<double> lower_slack; // (b+p) - (rT - g_eff)
    std::vector<double> upper_slack; // (rT + g_eff) - (b+p)
    double max_violation = 0;
    bool certified = false;
};

struct PaddingPlan {
    std::vector<std::uint64_t> p;
    std::uint64_t total_appended = 0;
    std::vector<double> achieved;
    Certificate certificate;
    PadMode mode = PadMode::relaxed;
    double gap = 0;
    GapUnits units = GapUnits::ratio;
};

/// Re-derives the achieved distribution and bound slacks from (b, p).
inline Certificate certify(const PaddingRequest& req, const std::vector<std::uint64_t>& p) {
    if (p.size() != req.b.size()) throw DimensionError("certify: plan and request differ in length");
    Certificate c;
    double T = 0;
    for (std::size_t i = 0; i < p.size(); ++i) T += static_cast<double>(req.b[i] + p[i]);
    double g = req.effective_gap();
    c.T = T;
    c.g_eff = (req.units == GapUnits::ratio ? g * T : g) + kRoundingSlack;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double have = static_cast<double>(req.b[i] + p[i]);
        c.lower_slack.push_back(have - (req.r[i] * T - c.g_eff));
        c.upper_slack.push_back((req.r[i] * T + c.g_eff) - have);
        c.max_violation = std::max({c.max_violation, -c.lower_slack.back(), -c.upper_slack.back()});
    }
    c.certified = c.max_violation <= 0;
    return c;
}

inline PaddingPlan round_plan(const RealPlan& real, const PaddingRequest& req) {
    if (real.p.size() != req.b.size()) throw DimensionError("round_plan: plan and request differ in length");
    PaddingPlan plan;
    plan.mode = req.mode;
    plan.gap = req.effective_gap();
    plan.units = req.units;
    for (double x : real.p) {
        if (!(x >= -1e-9) || !std::isfinite(x)) throw ContractError("round_plan: negative or non-finite real plan");
        plan.p.push_back(static_cast<std::uint64_t>(std::llround(std::max(0.0, x))));
    }
    plan.certificate = certify(req, plan.p);
    for (int step = 0; !plan.certificate.certified; ++step) {
        if (step >= kMaxRoundingIncrements) {
            throw RoundingError("round_plan: could not certify within " + std::to_string(kMaxRoundingIncrements) +
                                " increments (max violation " + std::to_string(plan.certificate.max_violation) + ")");
        }
        std::size_t worst = 0;
        double worst_deficit = -INFINITY;
        for (std::size_t i = 0; i < plan.p.size(); ++i) {
            double d = req.r[i] * plan.certificate.T - static_cast<double>(req.b[i] + plan.p[i]);
            if (d > worst_deficit) {
                worst_deficit = d;
                worst = i;
            }
        }
        ++plan.p[worst];
        plan.certificate = certify(req, plan.p);
    }
    for (std::size_t i = 0; i < plan.p.size(); ++i) {
        plan.total_appended += plan.p[i];
    }
    for (std::size_t i = 0; i < plan.p.size(); ++i) {
        plan.achieved.push_back(static_cast<double>(req.b[i] + plan.p[i]) / plan.certificate.T);
    }
    return plan;
}

inline PaddingPlan plan_padding(const PaddingRequest& req) { return round_plan(solve(req), req); }

inline std::array<std::uint64_t, 256> as_byte_counts(const PaddingPlan& plan) {
    if (plan.p.size() != 256) throw DimensionError("byte plan must have 256 bins");
    std::array<std::uint64_t, 256> out{};
    std::copy(plan.p.begin(), plan.p.end(), out.begin());
    return out;
}

inline nlohmann::json certificate_json(const PaddingPlan& plan) {
    return {{"T", plan.certificate.T},
            {"g", plan.gap},
            {"g_eff", plan.certificate.g_eff},
            {"mode", to_string(plan.mode)},
            {"max_violation", plan.certificate.max_violation},
            {"certified", plan.certificate.certified},
            {"total_appended", plan.total_appended}};
}

// Plan CSV: a comment line with T, g, mode and max violation, then
// "byte_value,count" rows for every bin.
inline std::string encode_plan_csv(const PaddingPlan& plan) {
    std::ostringstream os;
    os << "# T=" << csv::format_double(plan.certificate.T) << ",g=" << csv::format_double(plan.gap)
       << ",mode=" << to_string(plan.mode) << ",max_violation=" << csv::format_double(plan.certificate.max_violation)
       << "\n";
    os << "byte_value,count\n";
    for (std::size_t i = 0; i < plan.p.size(); ++i) os << i << ',' << plan.p[i] << '\n';
    return os.str();
}

struct PlanCsv {
    double T = 0;
    double gap = 0;
    PadMode mode = PadMode::relaxed;
    double max_violation = 0;
    std::vector<std::uint64_t> p;
};

inline PlanCsv decode_plan_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    PlanCsv out;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw FormatError("plan csv: missing header comment");
    for (const auto& kv : csv::split(line.substr(2))) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw FormatError("plan csv: malformed header");
        std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "T") out.T = csv::parse_double(v);
        else if (k == "g") out.gap = csv::parse_double(v);
        else if (k == "mode") out.mode = v == "exact" ? PadMode::exact : PadMode::relaxed;
        else if (k == "max_violation") out.max_violation = csv::parse_double(v);
    }
    if (!std::getline(is, line) || line != "byte_value,count") throw FormatError("plan csv: missing column header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = csv::split(line);
        if (f.size() != 2 || std::stoull(f[0]) != out.p.size()) throw FormatError("plan csv: bad row '" + line + "'");
        out.p.push_back(std::stoull(f[1]));
    }
    return out;
}

} // namespace gevd
