// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/profile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace splatopt {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

struct Row {
    std::size_t line;
    std::string key;
    std::string value;
};

// Two-column CSV with a fixed header. Blank lines and '#' comments are skipped.
std::vector<Row> read_rows(const std::string &text, const std::string &header) {
    std::vector<Row> rows;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    bool seen_header = false;
    while (std::getline(in, raw)) {
        ++line;
        std::string l = trim(raw);
        if (line == 1 && l.rfind("\xEF\xBB\xBF", 0) == 0) l = l.substr(3);
        if (l.empty() || l.front() == '#') continue;
        const auto comma = l.find(',');
        if (comma == std::string::npos || l.find(',', comma + 1) != std::string::npos) {
            throw MalformedRow(line, "expected exactly two comma-separated fields");
        }
        std::string key = unquote(trim(l.substr(0, comma)));
        std::string value = unquote(trim(l.substr(comma + 1)));
        if (!seen_header) {
            if (key + "," + value != header) throw MalformedRow(line, "expected header '" + header + "'");
            seen_header = true;
            continue;
        }
        if (key.empty()) throw MalformedRow(line, "empty key");
        rows.push_back({line, std::move(key), std::move(value)});
    }
    if (!seen_header) throw MalformedRow(line == 0 ? 1 : line, "missing header '" + header + "'");
    return rows;
}

double to_number(const Row &r) {
    double v = 0.0;
    const char *first = r.value.data();
    const char *last = first + r.value.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw MalformedRow(r.line, "'" + r.value + "' is not a number");
    if (!std::isfinite(v) || v < 0.0) throw MalformedRow(r.line, r.key + " must be finite and >= 0");
    return v;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string read_file(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw InputError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

constexpr std::string_view kStallPrefix = "stall_";

} // namespace

SystemProfile parse_metrics_csv(const std::string &text) {
    const auto rows = read_rows(text, "metric,value");
    SystemProfile p;
    const std::vector<std::pair<std::string, double SystemProfile::*>> numeric = {
        {"ai_turning_point", &SystemProfile::ai_turning_point},
        {"perf_turning_point", &SystemProfile::perf_turning_point},
        {"ai_kernel", &SystemProfile::ai_kernel},
        {"perf_kernel", &SystemProfile::perf_kernel},
        {"warp_cycles_per_issued_instruction", &SystemProfile::warp_cycles_per_issued_instruction},
        {"theoretical_occupancy_pct", &SystemProfile::theoretical_occupancy_pct},
        {"achieved_occupancy_pct", &SystemProfile::achieved_occupancy_pct},
        {"block_limit_warps", &SystemProfile::block_limit_warps},
        {"top_unit_util_pct", &SystemProfile::top_unit_util_pct},
    };
    std::map<std::string, bool> seen;
    for (const Row &r : rows) {
        if (seen[r.key]) throw MalformedRow(r.line, "duplicate metric '" + r.key + "'");
        seen[r.key] = true;
        auto it = std::find_if(numeric.begin(), numeric.end(), [&](const auto &n) { return n.first == r.key; });
        if (it != numeric.end()) {
            p.*(it->second) = to_number(r);
            const bool pct = r.key.ends_with("_pct");
            if (pct && p.*(it->second) > 100.0) throw MalformedRow(r.line, r.key + " exceeds 100");
        } else if (r.key == "top_unit_name") {
            p.top_unit_name = r.value;
        } else if (r.key.starts_with(kStallPrefix) && r.key.size() > kStallPrefix.size()) {
            p.stalls[r.key.substr(kStallPrefix.size())] = to_number(r);
        } else {
            p.extra[r.key] = r.value;
        }
    }
    for (const auto &[name, member] : numeric) {
        if (!seen[name]) throw MissingMetric(name);
    }
    if (!seen["top_unit_name"]) throw MissingMetric("top_unit_name");
    return p;
}

SystemProfile parse_metrics(const std::filesystem::path &file) { return parse_metrics_csv(read_file(file)); }

std::string metrics_to_csv(const SystemProfile &p) {
    std::ostringstream out;
    out << "metric,value\n";
    out << "ai_turning_point," << format_number(p.ai_turning_point) << '\n';
    out << "perf_turning_point," << format_number(p.perf_turning_point) << '\n';
    out << "ai_kernel," << format_number(p.ai_kernel) << '\n';
    out << "perf_kernel," << format_number(p.perf_kernel) << '\n';
    out << "warp_cycles_per_issued_instruction," << format_number(p.warp_cycles_per_issued_instruction) << '\n';
    out << "theoretical_occupancy_pct," << format_number(p.theoretical_occupancy_pct) << '\n';
    out << "achieved_occupancy_pct," << format_number(p.achieved_occupancy_pct) << '\n';
    out << "block_limit_warps," << format_number(p.block_limit_warps) << '\n';
    out << "top_unit_name," << p.top_unit_name << '\n';
    out << "top_unit_util_pct," << format_number(p.top_unit_util_pct) << '\n';
    for (const auto &[name, v] : p.stalls) out << kStallPrefix << name << ',' << format_number(v) << '\n';
    for (const auto &[k, v] : p.extra) out << k << ',' << v << '\n';
    return out.str();
}

WorkloadStats parse_workload_csv(const std::string &text) {
    const auto rows = read_rows(text, "stat,value");
    WorkloadStats w;
    const std::vector<std::pair<std::string, double WorkloadStats::*>> fields = {
        {"mean_per_tile", &WorkloadStats::mean_per_tile},
        {"var_per_tile", &WorkloadStats::var_per_tile},
        {"mean_computed_fraction", &WorkloadStats::mean_computed_fraction},
        {"var_computed_fraction", &WorkloadStats::var_computed_fraction},
    };
    std::map<std::string, bool> seen;
    for (const Row &r : rows) {
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto &f) { return f.first == r.key; });
        if (it == fields.end()) throw MalformedRow(r.line, "unknown statistic '" + r.key + "'");
        w.*(it->second) = to_number(r);
        seen[r.key] = true;
        if (r.key == "mean_computed_fraction" && w.mean_computed_fraction > 1.0) {
            throw MalformedRow(r.line, "fraction exceeds 1");
        }
    }
    for (const auto &[name, member] : fields) {
        if (!seen[name]) throw MissingMetric(name);
    }
    return w;
}

WorkloadStats parse_workload(const std::filesystem::path &file) { return parse_workload_csv(read_file(file)); }

std::string workload_to_csv(const WorkloadStats &w) {
    std::ostringstream out;
    out << "stat,value\n"
        << "mean_per_tile," << format_number(w.mean_per_tile) << '\n'
        << "var_per_tile," << format_number(w.var_per_tile) << '\n'
        << "mean_computed_fraction," << format_number(w.mean_computed_fraction) << '\n'
        << "var_computed_fraction," << format_number(w.var_computed_fraction) << '\n';
    return out.str();
}

RooflineVerdict classify_roofline(const SystemProfile &p) {
    if (!(p.ai_turning_point > 0.0)) throw Error("turning-point arithmetic intensity must be > 0");
    RooflineVerdict v;
    v.margin = p.ai_kernel / p.ai_turning_point;
    v.kind = p.ai_kernel >= p.ai_turning_point ? Boundedness::ComputeBound : Boundedness::MemoryBound;
    return v;
}

OccupancyAnalysis compute_waves(std::uint32_t width, std::uint32_t height, std::array<std::uint32_t, 2> tile,
                                const GpuShape &shape) {
    if (width < 1 || height < 1 || tile[0] < 1 || tile[1] < 1 || shape.sm_count < 1 || shape.block_limit < 1) {
        throw Error("compute_waves: all dimensions must be >= 1");
    }
    OccupancyAnalysis o;
    o.blocks_x = (std::uint64_t{width} + tile[0] - 1) / tile[0];
    o.blocks_y = (std::uint64_t{height} + tile[1] - 1) / tile[1];
    o.total_blocks = o.blocks_x * o.blocks_y;
    o.concurrent_blocks = std::uint64_t{shape.sm_count} * shape.block_limit;
    o.waves = (o.total_blocks + o.concurrent_blocks - 1) / o.concurrent_blocks;
    return o;
}

std::pair<std::string, double> dominant_stall(const SystemProfile &p) {
    std::pair<std::string, double> best;
    bool found = false;
    // std::map iterates names in ascending order, so '>' keeps the first of ties.
    for (const auto &[name, v] : p.stalls) {
        if (name == "selected") continue;
        if (!found || v > best.second) {
            best = {name, v};
            found = true;
        }
    }
    if (!found) throw EmptyStalls("profile has no stall rows");
    return best;
}

std::string to_string(Boundedness b) { return b == Boundedness::ComputeBound ? "compute-bound" : "memory-bound"; }

} // namespace splatopt
