// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/planner.hpp"

#include "splatopt/digest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace splatopt {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string num(double v, const char *fmt = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string strip_markdown(std::string s) {
    for (const char *tok : {"**", "__", "`"}) {
        for (auto p = s.find(tok); p != std::string::npos; p = s.find(tok)) s.erase(p, std::strlen(tok));
    }
    return s;
}

// Title = first sentence (ends at ". ", "! ", "? ", ": " or end of text).
void split_title(const std::string &text, OptimizationAdvice &a) {
    std::size_t cut = std::string::npos;
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?' || c == ':') && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
            cut = i;
            break;
        }
    }
    if (cut == std::string::npos) {
        a.title = text;
        while (!a.title.empty() && (a.title.back() == '.' || a.title.back() == ':')) a.title.pop_back();
        return;
    }
    a.title = trim(text.substr(0, cut));
    a.rationale = trim(text.substr(cut + 1));
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

} // namespace

const OptimizationAdvice *Plan::find(int id) const {
    auto it = std::find_if(advice.begin(), advice.end(), [&](const auto &a) { return a.id == id; });
    return it == advice.end() ? nullptr : &*it;
}

bool PrunedPlan::keeps(int id) const { return std::find(kept.begin(), kept.end(), id) != kept.end(); }

std::string source_digest(const SourceProgram &p) { return sha256_hex(p.full_text()); }

std::string build_plan_prompt(const SourceProgram &p, const TemplateSet &templates) {
    if (p.blocks().empty()) throw NoEvolveBlocks("program has no EVOLVE-BLOCK regions to optimize");
    std::string program = p.full_text();
    if (!program.empty() && program.back() != '\n') program += '\n';
    return templates.render("plan", {{"program", program}});
}

Plan parse_advice(const std::string &response) {
    static const std::regex numbered(R"(^\s*(\d+)\s*[.)]\s+(.*\S)\s*$)");
    static const std::regex bullet(R"(^\s*(?:[-*+]|\xE2\x80\xA2)\s+(.*\S)\s*$)");

    Plan plan;
    std::istringstream in(response);
    std::string line;
    OptimizationAdvice *current = nullptr;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::smatch m;
        std::string item;
        if (std::regex_match(line, m, numbered)) {
            item = m[2].str();
        } else if (std::regex_match(line, m, bullet)) {
            item = m[1].str();
        }
        if (!item.empty()) {
            OptimizationAdvice a;
            a.id = static_cast<int>(plan.advice.size()) + 1;
            split_title(trim(strip_markdown(item)), a);
            if (a.title.empty()) {
                ++plan.skipped_lines;
                continue;
            }
            plan.advice.push_back(std::move(a));
            current = &plan.advice.back();
            continue;
        }
        const bool indented = line[0] == ' ' || line[0] == '\t';
        if (current && indented) {
            std::string text = trim(strip_markdown(line));
            for (std::string_view key : {"Preconditions:", "Precondition:", "Condition:"}) {
                if (starts_with_ci(text, key)) {
                    current->preconditions = trim(text.substr(key.size()));
                    text.clear();
                    break;
                }
            }
            if (!text.empty()) current->rationale += (current->rationale.empty() ? "" : " ") + text;
            continue;
        }
        ++plan.skipped_lines;
        current = nullptr;
    }
    if (plan.advice.empty()) throw EmptyPlan("planner response contains no list items");
    return plan;
}

std::string render_advice_list(const Plan &plan) {
    std::ostringstream out;
    for (const auto &a : plan.advice) {
        out << a.id << ". " << a.title << '.';
        if (!a.rationale.empty()) out << ' ' << a.rationale;
        out << '\n';
        if (!a.preconditions.empty()) out << "   Precondition: " << a.preconditions << '\n';
    }
    return out.str();
}

std::string describe_system(const ProfileContext &ctx) {
    const auto &sys = ctx.system;
    const auto verdict = classify_roofline(sys);
    std::ostringstream out;
    out << "- Roofline: the kernel is " << to_string(verdict.kind) << "; its arithmetic intensity "
        << num(sys.ai_kernel) << " FLOP/byte is " << num(verdict.margin, "%.2f") << "x the turning point "
        << num(sys.ai_turning_point) << " FLOP/byte (margin " << num(verdict.margin, "%.2f") << ").\n";
    out << "- Throughput: " << num(sys.perf_kernel) << " FLOP/s achieved against " << num(sys.perf_turning_point)
        << " FLOP/s at the turning point.\n";
    if (!sys.stalls.empty()) {
        try {
            const auto [name, value] = dominant_stall(sys);
            out << "- Dominant stall: " << name << " (" << num(value) << " cycles per issued instruction).\n";
        } catch (const EmptyStalls &) {
        }
        out << "- Stall breakdown:";
        for (const auto &[name, value] : sys.stalls) out << ' ' << name << '=' << num(value);
        out << ".\n";
    }
    out << "- Warp cycles per issued instruction: " << num(sys.warp_cycles_per_issued_instruction) << ".\n";
    out << "- Occupancy: achieved " << num(sys.achieved_occupancy_pct) << "% of a theoretical "
        << num(sys.theoretical_occupancy_pct) << "%; block limit " << num(sys.block_limit_warps)
        << " blocks per SM.\n";
    const auto &occ = ctx.occupancy;
    out << "- Launch: " << occ.blocks_x << "x" << occ.blocks_y << " = " << occ.total_blocks << " thread blocks, "
        << occ.concurrent_blocks << " resident at once, so the GPU runs " << occ.waves
        << (occ.waves == 1 ? " wave" : " waves") << ".\n";
    if (!sys.top_unit_name.empty()) {
        out << "- Highest pipe utilization: " << sys.top_unit_name << " (" << num(sys.top_unit_util_pct)
            << "% of active cycles).\n";
    }
    return out.str();
}

std::string describe_workload(const WorkloadStats &wl) {
    std::ostringstream out;
    out << "- Splats per tile: mean " << num(wl.mean_per_tile) << ", variance " << num(wl.var_per_tile) << " ("
        << (wl.mean_per_tile >= kHighIterationCount ? "high" : "low") << " iteration count per thread block";
    const double cv2 = wl.mean_per_tile > 0 ? wl.var_per_tile / (wl.mean_per_tile * wl.mean_per_tile) : 0.0;
    out << (cv2 > 0.25 ? ", high inter-block imbalance" : ", low inter-block imbalance") << ").\n";
    out << "- Fraction of assigned splats computed per thread: mean " << num(wl.mean_computed_fraction * 100.0)
        << "%, variance " << num(wl.var_computed_fraction) << ". ";
    if (wl.mean_computed_fraction >= kRareEarlyStopFraction) {
        out << "Most splats are computed, so early stop rarely fires.\n";
    } else {
        out << "Early stop fires often and skips a large share of the splats.\n";
    }
    return out.str();
}

std::string profile_digest(const ProfileContext &ctx) {
    std::ostringstream s;
    s << metrics_to_csv(ctx.system) << workload_to_csv(ctx.workload) << ctx.occupancy.blocks_x << ','
      << ctx.occupancy.blocks_y << ',' << ctx.occupancy.concurrent_blocks << ',' << ctx.occupancy.waves;
    return sha256_hex(s.str());
}

std::string build_prune_prompt(const Plan &plan, const ProfileContext &ctx, const TemplateSet &templates) {
    if (plan.advice.empty()) throw EmptyPlan("nothing to prune");
    std::ostringstream items;
    for (const auto &a : plan.advice) {
        items << '[' << a.id << "] " << a.title << '.';
        if (!a.rationale.empty()) items << ' ' << a.rationale;
        if (!a.preconditions.empty()) items << " (Precondition: " << a.preconditions << ')';
        items << '\n';
    }
    return templates.render("prune", {{"advice", items.str()},
                                      {"system", describe_system(ctx)},
                                      {"workload", describe_workload(ctx.workload)}});
}

PrunedPlan parse_pruned(const std::string &response, const Plan &plan) {
    enum class Mode { Keep, Drop };
    static const std::set<std::string> keep_words = {"keep", "kept", "select", "selected", "retain", "retained"};
    static const std::set<std::string> drop_words = {"drop",      "dropped", "discard", "discarded", "reject",
                                                     "rejected",  "prune",   "pruned",  "remove",    "removed",
                                                     "eliminate", "skip"};
    std::map<int, std::pair<Mode, std::string>> decisions;
    Mode mode = Mode::Keep;
    const std::string &s = response;
    auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
    auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };

    std::size_t i = 0;
    while (i < s.size()) {
        if (is_alpha(s[i])) {
            std::size_t j = i;
            std::string word;
            while (j < s.size() && (is_alpha(s[j]) || s[j] == '_' || is_digit(s[j]))) {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[j]))));
                ++j;
            }
            if (keep_words.count(word)) mode = Mode::Keep;
            if (drop_words.count(word)) mode = Mode::Drop;
            i = j;
            continue;
        }
        if (!is_digit(s[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_digit(s[j])) ++j;
        const bool decimal_tail = j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1]);
        const bool decimal_head = i >= 2 && s[i - 1] == '.' && is_digit(s[i - 2]);
        const bool glued = j < s.size() && (is_alpha(s[j]) || s[j] == '%');
        if (decimal_tail || decimal_head || glued || j - i > 6) {
            i = j;
            while (i < s.size() && (is_digit(s[i]) || s[i] == '.')) ++i;
            continue;
        }
        const int id = std::stoi(s.substr(i, j - i));
        std::size_t k = j;
        while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
        std::string reason;
        if (k < s.size() && s[k] == '(') {
            int depth = 0;
            std::size_t e = k;
            for (; e < s.size(); ++e) {
                if (s[e] == '(') ++depth;
                if (s[e] == ')' && --depth == 0) break;
            }
            reason = trim(s.substr(k + 1, e - k - 1));
            j = std::min(e + 1, s.size());
        } else if (k < s.size() && (s[k] == ':' || s[k] == '-')) {
            const std::size_t eol = s.find_first_of("\n;", k);
            reason = trim(s.substr(k + 1, (eol == std::string::npos ? s.size() : eol) - k - 1));
            j = eol == std::string::npos ? s.size() : eol;
        }
        if (plan.find(id)) {
            auto it = decisions.find(id);
            if (it == decisions.end() || mode == Mode::Drop) decisions[id] = {mode, reason};
        }
        i = j;
    }
    if (decisions.empty()) throw NoIdsRecognized("pruning response references no advice id of the plan");

    PrunedPlan out;
    for (const auto &a : plan.advice) {
        auto it = decisions.find(a.id);
        if (it == decisions.end()) {
            out.dropped.emplace_back(a.id, "unmentioned");
        } else if (it->second.first == Mode::Keep) {
            out.kept.push_back(a.id);
        } else {
            out.dropped.emplace_back(a.id, it->second.second.empty() ? "dropped by planner" : it->second.second);
        }
    }
    return out;
}

std::vector<OptimizationAdvice> selected_advice(const Plan &plan, const PrunedPlan *pruned) {
    std::vector<OptimizationAdvice> out;
    for (const auto &a : plan.advice) {
        if (!pruned || pruned->keeps(a.id)) out.push_back(a);
    }
    return out;
}

std::string advice_prompt_section(const std::vector<OptimizationAdvice> &advice) {
    if (advice.empty()) return {};
    std::ostringstream out;
    out << "Here are first " << advice.size() << " to try.\n";
    for (const auto &a : advice) out << a.title << ".\n";
    return out.str();
}

json plan_to_json(const Plan &plan) {
    json items = json::array();
    for (const auto &a : plan.advice) {
        items.push_back(
            {{"id", a.id}, {"title", a.title}, {"rationale", a.rationale}, {"preconditions", a.preconditions}});
    }
    return {{"source_digest", plan.source_digest}, {"advice", std::move(items)}};
}

Plan plan_from_json(const json &j) {
    try {
        Plan plan;
        plan.source_digest = j.value("source_digest", "");
        std::set<int> ids;
        for (const auto &ja : j.at("advice")) {
            OptimizationAdvice a;
            a.id = ja.at("id").get<int>();
            a.title = ja.at("title").get<std::string>();
            a.rationale = ja.value("rationale", "");
            a.preconditions = ja.value("preconditions", "");
            if (a.title.empty()) throw InputError("advice " + std::to_string(a.id) + " has an empty title");
            if (!ids.insert(a.id).second) throw InputError("duplicate advice id " + std::to_string(a.id));
            plan.advice.push_back(std::move(a));
        }
        return plan;
    } catch (const json::exception &e) {
        throw InputError(std::string("malformed plan: ") + e.what());
    }
}

json pruned_to_json(const PrunedPlan &pruned) {
    json dropped = json::array();
    for (const auto &[id, reason] : pruned.dropped) dropped.push_back({{"id", id}, {"reason", reason}});
    return {{"profile_digest", pruned.profile_digest}, {"kept", pruned.kept}, {"dropped", std::move(dropped)}};
}

PrunedPlan pruned_from_json(const json &j) {
    try {
        PrunedPlan p;
        p.profile_digest = j.value("profile_digest", "");
        p.kept = j.at("kept").get<std::vector<int>>();
        for (const auto &d : j.at("dropped")) p.dropped.emplace_back(d.at("id").get<int>(), d.value("reason", ""));
        return p;
    } catch (const json::exception &e) {
        throw InputError(std::string("malformed pruned plan: ") + e.what());
    }
}

} // namespace splatopt
