// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/checker.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

namespace splatopt {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string strip_emphasis(std::string s) {
    s = trim(s);
    const auto b = s.find_first_not_of("*_#`> ");
    if (b == std::string::npos) return {};
    s = s.substr(b);
    const auto e = s.find_last_not_of("*_`.: ");
    return e == std::string::npos ? std::string() : s.substr(0, e + 1);
}

std::string upper(std::string s) {
    for (auto &c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

bool starts_with_word(const std::string &s, const std::string &token) {
    if (s.rfind(token, 0) != 0) return false;
    return s.size() == token.size() || !std::isalpha(static_cast<unsigned char>(s[token.size()]));
}

std::vector<std::string> split(const std::string &line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

EquivalenceVerdict rejected(const std::string &label, const std::string &why) {
    return {false, {why}, label};
}

} // namespace

EquivalenceVerdict parse_verdict(const std::string &response, const std::string &checker_label) {
    std::istringstream in(response);
    std::string line;
    std::optional<bool> verdict;
    EquivalenceVerdict v;
    v.checker_role = checker_label;
    while (std::getline(in, line)) {
        if (!verdict) {
            const std::string head = upper(strip_emphasis(line));
            if (starts_with_word(head, "NOT EQUIVALENT"))
                verdict = false;
            else if (starts_with_word(head, "EQUIVALENT"))
                verdict = true;
            continue;
        }
        const std::string reason = trim(line);
        if (!reason.empty()) v.reasons.push_back(reason);
    }
    if (!verdict) throw UnparseableVerdict("no EQUIVALENT / NOT EQUIVALENT verdict in checker reply");
    v.equivalent = *verdict;
    if (!v.equivalent && v.reasons.empty()) v.reasons.push_back("no reason given");
    return v;
}

std::string build_check_prompt(const SourceProgram &original, const SourceProgram &candidate,
                               const TemplateSet &templates) {
    return templates.render("check", {{"original", original.full_text()}, {"candidate", candidate.full_text()}});
}

EquivalenceVerdict check(const SourceProgram &original, const SourceProgram &candidate, const BackendConfig &cfg,
                         const TemplateSet &templates, HttpTransport *transport) {
    const std::string prompt = build_check_prompt(original, candidate, templates);
    try {
        return parse_verdict(complete(cfg, prompt, transport).response, cfg.label);
    } catch (const AuthMissing &) {
        throw;
    } catch (const std::exception &e) {
        return rejected(cfg.label, std::string("check failed: ") + e.what());
    }
}

EquivalenceVerdict check(const SourceProgram &original, const SourceProgram &candidate, Gateway &gateway,
                         const TemplateSet &templates, std::uint64_t nonce) {
    const std::string label = gateway.config(Role::Checker).label;
    const std::string prompt = build_check_prompt(original, candidate, templates);
    try {
        return parse_verdict(gateway.complete(Role::Checker, prompt, nonce).response, label);
    } catch (const AuthMissing &) {
        throw;
    } catch (const std::exception &e) {
        return rejected(label, std::string("check failed: ") + e.what());
    }
}

bool check_benefit(double error_rate, unsigned calls_per_iteration, unsigned check_cost) {
    const double threshold = static_cast<double>(check_cost) / (calls_per_iteration + check_cost);
    return error_rate > threshold;
}

bool CrossCheckMatrix::at(const std::string &checker, const std::string &generator) const {
    const auto r = std::find(checkers.begin(), checkers.end(), checker);
    const auto c = std::find(generators.begin(), generators.end(), generator);
    if (r == checkers.end() || c == generators.end())
        throw InputError("no matrix cell for " + checker + "/" + generator);
    return detected[r - checkers.begin()][c - generators.begin()];
}

CrossCheckMatrix build_matrix(const std::vector<BackendConfig> &checkers, const std::vector<std::string> &generators,
                              const std::map<std::string, SourceProgram> &fixtures, const SourceProgram &original,
                              const TemplateSet &templates, HttpTransport *transport) {
    CrossCheckMatrix m;
    if (checkers.empty()) return m;
    for (const auto &g : generators)
        if (!fixtures.count(g)) throw InputError("no fixture for generator '" + g + "'");
    m.generators = generators;
    for (const auto &cfg : checkers) {
        m.checkers.push_back(cfg.label);
        std::vector<bool> row;
        for (const auto &g : generators) {
            const std::string prompt = build_check_prompt(original, fixtures.at(g), templates);
            try {
                row.push_back(!parse_verdict(complete(cfg, prompt, transport).response, cfg.label).equivalent);
            } catch (const AuthMissing &) {
                throw;
            } catch (const std::exception &e) {
                m.notes.push_back(cfg.label + "/" + g + ": " + e.what());
                row.push_back(false);
            }
        }
        m.detected.push_back(std::move(row));
    }
    return m;
}

std::string matrix_to_csv(const CrossCheckMatrix &m) {
    std::string out = "checker";
    for (const auto &g : m.generators) out += "," + g;
    out += "\n";
    for (std::size_t r = 0; r < m.checkers.size(); ++r) {
        out += m.checkers[r];
        for (bool d : m.detected[r]) out += d ? ",Y" : ",N";
        out += "\n";
    }
    return out;
}

CrossCheckMatrix matrix_from_csv(const std::string &csv) {
    std::istringstream in(csv);
    std::string line;
    CrossCheckMatrix m;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (header) {
            if (cells.empty() || cells[0] != "checker") throw InputError("matrix header must start with 'checker'");
            m.generators.assign(cells.begin() + 1, cells.end());
            header = false;
            continue;
        }
        if (cells.size() != m.generators.size() + 1)
            throw InputError("matrix line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                             " cells");
        m.checkers.push_back(cells[0]);
        std::vector<bool> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i] != "Y" && cells[i] != "N")
                throw InputError("matrix line " + std::to_string(lineno) + ": cell '" + cells[i] + "' is not Y/N");
            row.push_back(cells[i] == "Y");
        }
        m.detected.push_back(std::move(row));
    }
    if (header) throw InputError("empty matrix");
    return m;
}

} // namespace splatopt
