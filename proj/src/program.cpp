// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/program.hpp"

#include <fstream>
#include <sstream>

namespace splatopt {

namespace {

bool contains(std::string_view line, std::string_view needle) {
    return line.find(needle) != std::string_view::npos;
}

// Splits on '\n', keeping the terminator on every line but possibly the last.
std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl + 1;
        lines.push_back(text.substr(pos, end - pos));
        pos = end;
    }
    return lines;
}

std::string to_crlf(std::string_view text) {
    std::string out;
    out.reserve(text.size() + text.size() / 16);
    for (char c : text) {
        if (c == '\n') out.push_back('\r');
        out.push_back(c);
    }
    return out;
}

} // namespace

std::string normalize_line_endings(std::string_view text, LineEnding *detected) {
    std::size_t lf = 0;
    std::size_t crlf = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\n') continue;
        ++lf;
        if (i > 0 && text[i - 1] == '\r') ++crlf;
    }
    // Mixed endings are left untouched so the round trip stays byte-exact.
    const bool all_crlf = lf > 0 && crlf == lf;
    if (detected) *detected = all_crlf ? LineEnding::CRLF : LineEnding::LF;
    if (!all_crlf) return std::string(text);
    std::string out;
    out.reserve(text.size() - crlf);
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
        out.push_back(text[i]);
    }
    return out;
}

SourceProgram extract_blocks(std::string_view raw) {
    SourceProgram p;
    p.full_text_ = normalize_line_endings(raw, &p.line_ending_);

    std::string outside;
    std::string body;
    bool in_block = false;
    std::size_t line_no = 0;
    std::size_t block_start = 0;

    for (std::string_view line : split_lines(p.full_text_)) {
        ++line_no;
        const bool is_start = contains(line, kBlockStartMarker);
        const bool is_end = contains(line, kBlockEndMarker);
        if (is_start && is_end) {
            throw UnbalancedMarkers("line " + std::to_string(line_no) +
                                    ": START and END markers on one line");
        }
        if (is_start) {
            if (in_block) {
                throw UnbalancedMarkers("line " + std::to_string(line_no) +
                                        ": nested EVOLVE-BLOCK-START");
            }
            if (line.back() != '\n') {
                throw UnbalancedMarkers("line " + std::to_string(line_no) +
                                        ": EVOLVE-BLOCK-START on the last line");
            }
            outside.append(line);
            p.outside_.push_back(std::move(outside));
            outside.clear();
            in_block = true;
            block_start = line_no + 1;
            continue;
        }
        if (is_end) {
            if (!in_block) {
                throw UnbalancedMarkers("line " + std::to_string(line_no) +
                                        ": EVOLVE-BLOCK-END without START");
            }
            EvolveBlock b;
            b.index = p.blocks_.size();
            b.body = std::move(body);
            b.start_line = block_start;
            b.end_line = line_no - 1;
            p.blocks_.push_back(std::move(b));
            body.clear();
            in_block = false;
            outside.append(line);
            continue;
        }
        (in_block ? body : outside).append(line);
    }
    if (in_block) {
        throw UnbalancedMarkers("EVOLVE-BLOCK-START at line " + std::to_string(block_start - 1) +
                                " has no matching END");
    }
    p.outside_.push_back(std::move(outside));
    return p;
}

std::string SourceProgram::reassemble() const {
    std::string out = outside_.empty() ? std::string() : outside_.front();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        out += blocks_[i].body;
        out += outside_[i + 1];
    }
    return out;
}

std::string SourceProgram::serialized() const {
    return line_ending_ == LineEnding::LF ? full_text_ : to_crlf(full_text_);
}

SourceProgram load_program(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read source file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    SourceProgram p = extract_blocks(ss.str());
    p.set_origin_path(path);
    return p;
}

void save_program(const SourceProgram &p, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << p.serialized();
}

SourceProgram apply_modification(const SourceProgram &p, const Modification &m) {
    for (const auto &[index, text] : m.replacements) {
        if (index >= p.blocks().size()) {
            throw UnknownBlockIndex("modification '" + m.id + "' targets block " +
                                    std::to_string(index) + " but the program has " +
                                    std::to_string(p.blocks().size()));
        }
        if (contains(text, kBlockStartMarker) || contains(text, kBlockEndMarker)) {
            throw UnbalancedMarkers("modification '" + m.id + "' puts a marker inside block " +
                                    std::to_string(index));
        }
    }
    std::string text = p.outside().front();
    for (std::size_t i = 0; i < p.blocks().size(); ++i) {
        auto it = m.replacements.find(i);
        if (it == m.replacements.end()) {
            text += p.blocks()[i].body;
        } else {
            text += it->second;
            if (!it->second.empty() && it->second.back() != '\n') text += '\n';
        }
        text += p.outside()[i + 1];
    }
    SourceProgram out =
        extract_blocks(p.line_ending() == LineEnding::CRLF ? to_crlf(text) : text);
    out.set_origin_path(p.origin_path());
    return out;
}

SourceProgram apply_sequence(const SourceProgram &p0, const ModificationSequence &s) {
    SourceProgram p = p0;
    for (const auto &m : s.steps()) p = apply_modification(p, m);
    return p;
}

void ModificationSequence::push(Modification m) {
    if (steps_.size() >= bound_) {
        throw SequenceFull("sequence already holds its bound of " + std::to_string(bound_) +
                           " modifications");
    }
    steps_.push_back(std::move(m));
}

bool diff_outside_blocks(const SourceProgram &p, std::string_view candidate_text) {
    const SourceProgram c = extract_blocks(candidate_text);
    return c.outside() != p.outside();
}

} // namespace splatopt
