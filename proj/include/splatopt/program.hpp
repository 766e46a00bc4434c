// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/error.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace splatopt {

inline constexpr std::string_view kBlockStartMarker = "EVOLVE-BLOCK-START";
inline constexpr std::string_view kBlockEndMarker = "EVOLVE-BLOCK-END";

class UnbalancedMarkers : public Error {
  public:
    using Error::Error;
};

class UnknownBlockIndex : public Error {
  public:
    using Error::Error;
};

class SequenceFull : public Error {
  public:
    using Error::Error;
};

enum class LineEnding { LF, CRLF };

// A mutable region between a START and an END marker line. `body` holds the
// lines strictly between the markers, each with its trailing '\n'.
struct EvolveBlock {
    std::size_t index = 0;
    std::string body;
    // 1-based line numbers of the first and last body line. An empty body has
    // start_line == end_line + 1.
    std::size_t start_line = 0;
    std::size_t end_line = 0;
};

// Kernel source split into fixed text and evolvable blocks:
//   full_text == outside[0] + blocks[0].body + outside[1] + ... + outside[n]
// where each outside segment keeps its marker lines verbatim. full_text is
// '\n'-normalized; line_ending() records what the file used.
class SourceProgram {
  public:
    SourceProgram() = default;

    const std::string &full_text() const { return full_text_; }
    const std::vector<EvolveBlock> &blocks() const { return blocks_; }
    const std::vector<std::string> &outside() const { return outside_; }
    const std::filesystem::path &origin_path() const { return origin_path_; }
    LineEnding line_ending() const { return line_ending_; }

    /// Text with the original line endings restored.
    std::string serialized() const;

    /// Prefix + bodies + suffixes, rebuilt from the parts.
    std::string reassemble() const;

    void set_origin_path(std::filesystem::path p) { origin_path_ = std::move(p); }

  private:
    friend SourceProgram extract_blocks(std::string_view text);

    std::string full_text_;
    std::vector<EvolveBlock> blocks_;
    std::vector<std::string> outside_;
    std::filesystem::path origin_path_;
    LineEnding line_ending_ = LineEnding::LF;
};

struct Modification {
    std::string id;
    std::string description;
    std::map<std::size_t, std::string> replacements;
};

class ModificationSequence {
  public:
    explicit ModificationSequence(std::size_t bound) : bound_(bound) {}

    std::size_t bound() const { return bound_; }
    const std::vector<Modification> &steps() const { return steps_; }

    /// Throws SequenceFull once `bound` steps are held.
    void push(Modification m);

  private:
    std::vector<Modification> steps_;
    std::size_t bound_;
};

/// Splits `text` on marker lines. Throws UnbalancedMarkers for a START
/// without END, END without START, nested START, or a line holding both.
SourceProgram extract_blocks(std::string_view text);

SourceProgram load_program(const std::filesystem::path &path);
void save_program(const SourceProgram &p, const std::filesystem::path &path);

/// Replaces block bodies. A non-empty replacement lacking a final newline
/// gets one so the END marker stays on its own line. Throws UnknownBlockIndex
/// for a bad index and UnbalancedMarkers if a replacement contains a marker.
SourceProgram apply_modification(const SourceProgram &p, const Modification &m);

/// (m_k o ... o m_1)(p0)
SourceProgram apply_sequence(const SourceProgram &p0, const ModificationSequence &s);

/// True iff `candidate_text` changes anything outside the block bodies of `p`
/// (including the marker lines or the number of blocks).
bool diff_outside_blocks(const SourceProgram &p, std::string_view candidate_text);

/// Normalizes CRLF to LF when every line ending in `text` is CRLF.
std::string normalize_line_endings(std::string_view text, LineEnding *detected = nullptr);

} // namespace splatopt
