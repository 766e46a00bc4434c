// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/llm.hpp"
#include "splatopt/tags.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace splatopt {

// Deterministic stand-ins for the four LLM roles. Every function is a pure
// function of its arguments: the seed and a hash of the prompt drive all
// random choices.
//
// Generated candidates carry one `// @transform <tag>` line per applied
// transformation and a `// @generator <label>` line at the top of block 0.
// The cost-model evaluator reads those tags.

inline constexpr std::string_view kUnsafeInnerLoopTag = "remove-inner-loop";

// What the mock "knows" about one transformation.
struct MockTransform {
    std::string tag;
    std::vector<std::string> keywords; // lowercase, matched against advice text
    bool unsafe = false;
    // Emitted only when advice asks for it.
    bool needs_advice = false;
    std::string advice_title;
    std::string advice_rationale;
    std::string precondition;
    // Phrase the profile description must contain for the mock planner to
    // keep this advice when pruning; empty keeps it unconditionally.
    std::string keep_if;
    std::string keep_reason;
    std::string drop_reason;
};

const std::vector<MockTransform> &mock_transforms();
const MockTransform *find_mock_transform(std::string_view tag);

/// Defaults used when a config leaves catalog_bias empty.
std::map<std::string, double> default_catalog_bias();

std::string mock_plan(std::string_view prompt);
std::string mock_prune(std::string_view prompt);
std::string mock_generate(const MockProfile &profile, std::uint64_t seed, std::string_view prompt,
                          std::string_view label = "mock");
std::string mock_check(const MockProfile &profile, std::uint64_t seed, std::string_view original,
                       std::string_view candidate);
std::string mock_review(std::uint64_t seed, std::string_view prompt);

/// Dispatches on cfg.role (and on the `Task:` line for the planner).
std::string mock_respond(const BackendConfig &cfg, std::string_view prompt);

} // namespace splatopt
