// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/profile.hpp"
#include "splatopt/program.hpp"
#include "splatopt/templates.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace splatopt {

class NoEvolveBlocks : public Error {
  public:
    using Error::Error;
};

class EmptyPlan : public Error {
  public:
    using Error::Error;
};

class NoIdsRecognized : public Error {
  public:
    using Error::Error;
};

struct OptimizationAdvice {
    int id = 0;
    std::string title;
    std::string rationale;
    std::string preconditions;
};

struct Plan {
    std::vector<OptimizationAdvice> advice;
    std::string source_digest;
    // Lines in the planner response that were neither list items nor
    // continuations of one.
    std::size_t skipped_lines = 0;

    const OptimizationAdvice *find(int id) const;
};

struct PrunedPlan {
    std::vector<int> kept;
    std::vector<std::pair<int, std::string>> dropped;
    std::string profile_digest;

    bool keeps(int id) const;
};

// Split at which the prune prompt calls a tile's splat count a high
// iteration count. Matches the shared-memory batch of a 16x16 tile.
inline constexpr double kHighIterationCount = 256.0;
// Computed fraction at or above which early stop is reported as rare.
inline constexpr double kRareEarlyStopFraction = 0.9;

/// Digest recorded in a Plan: SHA-256 of the program text.
std::string source_digest(const SourceProgram &p);

/// Throws NoEvolveBlocks when the program has nothing to evolve.
std::string build_plan_prompt(const SourceProgram &p, const TemplateSet &templates = TemplateSet::defaults());

/// Numbered ("1." / "1)") and bulleted ("-", "*") lines become advice in
/// order, renumbered from 1. Indented lines continue the previous item.
/// Throws EmptyPlan when nothing is recognized.
Plan parse_advice(const std::string &response);

/// Canonical numbered list: "1. Title. Rationale" plus an indented
/// "Precondition:" line when present.
std::string render_advice_list(const Plan &plan);

struct ProfileContext {
    SystemProfile system;
    WorkloadStats workload;
    OccupancyAnalysis occupancy;
};

std::string describe_system(const ProfileContext &ctx);
std::string describe_workload(const WorkloadStats &wl);
std::string profile_digest(const ProfileContext &ctx);

/// Throws EmptyPlan for a plan with no advice.
std::string build_prune_prompt(const Plan &plan, const ProfileContext &ctx,
                               const TemplateSet &templates = TemplateSet::defaults());

/// Ids are read in KEEP/DROP context ("keep 1,3; drop 2 (reason)"); a
/// parenthesized or colon-led text after an id is its reason. Ids never
/// mentioned are dropped as "unmentioned", and an id both kept and dropped
/// ends up dropped. Throws NoIdsRecognized when no plan id appears.
PrunedPlan parse_pruned(const std::string &response, const Plan &plan);

/// Advice the generator should see: the whole plan or only what was kept.
std::vector<OptimizationAdvice> selected_advice(const Plan &plan, const PrunedPlan *pruned);

/// "Here are first N to try." followed by one title per line; empty for no advice.
std::string advice_prompt_section(const std::vector<OptimizationAdvice> &advice);

nlohmann::json plan_to_json(const Plan &plan);
Plan plan_from_json(const nlohmann::json &j);
nlohmann::json pruned_to_json(const PrunedPlan &pruned);
PrunedPlan pruned_from_json(const nlohmann::json &j);

} // namespace splatopt
