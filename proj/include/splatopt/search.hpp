// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/evaluator.hpp"
#include "splatopt/llm.hpp"
#include "splatopt/planner.hpp"
#include "splatopt/templates.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatopt {

enum class AdviceMode { None, Plan, PrunedPlan };

std::string to_string(AdviceMode m); // "none", "plan", "pruned_plan"
AdviceMode advice_mode_from_string(const std::string &s);

struct SearchConfig {
    std::size_t max_iterations = 40;
    std::size_t population_size = 16;
    std::size_t top_k = 8;
    std::uint64_t seed = 0;
    AdviceMode advice_mode = AdviceMode::PrunedPlan;
    bool check_enabled = false;
    double tolerance = kDefaultTolerance;
    std::size_t record_every = 10;
    // Iterations evaluated side by side from one population snapshot.
    // 1 is strictly sequential.
    std::size_t batch_size = 1;
};

/// Throws InputError for top_k > population_size, zero sizes or record_every 0.
void validate(const SearchConfig &cfg);
SearchConfig search_config_from_json(const nlohmann::json &j);
nlohmann::json search_config_to_json(const SearchConfig &cfg);

struct Member {
    std::string id;
    SourceProgram program;
    EvaluationResult result;
    std::size_t iteration = 0; // 0 for the baseline
    std::size_t order = 0;     // insertion counter
};

using Population = std::vector<Member>;

/// Short content hash of a program.
std::string candidate_id(const SourceProgram &p);

/// Uniform draw among the top_k members (score desc, latency asc, insertion
/// order asc). Deterministic in (seed, iteration).
const Member &select_parent(const Population &population, std::size_t top_k, std::uint64_t seed,
                            std::size_t iteration);

/// Appends below capacity, else replaces the worst member when strictly
/// better. Zero-score candidates and programs already present are never
/// inserted. Returns whether the population changed.
bool insert_candidate(Population &population, Member candidate, std::size_t capacity);

struct IterationRecord {
    std::size_t iteration = 0;
    std::string candidate_id;
    std::string parent_id;
    std::vector<std::string> tags;
    double score = 0.0;
    double speedup = 0.0;
    double accuracy_err = 0.0;
    std::optional<FailureKind> failure;
    std::string detail;
    bool checked = false;
    bool inserted = false;
    unsigned llm_calls = 0;
    std::string review;
};

nlohmann::json record_to_json(const IterationRecord &r);

struct Checkpoint {
    std::size_t iteration = 0;
    std::string id;
    std::string program;
};

struct SearchReport {
    std::vector<std::pair<std::size_t, double>> best_curve;
    std::vector<std::pair<std::size_t, double>> error_curve;
    std::string final_best_id;
    SourceProgram final_best;
    double final_best_score = 0.0;
    std::size_t total_llm_calls = 0;
    std::size_t planning_llm_calls = 0;
    std::vector<IterationRecord> iterations;
    Population population;
    std::vector<Checkpoint> checkpoints;
    std::vector<std::string> advice_titles;
};

nlohmann::json report_to_json(const SearchReport &r, const SearchConfig &cfg);

struct AdviceBundle {
    std::optional<Plan> plan;
    std::optional<PrunedPlan> pruned;
    std::vector<OptimizationAdvice> advice;
    std::size_t llm_calls = 0;
};

/// Runs the planner (and, for pruned_plan, the prune stage) once up front.
AdviceBundle prepare_advice(AdviceMode mode, const SourceProgram &baseline, const ProfileContext &profile,
                            Gateway &gateway, const TemplateSet &templates);

/// The evolutionary loop. Candidate failures become zero-score records;
/// only configuration and authentication errors escape.
SearchReport run_search(const SearchConfig &cfg, const Evaluator &evaluator, Gateway &gateway,
                        const TemplateSet &templates, const AdviceBundle &advice);

/// run.json, iterations.jsonl, best/<iteration>.src and report.json.
/// `meta` is stored verbatim in run.json and nowhere else.
void write_run_dir(const std::filesystem::path &dir, const nlohmann::json &config_snapshot, const nlohmann::json &meta,
                   const SearchReport &report, const SearchConfig &cfg);

} // namespace splatopt
