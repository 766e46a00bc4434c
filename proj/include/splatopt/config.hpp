// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/evaluator.hpp"
#include "splatopt/llm.hpp"
#include "splatopt/profile.hpp"
#include "splatopt/search.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace splatopt {

struct EvaluatorConfig {
    std::string backend = "cost_model"; // or "subprocess"
    SubprocessCommands commands;
};

struct CrossCheckConfig {
    std::filesystem::path original;
    std::vector<std::string> generators;
    std::map<std::string, std::filesystem::path> fixtures;
    std::vector<BackendConfig> checkers;
};

// One JSON file per run. Relative paths resolve against the file's
// directory; API keys are referenced by environment variable name only.
struct RunConfig {
    std::filesystem::path config_path;
    std::map<Role, BackendConfig> backends;
    SearchConfig search;
    std::filesystem::path source_path;
    std::filesystem::path scene_path;
    std::filesystem::path metrics_path;
    std::filesystem::path workload_path;
    std::filesystem::path catalog_path;
    std::filesystem::path templates_dir;
    GpuShape gpu_shape;
    // Frame size for the occupancy model; defaults to the scene size.
    std::optional<std::array<std::uint32_t, 2>> image_size;
    EvaluatorConfig evaluator;
    std::optional<CrossCheckConfig> crosscheck;
    nlohmann::json raw;
};

/// Throws InputError for unreadable JSON, bad fields, referenced files that
/// do not exist, or a backends section missing any of the four roles.
RunConfig load_run_config(const std::filesystem::path &path);
RunConfig run_config_from_json(const nlohmann::json &j, const std::filesystem::path &base_dir);

/// Replaces the search seed and derives a distinct seed for every mock.
void override_seed(RunConfig &cfg, std::uint64_t seed);
/// Turns every backend, including cross-check checkers, into a mock.
void force_mock(RunConfig &cfg);

/// Resolved config with seeds and backends as they will be used.
nlohmann::json config_snapshot(const RunConfig &cfg);

} // namespace splatopt
