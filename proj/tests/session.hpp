// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Builds everything a search needs from a run config, the way the CLI does,
// so tests and the acceptance binary can drive run_search in-process.

#include "splatopt/config.hpp"
#include "splatopt/scene_io.hpp"
#include "splatopt/search.hpp"

#include <filesystem>
#include <memory>

namespace splatopt::testkit {

struct Session {
    RunConfig cfg;
    SourceProgram baseline;
    Scene scene;
    TemplateSet templates;
    ProfileContext profile;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Evaluator> evaluator;

    AdviceBundle advice() { return prepare_advice(cfg.search.advice_mode, baseline, profile, *gateway, templates); }
    SearchReport search() { return run_search(cfg.search, *evaluator, *gateway, templates, advice()); }
};

inline Session open_session(RunConfig cfg) {
    Session s;
    s.baseline = load_program(cfg.source_path);
    s.scene = load_scene(cfg.scene_path);
    s.templates = cfg.templates_dir.empty() ? TemplateSet::defaults() : TemplateSet::load(cfg.templates_dir);
    s.profile.system = parse_metrics(cfg.metrics_path);
    s.profile.workload = parse_workload(cfg.workload_path);
    const auto dims = cfg.image_size.value_or(std::array<std::uint32_t, 2>{s.scene.width, s.scene.height});
    s.profile.occupancy = compute_waves(dims[0], dims[1], s.scene.tile, cfg.gpu_shape);
    s.gateway = std::make_unique<Gateway>(cfg.backends);
    auto backend = std::make_shared<CostModelBackend>(TransformCatalog::load(cfg.catalog_path), s.profile.workload,
                                                      s.profile.system, s.scene);
    s.evaluator = std::make_unique<Evaluator>(s.baseline, backend, cfg.search.tolerance);
    s.cfg = std::move(cfg);
    return s;
}

inline RunConfig mock_config() {
    return load_run_config(std::filesystem::path(SPLATOPT_DATA_DIR) / "configs" / "search_mock.json");
}

} // namespace splatopt::testkit
