// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/config.hpp"

#include "splatopt/digest.hpp"
#include "splatopt/mock_llm.hpp"

#include <fstream>

namespace splatopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const json &j, const char *key, const fs::path &base, bool required = false) {
    if (!j.contains(key)) {
        if (required) throw InputError(std::string("config: missing '") + key + "'");
        return {};
    }
    fs::path p = j.at(key).get<std::string>();
    if (p.is_relative()) p = base / p;
    p = p.lexically_normal();
    if (!fs::exists(p)) throw InputError(std::string("config: ") + key + " file not found: " + p.string());
    return p;
}

constexpr Role kRoles[] = {Role::Planner, Role::Generator, Role::Reviewer, Role::Checker};

std::uint64_t role_seed(std::uint64_t seed, std::uint64_t salt) { return mix64(seed ^ mix64(salt)); }

void make_mock(BackendConfig &b) {
    if (b.kind == BackendKind::Mock) return;
    b.kind = BackendKind::Mock;
    if (b.mock_profile.catalog_bias.empty()) b.mock_profile.catalog_bias = default_catalog_bias();
}

} // namespace

RunConfig run_config_from_json(const json &j, const fs::path &base) {
    RunConfig c;
    c.raw = j;
    try {
        if (!j.is_object()) throw InputError("config must be a JSON object");
        c.source_path = resolve(j, "source", base);
        c.scene_path = resolve(j, "scene", base);
        c.metrics_path = resolve(j, "metrics", base);
        c.workload_path = resolve(j, "workload", base);
        c.catalog_path = resolve(j, "catalog", base);
        c.templates_dir = resolve(j, "templates", base);

        if (j.contains("gpu")) {
            const auto &g = j.at("gpu");
            c.gpu_shape.sm_count = g.value("sm_count", c.gpu_shape.sm_count);
            c.gpu_shape.max_threads_per_sm = g.value("max_threads_per_sm", c.gpu_shape.max_threads_per_sm);
            c.gpu_shape.block_limit = g.value("block_limit", c.gpu_shape.block_limit);
            if (c.gpu_shape.sm_count == 0 || c.gpu_shape.block_limit == 0)
                throw InputError("config: gpu sm_count and block_limit must be positive");
        }
        if (j.contains("image")) {
            const auto &im = j.at("image");
            c.image_size = std::array<std::uint32_t, 2>{im.at("width").get<std::uint32_t>(),
                                                        im.at("height").get<std::uint32_t>()};
        }

        if (j.contains("backends")) {
            const auto &b = j.at("backends");
            for (Role r : kRoles) {
                const std::string name = to_string(r);
                if (!b.contains(name)) throw InputError("config: backends lacks the " + name + " role");
                c.backends.emplace(r, backend_from_json(b.at(name), r));
            }
        }

        if (j.contains("search")) c.search = search_config_from_json(j.at("search"));

        if (j.contains("evaluator")) {
            const auto &e = j.at("evaluator");
            c.evaluator.backend = e.value("backend", c.evaluator.backend);
            if (c.evaluator.backend != "cost_model" && c.evaluator.backend != "subprocess")
                throw InputError("config: evaluator backend must be cost_model or subprocess");
            auto &cmd = c.evaluator.commands;
            cmd.compile_cmd = e.value("compile_cmd", "");
            cmd.run_cmd = e.value("run_cmd", "");
            cmd.measure_cmd = e.value("measure_cmd", "");
            cmd.timeout_seconds = e.value("timeout", cmd.timeout_seconds);
            cmd.latency_unit = e.value("latency_unit", cmd.latency_unit);
            cmd.source_name = e.value("source_name", cmd.source_name);
            if (e.contains("work_dir")) {
                fs::path w = e.at("work_dir").get<std::string>();
                cmd.work_root = w.is_relative() ? (base / w).lexically_normal() : w;
            }
            if (c.evaluator.backend == "subprocess" && cmd.measure_cmd.empty())
                throw InputError("config: subprocess evaluator needs measure_cmd");
        }

        if (j.contains("crosscheck")) {
            const auto &x = j.at("crosscheck");
            CrossCheckConfig cc;
            cc.original = resolve(x, "original", base, true);
            cc.generators = x.at("generators").get<std::vector<std::string>>();
            const auto &fx = x.at("fixtures");
            for (auto it = fx.begin(); it != fx.end(); ++it) {
                fs::path p = it.value().get<std::string>();
                if (p.is_relative()) p = base / p;
                cc.fixtures[it.key()] = p.lexically_normal();
            }
            for (const auto &g : cc.generators) {
                if (!cc.fixtures.count(g)) throw InputError("config: no fixture for generator '" + g + "'");
                if (!fs::exists(cc.fixtures[g]))
                    throw InputError("config: fixture not found: " + cc.fixtures[g].string());
            }
            for (const auto &ch : x.at("checkers")) cc.checkers.push_back(backend_from_json(ch, Role::Checker));
            c.crosscheck = std::move(cc);
        }
    } catch (const json::exception &e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw InputError(path.string() + ": " + e.what());
    }
    RunConfig c = run_config_from_json(j, path.parent_path());
    c.config_path = path;
    return c;
}

void override_seed(RunConfig &cfg, std::uint64_t seed) {
    cfg.search.seed = seed;
    for (auto &[role, b] : cfg.backends) b.mock_seed = role_seed(seed, static_cast<std::uint64_t>(role) + 1);
    if (cfg.crosscheck)
        for (std::size_t i = 0; i < cfg.crosscheck->checkers.size(); ++i)
            cfg.crosscheck->checkers[i].mock_seed = role_seed(seed, 100 + i);
}

void force_mock(RunConfig &cfg) {
    for (auto &[role, b] : cfg.backends) make_mock(b);
    if (cfg.crosscheck)
        for (auto &b : cfg.crosscheck->checkers) make_mock(b);
}

json config_snapshot(const RunConfig &cfg) {
    json j = cfg.raw;
    json backends = json::object();
    for (const auto &[role, b] : cfg.backends) backends[to_string(role)] = backend_to_json(b);
    if (!cfg.backends.empty()) j["backends"] = backends;
    j["search"] = search_config_to_json(cfg.search);
    if (cfg.crosscheck) {
        json checkers = json::array();
        for (const auto &b : cfg.crosscheck->checkers) checkers.push_back(backend_to_json(b));
        j["crosscheck"]["checkers"] = checkers;
    }
    return j;
}

} // namespace splatopt
