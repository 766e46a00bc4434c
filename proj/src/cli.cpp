// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/cli.hpp"

#include "splatopt/checker.hpp"
#include "splatopt/config.hpp"
#include "splatopt/evaluator.hpp"
#include "splatopt/planner.hpp"
#include "splatopt/profile.hpp"
#include "splatopt/program.hpp"
#include "splatopt/render.hpp"
#include "splatopt/scene_io.hpp"
#include "splatopt/search.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

namespace splatopt {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool mock = false;
};

std::string num(double v, const char *fmt = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

void write_file(const fs::path &p, const std::string &text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InputError("cannot write " + p.string());
    out << text;
}

std::string read_file(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

RunConfig load_config(const Common &c) {
    if (c.config.empty()) throw InputError("--config is required");
    RunConfig cfg = load_run_config(c.config);
    if (c.mock) force_mock(cfg);
    if (c.seed) override_seed(cfg, *c.seed);
    return cfg;
}

void require_keys(const std::vector<const BackendConfig *> &backends) {
    for (const auto *b : backends) {
        if (b->kind != BackendKind::Remote) continue;
        const char *v = std::getenv(b->api_key_env.c_str());
        if (!v || !*v)
            throw AuthMissing(to_string(b->role) + " backend: environment variable " + b->api_key_env + " is not set");
    }
}

std::shared_ptr<HttpTransport> transport_for(const std::vector<const BackendConfig *> &backends) {
    for (const auto *b : backends)
        if (b->kind == BackendKind::Remote) return make_http_transport();
    return nullptr;
}

std::vector<const BackendConfig *> all_backends(const RunConfig &cfg) {
    std::vector<const BackendConfig *> v;
    for (const auto &[role, b] : cfg.backends) v.push_back(&b);
    return v;
}

TemplateSet templates_of(const RunConfig &cfg) {
    return cfg.templates_dir.empty() ? TemplateSet::defaults() : TemplateSet::load(cfg.templates_dir);
}

Gateway make_gateway(const RunConfig &cfg) {
    if (cfg.backends.empty()) throw InputError("config has no backends section");
    const auto all = all_backends(cfg);
    require_keys(all);
    return Gateway(cfg.backends, transport_for(all));
}

WorkloadStats workload_of(const RunConfig &cfg, const Scene *scene) {
    if (!cfg.workload_path.empty()) return parse_workload(cfg.workload_path);
    if (!scene) throw InputError("config needs a workload file or a scene");
    return workload_stats(render(*scene));
}

ProfileContext profile_of(const RunConfig &cfg, const Scene &scene) {
    if (cfg.metrics_path.empty()) throw InputError("config needs a metrics file");
    ProfileContext ctx;
    ctx.system = parse_metrics(cfg.metrics_path);
    ctx.workload = workload_of(cfg, &scene);
    const auto dims = cfg.image_size.value_or(std::array<std::uint32_t, 2>{scene.width, scene.height});
    ctx.occupancy = compute_waves(dims[0], dims[1], scene.tile, cfg.gpu_shape);
    return ctx;
}

Scene scene_of(const RunConfig &cfg) {
    if (cfg.scene_path.empty()) throw InputError("config needs a scene");
    return load_scene(cfg.scene_path);
}

SourceProgram source_of(const RunConfig &cfg) {
    if (cfg.source_path.empty()) throw InputError("config needs a source program");
    return load_program(cfg.source_path);
}

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- profile ---------------------------------------------------------------

struct ProfileArgs {
    std::string metrics, workload, scene;
    std::optional<std::uint32_t> width, height, sm_count, block_limit, max_threads;
    std::uint32_t tile = 16;
};

int cmd_profile(const Common &c, const ProfileArgs &a, std::ostream &out) {
    std::optional<RunConfig> cfg;
    if (!c.config.empty()) cfg = load_config(c);

    fs::path metrics = a.metrics;
    if (metrics.empty() && cfg) metrics = cfg->metrics_path;
    if (metrics.empty()) throw InputError("profile needs --metrics or a config with metrics");

    std::optional<Scene> scene;
    if (!a.scene.empty())
        scene = load_scene(a.scene);
    else if (cfg && !cfg->scene_path.empty())
        scene = load_scene(cfg->scene_path);

    ProfileContext ctx;
    ctx.system = parse_metrics(metrics);
    if (!a.workload.empty())
        ctx.workload = parse_workload(a.workload);
    else if (cfg && !cfg->workload_path.empty())
        ctx.workload = parse_workload(cfg->workload_path);
    else if (scene)
        ctx.workload = workload_stats(render(*scene));
    else
        throw InputError("profile needs --workload, --scene or a config with either");

    GpuShape shape = cfg ? cfg->gpu_shape : GpuShape{};
    if (a.sm_count) shape.sm_count = *a.sm_count;
    if (a.block_limit) shape.block_limit = *a.block_limit;
    if (a.max_threads) shape.max_threads_per_sm = *a.max_threads;
    if (shape.sm_count == 0 || shape.block_limit == 0) throw InputError("sm count and block limit must be positive");

    std::optional<std::array<std::uint32_t, 2>> dims;
    if (cfg && cfg->image_size) dims = cfg->image_size;
    if (!dims && scene) dims = std::array<std::uint32_t, 2>{scene->width, scene->height};
    if (a.width) dims = std::array<std::uint32_t, 2>{*a.width, dims ? (*dims)[1] : 0};
    if (a.height) dims = std::array<std::uint32_t, 2>{dims ? (*dims)[0] : 0, *a.height};
    if (!dims || (*dims)[0] == 0 || (*dims)[1] == 0)
        throw InputError("profile needs the frame size (--width/--height, config image or scene)");
    std::array<std::uint32_t, 2> tile{a.tile, a.tile};
    if (scene && a.tile == 16) tile = scene->tile;
    ctx.occupancy = compute_waves((*dims)[0], (*dims)[1], tile, shape);

    const std::string report = "System\n" + describe_system(ctx) + "Workload\n" + describe_workload(ctx.workload);
    out << report;
    if (!c.out.empty()) write_file(c.out, report);
    return kExitOk;
}

// ---- plan / prune ----------------------------------------------------------

int cmd_plan(const Common &c, std::ostream &out) {
    RunConfig cfg = load_config(c);
    const SourceProgram src = source_of(cfg);
    const TemplateSet templates = templates_of(cfg);
    Gateway gw = make_gateway(cfg);
    Plan plan = parse_advice(gw.complete(Role::Planner, build_plan_prompt(src, templates)).response);
    plan.source_digest = source_digest(src);
    out << render_advice_list(plan);
    if (!c.out.empty()) {
        write_file(fs::path(c.out) / "plan.json", plan_to_json(plan).dump(2) + "\n");
        write_file(fs::path(c.out) / "plan.txt", render_advice_list(plan));
    }
    return kExitOk;
}

int cmd_prune(const Common &c, const std::string &plan_path, std::ostream &out) {
    RunConfig cfg = load_config(c);
    const SourceProgram src = source_of(cfg);
    const Scene scene = scene_of(cfg);
    const TemplateSet templates = templates_of(cfg);
    Gateway gw = make_gateway(cfg);

    Plan plan;
    if (!plan_path.empty()) {
        try {
            plan = plan_from_json(nlohmann::json::parse(read_file(plan_path)));
        } catch (const nlohmann::json::exception &e) {
            throw InputError(plan_path + ": " + e.what());
        }
    } else {
        plan = parse_advice(gw.complete(Role::Planner, build_plan_prompt(src, templates)).response);
        plan.source_digest = source_digest(src);
    }
    const ProfileContext ctx = profile_of(cfg, scene);
    PrunedPlan pruned = parse_pruned(gw.complete(Role::Planner, build_prune_prompt(plan, ctx, templates)).response, plan);
    pruned.profile_digest = profile_digest(ctx);

    for (int id : pruned.kept) out << "KEEP " << id << ' ' << plan.find(id)->title << '\n';
    for (const auto &[id, why] : pruned.dropped) {
        const auto *a = plan.find(id);
        out << "DROP " << id << ' ' << (a ? a->title : std::string("?")) << " (" << why << ")\n";
    }
    if (!c.out.empty()) {
        write_file(fs::path(c.out) / "plan.json", plan_to_json(plan).dump(2) + "\n");
        write_file(fs::path(c.out) / "pruned.json", pruned_to_json(pruned).dump(2) + "\n");
    }
    return kExitOk;
}

// ---- search ----------------------------------------------------------------

std::shared_ptr<EvaluationBackend> evaluation_backend(const RunConfig &cfg, const Scene &scene,
                                                      const ProfileContext &ctx, const fs::path &run_dir) {
    if (cfg.evaluator.backend == "subprocess") {
        SubprocessCommands cmds = cfg.evaluator.commands;
        if (cmds.work_root.empty()) cmds.work_root = run_dir / "work";
        return std::make_shared<SubprocessBackend>(cmds, scene);
    }
    TransformCatalog catalog = cfg.catalog_path.empty() ? TransformCatalog::defaults()
                                                        : TransformCatalog::load(cfg.catalog_path);
    return std::make_shared<CostModelBackend>(std::move(catalog), ctx.workload, ctx.system, scene);
}

int cmd_search(const Common &c, std::ostream &out) {
    RunConfig cfg = load_config(c);
    if (c.out.empty()) throw InputError("search needs --out <dir>");
    const fs::path run_dir = c.out;
    const SourceProgram baseline = source_of(cfg);
    const Scene scene = scene_of(cfg);
    const TemplateSet templates = templates_of(cfg);
    Gateway gw = make_gateway(cfg);
    const ProfileContext ctx = profile_of(cfg, scene);

    Evaluator evaluator(baseline, evaluation_backend(cfg, scene, ctx, run_dir), cfg.search.tolerance);
    const AdviceBundle advice = prepare_advice(cfg.search.advice_mode, baseline, ctx, gw, templates);
    const SearchReport report = run_search(cfg.search, evaluator, gw, templates, advice);

    nlohmann::json meta = {{"created", iso_now()}};
    write_run_dir(run_dir, config_snapshot(cfg), meta, report, cfg.search);
    if (advice.plan) write_file(run_dir / "plan.json", plan_to_json(*advice.plan).dump(2) + "\n");
    if (advice.pruned) write_file(run_dir / "pruned.json", pruned_to_json(*advice.pruned).dump(2) + "\n");

    const double err = report.error_curve.empty() ? 0.0 : report.error_curve.back().second;
    out << "iterations " << report.iterations.size() << ", best score " << num(report.final_best_score, "%.4f")
        << " (" << report.final_best_id << "), error rate " << num(err, "%.3f") << ", llm calls "
        << report.total_llm_calls << " + " << report.planning_llm_calls << " planning\n";
    out << "run directory: " << run_dir.string() << "\n";
    return kExitOk;
}

// ---- check -----------------------------------------------------------------

int cmd_check(const Common &c, const std::string &original_path, const std::string &candidate_path,
              std::ostream &out) {
    RunConfig cfg = load_config(c);
    const SourceProgram original = original_path.empty() ? source_of(cfg) : load_program(original_path);
    const SourceProgram candidate = load_program(candidate_path);
    if (diff_outside_blocks(original, candidate.full_text()))
        throw InputError("candidate changes text outside the evolve blocks");
    Gateway gw = make_gateway(cfg);
    const auto v = check(original, candidate, gw, templates_of(cfg));
    out << (v.equivalent ? "EQUIVALENT" : "NOT EQUIVALENT") << '\n';
    for (const auto &r : v.reasons) out << "  " << r << '\n';
    return kExitOk;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
    std::string scene;
    std::string stats;
    std::string save_scene;
    std::optional<std::uint64_t> seed;
    std::size_t splats = 100;
    std::uint32_t width = 64;
    std::uint32_t height = 64;
    unsigned threads = 1;
};

int cmd_render(const Common &c, const RenderArgs &a, std::ostream &out) {
    if (c.out.empty()) throw InputError("render needs --out <image.pfm>");
    Scene scene;
    if (!a.scene.empty()) {
        scene = load_scene(a.scene);
    } else if (a.seed) {
        SceneGenParams p;
        p.seed = *a.seed;
        p.count = a.splats;
        p.width = a.width;
        p.height = a.height;
        try {
            scene = generate_scene(p);
        } catch (const InvalidRange &e) {
            throw InputError(e.what());
        }
    } else {
        throw InputError("render needs --scene or --seed");
    }
    if (!a.save_scene.empty()) save_scene(scene, a.save_scene);

    RenderOptions opts;
    opts.threads = std::max(1u, a.threads);
    const RenderOutput img = render(scene, opts);
    if (scene.channels != 1 && scene.channels != 3)
        throw InputError("PFM output supports 1 or 3 channels, scene has " + std::to_string(scene.channels));
    write_pfm(image_of(img), c.out);

    WorkloadStats stats;
    try {
        stats = workload_stats(img);
    } catch (const DegenerateWorkload &) {
    }
    fs::path stats_path = a.stats;
    if (stats_path.empty()) {
        stats_path = c.out;
        stats_path.replace_extension(".stats.csv");
    }
    write_file(stats_path, workload_to_csv(stats));
    out << "wrote " << c.out << " (" << img.width << "x" << img.height << ", " << scene.splats.size()
        << " splats) and " << stats_path.string() << '\n';
    return kExitOk;
}

// ---- crosscheck ------------------------------------------------------------

int cmd_crosscheck(const Common &c, std::ostream &out) {
    RunConfig cfg = load_config(c);
    if (!cfg.crosscheck) throw InputError("config has no crosscheck section");
    const auto &x = *cfg.crosscheck;
    std::vector<const BackendConfig *> checkers;
    for (const auto &b : x.checkers) checkers.push_back(&b);
    require_keys(checkers);
    auto transport = transport_for(checkers);

    const SourceProgram original = load_program(x.original);
    std::map<std::string, SourceProgram> fixtures;
    for (const auto &g : x.generators) fixtures.emplace(g, load_program(x.fixtures.at(g)));

    const auto matrix = build_matrix(x.checkers, x.generators, fixtures, original, templates_of(cfg), transport.get());
    const std::string csv = matrix_to_csv(matrix);
    out << csv;
    for (const auto &n : matrix.notes) out << "# " << n << '\n';
    if (!c.out.empty()) write_file(c.out, csv);
    return kExitOk;
}

// ---- report ----------------------------------------------------------------

int cmd_report(const std::string &run_dir, std::ostream &out) {
    if (run_dir.empty()) throw InputError("report needs --run <dir>");
    nlohmann::json r;
    try {
        r = nlohmann::json::parse(read_file(fs::path(run_dir) / "report.json"));
        out << "advice mode " << r.at("advice_mode").get<std::string>() << ", check "
            << (r.at("check_enabled").get<bool>() ? "on" : "off") << ", seed " << r.at("seed").get<std::uint64_t>()
            << '\n';
        out << "iteration  best score  error rate\n";
        const auto &best = r.at("best_curve");
        const auto &errs = r.at("error_curve");
        for (std::size_t i = 0; i < best.size(); ++i) {
            out << num(best[i].at("iteration").get<double>(), "%9.0f") << "  "
                << num(best[i].at("value").get<double>(), "%10.4f") << "  "
                << num(i < errs.size() ? errs[i].at("value").get<double>() : 0.0, "%10.3f") << '\n';
        }
        out << "final best " << r.at("final_best").at("id").get<std::string>() << " score "
            << num(r.at("final_best").at("score").get<double>(), "%.4f") << ", tags:";
        for (const auto &t : r.at("final_best").at("tags")) out << ' ' << t.get<std::string>();
        out << "\nllm calls " << r.at("total_llm_calls").get<std::size_t>() << " in the loop, "
            << r.at("planning_llm_calls").get<std::size_t>() << " for planning\n";
    } catch (const nlohmann::json::exception &e) {
        throw InputError(run_dir + "/report.json: " + e.what());
    }
    return kExitOk;
}

void add_common(CLI::App *sub, Common &c, bool with_out = true) {
    sub->add_option("--config", c.config, "Run configuration (JSON)");
    if (with_out) sub->add_option("--out", c.out, "Output path");
    sub->add_option("--seed", c.seed, "Override every seed in the config");
    sub->add_flag("--mock", c.mock, "Use mock backends for every role");
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Profile-guided evolutionary optimization of a splatting rasterizer kernel", "splatopt"};
    app.require_subcommand(1);

    Common common;
    ProfileArgs profile_args;
    RenderArgs render_args;
    std::string plan_path, original_path, candidate_path, run_dir;

    auto *profile = app.add_subcommand("profile", "Roofline, stall, occupancy and workload report");
    add_common(profile, common);
    profile->add_option("--metrics", profile_args.metrics, "Profiler metrics CSV");
    profile->add_option("--workload", profile_args.workload, "Workload statistics CSV");
    profile->add_option("--scene", profile_args.scene, "Scene JSON, used for workload and frame size");
    profile->add_option("--width", profile_args.width, "Frame width in pixels");
    profile->add_option("--height", profile_args.height, "Frame height in pixels");
    profile->add_option("--tile", profile_args.tile, "Tile edge in pixels");
    profile->add_option("--sm-count", profile_args.sm_count, "Streaming multiprocessors");
    profile->add_option("--block-limit", profile_args.block_limit, "Resident blocks per SM");
    profile->add_option("--max-threads", profile_args.max_threads, "Threads per SM");

    auto *plan = app.add_subcommand("plan", "Ask the planner for optimization advice");
    add_common(plan, common);

    auto *prune = app.add_subcommand("prune", "Prune advice against the profile");
    add_common(prune, common);
    prune->add_option("--plan", plan_path, "plan.json from a previous plan run");

    auto *search = app.add_subcommand("search", "Run the evolutionary search");
    add_common(search, common);

    auto *checkcmd = app.add_subcommand("check", "Ask the checker whether a candidate is equivalent");
    add_common(checkcmd, common, false);
    checkcmd->add_option("--original", original_path, "Original program (default: config source)");
    checkcmd->add_option("--candidate", candidate_path, "Candidate program")->required();

    auto *rendercmd = app.add_subcommand("render", "Render a scene with the reference rasterizer");
    rendercmd->add_option("--out", common.out, "Output PFM image");
    rendercmd->add_option("--scene", render_args.scene, "Scene JSON");
    rendercmd->add_option("--seed", render_args.seed, "Generate a random scene with this seed");
    rendercmd->add_option("--splats", render_args.splats, "Splat count for generated scenes");
    rendercmd->add_option("--width", render_args.width, "Width of generated scenes");
    rendercmd->add_option("--height", render_args.height, "Height of generated scenes");
    rendercmd->add_option("--stats", render_args.stats, "Workload statistics CSV (default <out>.stats.csv)");
    rendercmd->add_option("--save-scene", render_args.save_scene, "Also write the scene JSON");
    rendercmd->add_option("--threads", render_args.threads, "Worker threads");

    auto *crosscheck = app.add_subcommand("crosscheck", "Checker x generator detection matrix");
    add_common(crosscheck, common);

    auto *report = app.add_subcommand("report", "Summarize a search run directory");
    report->add_option("--run", run_dir, "Run directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (profile->parsed()) return cmd_profile(common, profile_args, out);
        if (plan->parsed()) return cmd_plan(common, out);
        if (prune->parsed()) return cmd_prune(common, plan_path, out);
        if (search->parsed()) return cmd_search(common, out);
        if (checkcmd->parsed()) return cmd_check(common, original_path, candidate_path, out);
        if (rendercmd->parsed()) return cmd_render(common, render_args, out);
        if (crosscheck->parsed()) return cmd_crosscheck(common, out);
        if (report->parsed()) return cmd_report(run_dir, out);
    } catch (const InputError &e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const AuthMissing &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const RemoteError &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const BackendExhausted &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const TransportError &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const Timeout &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const UnbalancedMarkers &e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const NoEvolveBlocks &e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const EmptyPlan &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const NoIdsRecognized &e) {
        err << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitInput;
}

int run_cli(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace splatopt
