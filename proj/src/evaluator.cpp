// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/evaluator.hpp"

#include "splatopt/scene_io.hpp"
#include "splatopt/subprocess.hpp"
#include "splatopt/tags.hpp"

#include "splatopt/digest.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace splatopt {

namespace {

const std::set<std::string> kMetrics = {"mean_per_tile",          "var_per_tile",  "mean_computed_fraction",
                                        "var_computed_fraction", "ai_margin",     "achieved_occupancy_pct"};
const std::set<std::string> kOps = {">=", ">", "<=", "<"};
const std::set<std::string> kDefects = {"inner-loop-once"};

RenderOptions defect_options(const std::string &defect) {
    RenderOptions o;
    if (defect == "inner-loop-once") o.max_per_batch = 1;
    return o;
}

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

} // namespace

std::string to_string(FailureKind k) {
    switch (k) {
    case FailureKind::CompileError: return "CompileError";
    case FailureKind::RuntimeError: return "RuntimeError";
    case FailureKind::MarkerViolation: return "MarkerViolation";
    case FailureKind::EquivalenceRejected: return "EquivalenceRejected";
    }
    return "RuntimeError";
}

FailureKind failure_from_string(const std::string &s) {
    if (s == "CompileError") return FailureKind::CompileError;
    if (s == "RuntimeError") return FailureKind::RuntimeError;
    if (s == "MarkerViolation") return FailureKind::MarkerViolation;
    if (s == "EquivalenceRejected") return FailureKind::EquivalenceRejected;
    throw InputError("unknown failure kind '" + s + "'");
}

EvaluationResult EvaluationResult::failed(FailureKind kind, std::string detail) {
    EvaluationResult r;
    r.failure = kind;
    r.detail = std::move(detail);
    return r;
}

double combined_score(double accuracy_err, double speedup, double tolerance) {
    return accuracy_err <= tolerance ? speedup : 0.0;
}

bool Condition::holds(const WorkloadStats &wl, const SystemProfile &sys) const {
    double x = 0.0;
    if (metric == "mean_per_tile")
        x = wl.mean_per_tile;
    else if (metric == "var_per_tile")
        x = wl.var_per_tile;
    else if (metric == "mean_computed_fraction")
        x = wl.mean_computed_fraction;
    else if (metric == "var_computed_fraction")
        x = wl.var_computed_fraction;
    else if (metric == "ai_margin")
        x = sys.ai_turning_point > 0 ? sys.ai_kernel / sys.ai_turning_point : 0.0;
    else if (metric == "achieved_occupancy_pct")
        x = sys.achieved_occupancy_pct;
    else
        throw InputError("unknown condition metric '" + metric + "'");
    if (op == ">=") return x >= value;
    if (op == ">") return x > value;
    if (op == "<=") return x <= value;
    if (op == "<") return x < value;
    throw InputError("unknown condition operator '" + op + "'");
}

TransformCatalog::TransformCatalog(std::vector<TransformCatalogEntry> entries) : entries_(std::move(entries)) {
    std::set<std::string> seen;
    for (const auto &e : entries_) {
        if (e.tag.empty()) throw InputError("catalog entry without tag");
        if (!seen.insert(e.tag).second) throw InputError("duplicate catalog tag '" + e.tag + "'");
        if (!(e.speedup_factor > 0) || !(e.fallback_factor > 0))
            throw InputError("catalog entry '" + e.tag + "' needs positive factors");
        if (!e.unsafe && (e.accuracy_penalty != 0.0 || !e.defect.empty()))
            throw InputError("safe catalog entry '" + e.tag + "' cannot carry an accuracy penalty");
        if (e.accuracy_penalty < 0) throw InputError("negative accuracy penalty for '" + e.tag + "'");
        if (!e.defect.empty() && !kDefects.count(e.defect))
            throw InputError("unknown defect '" + e.defect + "' for '" + e.tag + "'");
        if (e.condition) {
            if (!kMetrics.count(e.condition->metric))
                throw InputError("unknown condition metric '" + e.condition->metric + "'");
            if (!kOps.count(e.condition->op)) throw InputError("unknown condition operator '" + e.condition->op + "'");
        }
    }
}

TransformCatalog TransformCatalog::defaults() {
    auto entry = [](std::string tag, double f) {
        TransformCatalogEntry e;
        e.tag = std::move(tag);
        e.speedup_factor = f;
        return e;
    };
    std::vector<TransformCatalogEntry> v;
    v.push_back(entry("fastmath", 1.1035));
    v.push_back(entry("drop-contributor", 1.0091));
    auto simplify = entry("simplify-loop", 1.0566);
    simplify.condition = Condition{"mean_per_tile", ">=", 256.0};
    v.push_back(simplify);
    v.push_back(entry("coalesce-rgb", 1.03));
    v.push_back(entry("shmem-layout", 1.113));
    auto early = entry("remove-early-stop", 1.01);
    early.condition = Condition{"mean_computed_fraction", ">=", 0.9};
    v.push_back(early);
    auto warp = entry("warp-early-exit", 1.04);
    warp.condition = Condition{"mean_computed_fraction", "<", 0.9};
    warp.fallback_factor = 0.97;
    v.push_back(warp);
    auto dbuf = entry("double-buffer", 1.05);
    dbuf.condition = Condition{"ai_margin", "<", 1.0};
    dbuf.fallback_factor = 0.98;
    v.push_back(dbuf);
    auto reorder = entry("reorder-contributors", 1.03);
    reorder.condition = Condition{"mean_computed_fraction", "<", 0.9};
    reorder.fallback_factor = 0.96;
    v.push_back(reorder);
    v.push_back(entry("unroll-channels", 1.0));
    auto inner = entry("remove-inner-loop", 1.25);
    inner.unsafe = true;
    inner.defect = "inner-loop-once";
    v.push_back(inner);
    return TransformCatalog(std::move(v));
}

TransformCatalog TransformCatalog::from_json(const nlohmann::json &j) {
    try {
        std::vector<TransformCatalogEntry> v;
        for (const auto &t : j.at("transforms")) {
            TransformCatalogEntry e;
            e.tag = t.at("tag").get<std::string>();
            e.speedup_factor = t.at("speedup").get<double>();
            e.fallback_factor = t.value("fallback", 1.0);
            e.unsafe = t.value("unsafe", false);
            e.accuracy_penalty = t.value("accuracy_penalty", 0.0);
            e.defect = t.value("defect", std::string());
            if (t.contains("condition")) {
                const auto &c = t.at("condition");
                e.condition = Condition{c.at("metric").get<std::string>(), c.at("op").get<std::string>(),
                                        c.at("value").get<double>()};
            }
            v.push_back(std::move(e));
        }
        return TransformCatalog(std::move(v));
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("catalog: ") + e.what());
    }
}

TransformCatalog TransformCatalog::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open catalog " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error &e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

const TransformCatalogEntry *TransformCatalog::find(const std::string &tag) const {
    for (const auto &e : entries_)
        if (e.tag == tag) return &e;
    return nullptr;
}

nlohmann::json catalog_to_json(const TransformCatalog &c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &e : c.entries()) {
        nlohmann::json t = {{"tag", e.tag}, {"speedup", e.speedup_factor}};
        if (e.condition)
            t["condition"] = {{"metric", e.condition->metric}, {"op", e.condition->op}, {"value", e.condition->value}};
        if (e.fallback_factor != 1.0) t["fallback"] = e.fallback_factor;
        if (e.unsafe) t["unsafe"] = true;
        if (e.accuracy_penalty != 0.0) t["accuracy_penalty"] = e.accuracy_penalty;
        if (!e.defect.empty()) t["defect"] = e.defect;
        arr.push_back(std::move(t));
    }
    return {{"transforms", arr}};
}

double cost_model_latency(const std::vector<std::string> &tags, const WorkloadStats &wl, const SystemProfile &sys,
                          const TransformCatalog &catalog) {
    // Sorting first makes the product independent of tag order.
    const std::set<std::string> distinct(tags.begin(), tags.end());
    double m = 1.0;
    for (const auto &tag : distinct) {
        const auto *e = catalog.find(tag);
        if (!e) throw UnknownTag("unknown transform tag '" + tag + "'");
        const bool ok = !e->condition || e->condition->holds(wl, sys);
        m /= ok ? e->speedup_factor : e->fallback_factor;
    }
    return m;
}

CostModelBackend::CostModelBackend(TransformCatalog catalog, WorkloadStats workload, SystemProfile system, Scene scene)
    : catalog_(std::move(catalog)), workload_(workload), system_(std::move(system)), scene_(std::move(scene)) {}

double CostModelBackend::defect_error(const std::string &defect) {
    std::lock_guard lock(mu_);
    if (auto it = defect_errors_.find(defect); it != defect_errors_.end()) return it->second;
    if (!oracle_) oracle_ = render(scene_);
    const double e = mean_abs_error(oracle_->image, render(scene_, defect_options(defect)).image);
    defect_errors_[defect] = e;
    return e;
}

Measurement CostModelBackend::measure(const SourceProgram &candidate) {
    const auto tags = transform_tags(candidate.full_text());
    Measurement m;
    m.latency = cost_model_latency(tags, workload_, system_, catalog_);
    for (const auto &tag : std::set<std::string>(tags.begin(), tags.end())) {
        const auto *e = catalog_.find(tag);
        if (!e->unsafe) continue;
        m.accuracy_err += e->accuracy_penalty;
        if (!e->defect.empty()) m.accuracy_err += defect_error(e->defect);
    }
    return m;
}

std::string assemble_command(const std::string &tmpl, const CommandPaths &paths) {
    const std::pair<const char *, const std::filesystem::path *> subs[] = {
        {"{src}", &paths.src}, {"{bin}", &paths.bin}, {"{scene}", &paths.scene}, {"{out}", &paths.out}};
    std::string out;
    for (std::size_t i = 0; i < tmpl.size();) {
        bool hit = false;
        for (const auto &[key, path] : subs) {
            const std::size_t n = std::strlen(key);
            if (tmpl.compare(i, n, key) == 0) {
                out += shell_quote(path->string());
                i += n;
                hit = true;
                break;
            }
        }
        if (!hit) out += tmpl[i++];
    }
    return out;
}

double parse_latency(const std::string &stdout_text, const std::string &unit) {
    double scale = 0.0;
    if (unit == "s")
        scale = 1.0;
    else if (unit == "ms")
        scale = 1e3;
    else if (unit == "us")
        scale = 1e6;
    else
        throw InputError("unknown latency unit '" + unit + "'");

    std::istringstream in(stdout_text);
    std::string line, last;
    while (std::getline(in, line)) {
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        last = line.substr(b, e - b + 1);
    }
    if (last.empty()) throw MeasureParseError("measure command printed nothing");
    double v = 0.0;
    auto [p, ec] = std::from_chars(last.data(), last.data() + last.size(), v);
    if (ec != std::errc() || p != last.data() + last.size() || !std::isfinite(v) || v <= 0)
        throw MeasureParseError("cannot read latency from '" + last + "'");
    return v * scale;
}

SubprocessBackend::SubprocessBackend(SubprocessCommands commands, Scene scene)
    : commands_(std::move(commands)), scene_(std::move(scene)), oracle_(render(scene_)) {
    if (commands_.work_root.empty()) commands_.work_root = std::filesystem::temp_directory_path() / "splatopt-eval";
    std::filesystem::create_directories(commands_.work_root);
}

Measurement SubprocessBackend::measure(const SourceProgram &candidate) {
    const std::uint64_t n = counter_.fetch_add(1);
    const auto dir = commands_.work_root / ("eval-" + sha256_hex(candidate.full_text()).substr(0, 12) + "-" +
                                            std::to_string(n));
    std::filesystem::create_directories(dir);
    CommandPaths paths{dir / commands_.source_name, dir / "candidate.bin", dir / "scene.json", dir / "out.pfm"};
    save_program(candidate, paths.src);
    save_scene(scene_, paths.scene);

    auto step = [&](const std::string &tmpl) { return run_command(assemble_command(tmpl, paths), dir, commands_.timeout_seconds); };
    auto tail = [](const std::string &s) { return s.size() > 400 ? s.substr(s.size() - 400) : s; };

    if (!commands_.compile_cmd.empty()) {
        const auto r = step(commands_.compile_cmd);
        if (r.exit_code != 0)
            throw CompileError("compile exited " + std::to_string(r.exit_code) + ": " + tail(r.err));
    }
    if (!commands_.run_cmd.empty()) {
        const auto r = step(commands_.run_cmd);
        if (r.exit_code != 0) throw RuntimeError("run exited " + std::to_string(r.exit_code) + ": " + tail(r.err));
    }
    const auto r = step(commands_.measure_cmd);
    if (r.exit_code != 0) throw RuntimeError("measure exited " + std::to_string(r.exit_code) + ": " + tail(r.err));
    Measurement m;
    m.latency = parse_latency(r.out, commands_.latency_unit);

    if (!std::filesystem::exists(paths.out)) throw RuntimeError("candidate wrote no image");
    FloatImage img;
    try {
        img = read_pfm(paths.out);
    } catch (const Error &e) {
        throw RuntimeError(std::string("candidate image: ") + e.what());
    }
    if (img.width != oracle_.width || img.height != oracle_.height || img.channels != oracle_.channels)
        throw RuntimeError("candidate image has the wrong shape");
    m.accuracy_err = mean_abs_error(oracle_.image, img.data);
    return m;
}

Evaluator::Evaluator(SourceProgram baseline, std::shared_ptr<EvaluationBackend> backend, double tolerance)
    : baseline_(std::move(baseline)), backend_(std::move(backend)), tolerance_(tolerance) {
    if (!backend_) throw InputError("evaluator needs a backend");
    Measurement m;
    try {
        m = backend_->measure(baseline_);
    } catch (const std::exception &e) {
        throw InputError(std::string("baseline evaluation failed: ") + e.what());
    }
    if (!(m.latency > 0)) throw InputError("baseline latency must be positive");
    if (m.accuracy_err > tolerance_)
        throw InputError("baseline misses the accuracy tolerance (error " + fmt(m.accuracy_err) + ")");
    baseline_result_.compiled = true;
    baseline_result_.ran = true;
    baseline_result_.accuracy_err = m.accuracy_err;
    baseline_result_.latency = m.latency;
    baseline_result_.speedup = 1.0;
    baseline_result_.score = combined_score(m.accuracy_err, 1.0, tolerance_);
}

EvaluationResult Evaluator::evaluate(const SourceProgram &candidate) const {
    if (candidate.full_text() == baseline_.full_text()) return baseline_result_;
    try {
        if (candidate.blocks().size() != baseline_.blocks().size() ||
            diff_outside_blocks(baseline_, candidate.full_text()))
            return EvaluationResult::failed(FailureKind::MarkerViolation, "text outside evolve blocks changed");
    } catch (const std::exception &e) {
        return EvaluationResult::failed(FailureKind::MarkerViolation, e.what());
    }

    EvaluationResult r;
    Measurement m;
    try {
        m = backend_->measure(candidate);
    } catch (const CompileError &e) {
        return EvaluationResult::failed(FailureKind::CompileError, e.what());
    } catch (const std::exception &e) {
        r = EvaluationResult::failed(FailureKind::RuntimeError, e.what());
        r.compiled = true;
        return r;
    }
    r.compiled = true;
    if (!(m.latency > 0) || !std::isfinite(m.latency)) {
        r.failure = FailureKind::RuntimeError;
        r.detail = "non-positive latency";
        return r;
    }
    r.ran = true;
    r.accuracy_err = m.accuracy_err;
    r.latency = m.latency;
    r.speedup = baseline_result_.latency / m.latency;
    r.score = combined_score(m.accuracy_err, r.speedup, tolerance_);
    if (r.score == 0.0) {
        r.failure = FailureKind::EquivalenceRejected;
        r.detail = "accuracy error " + fmt(m.accuracy_err) + " exceeds tolerance " + fmt(tolerance_);
    }
    return r;
}

nlohmann::json result_to_json(const EvaluationResult &r) {
    nlohmann::json j = {{"compiled", r.compiled}, {"ran", r.ran},         {"accuracy_err", r.accuracy_err},
                        {"latency", r.latency},   {"speedup", r.speedup}, {"score", r.score}};
    j["failure"] = r.failure ? nlohmann::json(to_string(*r.failure)) : nlohmann::json(nullptr);
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

} // namespace splatopt
