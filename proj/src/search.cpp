// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/search.hpp"

#include "splatopt/checker.hpp"
#include "splatopt/digest.hpp"
#include "splatopt/tags.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>

namespace splatopt {

std::string to_string(AdviceMode m) {
    switch (m) {
    case AdviceMode::None: return "none";
    case AdviceMode::Plan: return "plan";
    case AdviceMode::PrunedPlan: return "pruned_plan";
    }
    return "none";
}

AdviceMode advice_mode_from_string(const std::string &s) {
    if (s == "none") return AdviceMode::None;
    if (s == "plan") return AdviceMode::Plan;
    if (s == "pruned_plan") return AdviceMode::PrunedPlan;
    throw InputError("unknown advice_mode '" + s + "' (none, plan, pruned_plan)");
}

void validate(const SearchConfig &cfg) {
    if (cfg.population_size == 0) throw InputError("population_size must be at least 1");
    if (cfg.top_k == 0 || cfg.top_k > cfg.population_size)
        throw InputError("top_k must be between 1 and population_size");
    if (cfg.record_every == 0) throw InputError("record_every must be at least 1");
    if (cfg.batch_size == 0) throw InputError("batch_size must be at least 1");
    if (!(cfg.tolerance >= 0)) throw InputError("tolerance must be non-negative");
}

SearchConfig search_config_from_json(const nlohmann::json &j) {
    SearchConfig c;
    try {
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.population_size = j.value("population_size", c.population_size);
        c.top_k = j.value("top_k", c.top_k);
        c.seed = j.value("seed", c.seed);
        c.advice_mode = advice_mode_from_string(j.value("advice_mode", to_string(c.advice_mode)));
        c.check_enabled = j.value("check_enabled", c.check_enabled);
        c.tolerance = j.value("tolerance", c.tolerance);
        c.record_every = j.value("record_every", c.record_every);
        c.batch_size = j.value("batch_size", c.batch_size);
    } catch (const nlohmann::json::exception &e) {
        throw InputError(std::string("search config: ") + e.what());
    }
    validate(c);
    return c;
}

nlohmann::json search_config_to_json(const SearchConfig &c) {
    return {{"max_iterations", c.max_iterations}, {"population_size", c.population_size},
            {"top_k", c.top_k},                   {"seed", c.seed},
            {"advice_mode", to_string(c.advice_mode)}, {"check_enabled", c.check_enabled},
            {"tolerance", c.tolerance},           {"record_every", c.record_every},
            {"batch_size", c.batch_size}};
}

std::string candidate_id(const SourceProgram &p) { return sha256_hex(p.full_text()).substr(0, 16); }

namespace {

bool ranks_before(const Member &a, const Member &b) {
    if (a.result.score != b.result.score) return a.result.score > b.result.score;
    if (a.result.latency != b.result.latency) return a.result.latency < b.result.latency;
    return a.order < b.order;
}

std::vector<std::size_t> ranking(const Population &pop) {
    std::vector<std::size_t> idx(pop.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ranks_before(pop[a], pop[b]); });
    return idx;
}

const Member &best_of(const Population &pop) { return pop[ranking(pop).front()]; }

} // namespace

const Member &select_parent(const Population &population, std::size_t top_k, std::uint64_t seed,
                            std::size_t iteration) {
    if (population.empty()) throw Error("select_parent on an empty population");
    const auto idx = ranking(population);
    const std::size_t k = std::min(std::max<std::size_t>(top_k, 1), idx.size());
    Rng rng(mix64(seed) ^ mix64(0x5e1ec7ULL + iteration));
    return population[idx[rng.below(k)]];
}

bool insert_candidate(Population &population, Member candidate, std::size_t capacity) {
    if (!(candidate.result.score > 0)) return false;
    for (const auto &m : population)
        if (m.id == candidate.id) return false;
    if (population.size() < capacity) {
        population.push_back(std::move(candidate));
        return true;
    }
    const auto idx = ranking(population);
    Member &worst = population[idx.back()];
    if (candidate.result.score > worst.result.score) {
        worst = std::move(candidate);
        return true;
    }
    return false;
}

nlohmann::json record_to_json(const IterationRecord &r) {
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["candidate_id"] = r.candidate_id;
    j["parent_id"] = r.parent_id;
    j["tags"] = r.tags;
    j["score"] = r.score;
    j["speedup"] = r.speedup;
    j["accuracy_err"] = r.accuracy_err;
    j["failure"] = r.failure ? nlohmann::json(to_string(*r.failure)) : nlohmann::json(nullptr);
    j["detail"] = r.detail;
    j["checked"] = r.checked;
    j["inserted"] = r.inserted;
    j["llm_calls"] = r.llm_calls;
    j["review"] = r.review;
    return j;
}

nlohmann::json report_to_json(const SearchReport &r, const SearchConfig &cfg) {
    auto curve = [](const std::vector<std::pair<std::size_t, double>> &c) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto &[i, v] : c) a.push_back({{"iteration", i}, {"value", v}});
        return a;
    };
    nlohmann::json pop = nlohmann::json::array();
    for (const auto &m : r.population)
        pop.push_back({{"id", m.id},
                       {"iteration", m.iteration},
                       {"score", m.result.score},
                       {"tags", transform_tags(m.program.full_text())}});
    std::size_t failures = 0, checked = 0;
    for (const auto &it : r.iterations) {
        failures += it.failure.has_value();
        checked += it.checked;
    }
    return {{"iterations", r.iterations.size()},
            {"seed", cfg.seed},
            {"advice_mode", to_string(cfg.advice_mode)},
            {"check_enabled", cfg.check_enabled},
            {"advice", r.advice_titles},
            {"best_curve", curve(r.best_curve)},
            {"error_curve", curve(r.error_curve)},
            {"final_best",
             {{"id", r.final_best_id},
              {"score", r.final_best_score},
              {"tags", transform_tags(r.final_best.full_text())}}},
            {"failures", failures},
            {"checked_iterations", checked},
            {"total_llm_calls", r.total_llm_calls},
            {"planning_llm_calls", r.planning_llm_calls},
            {"population", pop}};
}

AdviceBundle prepare_advice(AdviceMode mode, const SourceProgram &baseline, const ProfileContext &profile,
                            Gateway &gateway, const TemplateSet &templates) {
    AdviceBundle b;
    if (mode == AdviceMode::None) return b;
    const auto plan_reply = gateway.complete(Role::Planner, build_plan_prompt(baseline, templates));
    ++b.llm_calls;
    b.plan = parse_advice(plan_reply.response);
    b.plan->source_digest = source_digest(baseline);
    if (mode == AdviceMode::PrunedPlan) {
        const auto prune_reply = gateway.complete(Role::Planner, build_prune_prompt(*b.plan, profile, templates));
        ++b.llm_calls;
        b.pruned = parse_pruned(prune_reply.response, *b.plan);
        b.pruned->profile_digest = profile_digest(profile);
    }
    b.advice = selected_advice(*b.plan, b.pruned ? &*b.pruned : nullptr);
    return b;
}

namespace {

struct Attempt {
    IterationRecord record;
    std::optional<Member> member;
};

std::string strip_fence(const std::string &response) {
    if (auto body = extract_fenced(response)) return *body;
    return response;
}

Attempt attempt(std::size_t iteration, const Member &parent, const Evaluator &evaluator, Gateway &gateway,
                const TemplateSet &templates, const std::string &advice_section, bool check_enabled) {
    Attempt a;
    IterationRecord &rec = a.record;
    rec.iteration = iteration;
    rec.parent_id = parent.id;

    const std::string prompt =
        templates.render("generate", {{"advice", advice_section}, {"program", parent.program.full_text()}});

    std::string candidate_text;
    std::optional<SourceProgram> candidate;
    ++rec.llm_calls;
    try {
        candidate_text = strip_fence(gateway.complete(Role::Generator, prompt, iteration).response);
    } catch (const AuthMissing &) {
        throw;
    } catch (const std::exception &e) {
        rec.failure = FailureKind::RuntimeError;
        rec.detail = std::string("generator: ") + e.what();
    }

    if (!rec.failure) {
        rec.candidate_id = sha256_hex(candidate_text).substr(0, 16);
        rec.tags = transform_tags(candidate_text);
        try {
            candidate = extract_blocks(candidate_text);
            if (candidate->blocks().size() != evaluator.baseline().blocks().size() ||
                diff_outside_blocks(evaluator.baseline(), candidate->full_text())) {
                rec.failure = FailureKind::MarkerViolation;
                rec.detail = "text outside evolve blocks changed";
            }
        } catch (const std::exception &e) {
            rec.failure = FailureKind::MarkerViolation;
            rec.detail = e.what();
        }
        if (candidate) rec.candidate_id = candidate_id(*candidate);
    }

    if (!rec.failure && check_enabled) {
        rec.checked = true;
        ++rec.llm_calls;
        const auto verdict = check(evaluator.baseline(), *candidate, gateway, templates, iteration);
        if (!verdict.equivalent) {
            rec.failure = FailureKind::EquivalenceRejected;
            rec.detail = "checker: " + verdict.reasons.front();
        }
    }

    EvaluationResult result;
    if (!rec.failure) {
        result = evaluator.evaluate(*candidate);
        rec.score = result.score;
        rec.speedup = result.speedup;
        rec.accuracy_err = result.accuracy_err;
        rec.failure = result.failure;
        rec.detail = result.detail;
    }

    nlohmann::json eval = {{"score", rec.score}, {"speedup", rec.speedup}, {"accuracy_err", rec.accuracy_err}};
    eval["failure"] = rec.failure ? nlohmann::json(to_string(*rec.failure)) : nlohmann::json(nullptr);
    ++rec.llm_calls;
    try {
        const std::string review_prompt =
            templates.render("review", {{"evaluation", eval.dump()}, {"candidate", candidate_text}});
        rec.review = gateway.complete(Role::Reviewer, review_prompt, iteration).response;
    } catch (const AuthMissing &) {
        throw;
    } catch (const std::exception &e) {
        rec.review = std::string("review failed: ") + e.what();
    }

    if (!rec.failure) a.member = Member{rec.candidate_id, std::move(*candidate), result, iteration, 0};
    return a;
}

} // namespace

SearchReport run_search(const SearchConfig &cfg, const Evaluator &evaluator, Gateway &gateway,
                        const TemplateSet &templates, const AdviceBundle &advice) {
    validate(cfg);
    if (evaluator.baseline().blocks().empty()) throw NoEvolveBlocks("baseline has no EVOLVE-BLOCK");

    SearchReport report;
    report.planning_llm_calls = advice.llm_calls;
    for (const auto &a : advice.advice) report.advice_titles.push_back(a.title);
    const std::string advice_section = advice_prompt_section(advice.advice);

    Population population;
    std::size_t order = 0;
    population.push_back(Member{candidate_id(evaluator.baseline()), evaluator.baseline(), evaluator.baseline_result(),
                                0, order++});

    std::size_t failures = 0;
    auto record_point = [&](std::size_t i) {
        const Member &best = best_of(population);
        report.best_curve.emplace_back(i, best.result.score);
        report.error_curve.emplace_back(i, static_cast<double>(failures) / static_cast<double>(i));
        report.checkpoints.push_back({i, best.id, best.program.full_text()});
    };

    for (std::size_t start = 1; start <= cfg.max_iterations; start += cfg.batch_size) {
        const std::size_t end = std::min(cfg.max_iterations, start + cfg.batch_size - 1);
        std::vector<Attempt> attempts;
        if (start == end) {
            const Member &parent = select_parent(population, cfg.top_k, cfg.seed, start);
            attempts.push_back(attempt(start, parent, evaluator, gateway, templates, advice_section, cfg.check_enabled));
        } else {
            // Parents come from the same snapshot, so the batch can run in any order.
            std::vector<Member> parents;
            for (std::size_t i = start; i <= end; ++i) parents.push_back(select_parent(population, cfg.top_k, cfg.seed, i));
            std::vector<std::future<Attempt>> futures;
            for (std::size_t i = start; i <= end; ++i)
                futures.push_back(std::async(std::launch::async, [&, i] {
                    return attempt(i, parents[i - start], evaluator, gateway, templates, advice_section,
                                   cfg.check_enabled);
                }));
            for (auto &f : futures) attempts.push_back(f.get());
        }

        for (auto &a : attempts) {
            if (a.member) {
                a.member->order = order++;
                a.record.inserted = insert_candidate(population, std::move(*a.member), cfg.population_size);
            }
            failures += a.record.failure.has_value();
            report.total_llm_calls += a.record.llm_calls;
            const std::size_t i = a.record.iteration;
            report.iterations.push_back(std::move(a.record));
            if (i % cfg.record_every == 0 || i == cfg.max_iterations) record_point(i);
        }
    }

    const Member &best = best_of(population);
    report.final_best_id = best.id;
    report.final_best = best.program;
    report.final_best_score = best.result.score;
    report.population = population;
    return report;
}

void write_run_dir(const std::filesystem::path &dir, const nlohmann::json &config_snapshot, const nlohmann::json &meta,
                   const SearchReport &report, const SearchConfig &cfg) {
    std::filesystem::create_directories(dir / "best");
    auto write = [](const std::filesystem::path &p, const std::string &text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw InputError("cannot write " + p.string());
        out << text;
    };
    write(dir / "run.json", nlohmann::json{{"config", config_snapshot}, {"meta", meta}}.dump(2) + "\n");
    std::string lines;
    for (const auto &r : report.iterations) lines += record_to_json(r).dump() + "\n";
    write(dir / "iterations.jsonl", lines);
    for (const auto &c : report.checkpoints) write(dir / "best" / (std::to_string(c.iteration) + ".src"), c.program);
    write(dir / "report.json", report_to_json(report, cfg).dump(2) + "\n");
}

} // namespace splatopt
