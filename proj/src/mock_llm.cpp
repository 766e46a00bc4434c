// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/mock_llm.hpp"

#include "splatopt/digest.hpp"
#include "splatopt/program.hpp"
#include "splatopt/templates.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace splatopt {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string task_of(std::string_view prompt) {
    static const std::regex task(R"((?:^|\n)Task:\s*([A-Za-z]+))");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(prompt.begin(), prompt.end(), m, task)) return lower(m[1].str());
    return {};
}

bool is_tag_line(std::string_view line) {
    const std::string t = trim(line);
    return t.rfind(kTransformTagPrefix, 0) == 0 || t.rfind(kGeneratorTagPrefix, 0) == 0;
}

const MockTransform *match_advice(std::string_view advice_text) {
    const std::string text = lower(advice_text);
    for (const auto &t : mock_transforms()) {
        if (t.unsafe) continue;
        for (const auto &kw : t.keywords) {
            if (text.find(kw) != std::string::npos) return &t;
        }
    }
    return nullptr;
}

} // namespace

const std::vector<MockTransform> &mock_transforms() {
    static const std::vector<MockTransform> table = {
        {"fastmath", {"fast-math", "__expf", "fast math"}, false, false,
         "Use fast-math intrinsics (__expf, FMA) for the alpha computation",
         "The blend loop is arithmetic heavy; __expf and fused multiply-adds cut the cost of every splat.", "",
         "compute-bound", "compute-bound kernel, cheaper math pays off directly",
         "memory-bound kernel, math is not the bottleneck"},
        {"drop-contributor", {"contributor count", "contributor counter"}, false, false,
         "Derive the contributor count from the loop index",
         "The separate counter is redundant with the batch and loop indices.", "", "",
         "removes a live register and an add per splat", ""},
        {"simplify-loop", {"loop condition", "simplify the inner loop"}, false, false,
         "Simplify the inner loop condition so the compiler can unroll it",
         "The done flag written in the loop body blocks unrolling.",
         "Only pays off when tiles hold many splats", "high iteration count",
         "tiles hold many splats, unrolling amortizes", "few splats per tile, unrolling does not amortize"},
        {"coalesce-rgb", {"coalesce", "rgb"}, false, false, "Coalesce the RGB feature loads",
         "One vector load replaces three scalar global loads per splat.", "", "", "fewer global load instructions",
         ""},
        {"shmem-layout", {"shared memory", "shared broadcast"}, false, true,
         "Stage per-splat features and depths in shared memory",
         "Features are re-read from global memory by every pixel of the tile; load them once per batch.", "", "",
         "every pixel of a tile reuses the batch", ""},
        {"remove-early-stop", {"early-stop check"}, false, false, "Remove the per-pixel early-stop check",
         "The transmittance test costs a compare and branch per splat.",
         "Only pays off when early stop rarely fires", "early stop rarely fires",
         "almost every assigned splat is computed anyway", "early stop skips a large share of the work"},
        {"warp-early-exit", {"warp-level", "warp vote", "ballot"}, false, false,
         "Warp-level early exit and warp-scope sync",
         "Let a warp leave the batch loop once all its pixels are saturated.",
         "Only pays off when early stop fires often", "early stop fires often",
         "pixels saturate early, whole warps can leave", "early stop rarely fires, the votes are pure overhead"},
        {"double-buffer", {"double-buffer", "double buffer", "prefetch"}, false, false,
         "Double-buffer the shared-memory batches to overlap global loads",
         "Prefetch batch i+1 while batch i is blended.", "Only pays off when the kernel waits on memory",
         "memory-bound", "memory-bound kernel, overlap hides load latency",
         "compute-bound kernel, loads are already hidden"},
        {"reorder-contributors", {"order contributors", "reorder contributors"}, false, false,
         "Order contributors to hit the T cutoff earlier",
         "Blend high-opacity splats first within a depth window so transmittance saturates sooner.",
         "Only pays off when early stop fires often", "early stop fires often",
         "pixels saturate early, reaching the cutoff sooner saves work",
         "early stop rarely fires, reordering only adds sorting work"},
        {"unroll-channels", {"unroll channels", "template & unroll", "template and unroll"}, false, false,
         "Template and unroll CHANNELS", "A compile-time channel count lets the color loop unroll fully.", "", "",
         "cheap, never slower", ""},
        {std::string(kUnsafeInnerLoopTag), {}, true, false, "", "", "", "", "", ""},
    };
    return table;
}

const MockTransform *find_mock_transform(std::string_view tag) {
    for (const auto &t : mock_transforms()) {
        if (t.tag == tag) return &t;
    }
    return nullptr;
}

std::map<std::string, double> default_catalog_bias() {
    std::map<std::string, double> bias;
    for (const auto &t : mock_transforms()) {
        for (const auto &kw : t.keywords) bias[kw] = 6.0;
    }
    return bias;
}

std::string mock_plan(std::string_view /*prompt*/) {
    std::ostringstream out;
    out << "Potential optimizations for the blending kernel:\n\n";
    int n = 0;
    for (const auto &t : mock_transforms()) {
        if (t.unsafe) continue;
        out << ++n << ". " << t.advice_title << ". " << t.advice_rationale << '\n';
        if (!t.precondition.empty()) out << "   Precondition: " << t.precondition << '\n';
    }
    return out.str();
}

std::string mock_prune(std::string_view prompt) {
    static const std::regex item(R"(^\[(\d+)\]\s*(.*)$)");
    const auto sys_pos = prompt.find("System information:");
    const std::string evidence = lower(sys_pos == std::string_view::npos ? prompt : prompt.substr(sys_pos));

    std::ostringstream out;
    std::istringstream in{std::string(prompt.substr(0, sys_pos == std::string_view::npos ? prompt.size() : sys_pos))};
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, item)) continue;
        const std::string id = m[1].str();
        const MockTransform *t = match_advice(m[2].str());
        if (t == nullptr) {
            out << "DROP " << id << " (no evidence in the profile that this helps)\n";
        } else if (t->keep_if.empty() || evidence.find(t->keep_if) != std::string::npos) {
            out << "KEEP " << id << " (" << t->keep_reason << ")\n";
        } else {
            out << "DROP " << id << " (" << t->drop_reason << ")\n";
        }
    }
    return out.str();
}

std::string mock_generate(const MockProfile &profile, std::uint64_t seed, std::string_view prompt,
                          std::string_view label) {
    const auto program_text = extract_fenced(prompt);
    if (!program_text) return "I could not find a program to rewrite in the request.";

    SourceProgram program;
    try {
        program = extract_blocks(*program_text);
    } catch (const UnbalancedMarkers &) {
        return *program_text;
    }
    if (program.blocks().empty()) return *program_text;

    Rng rng(seed ^ stable_hash64(prompt));
    const auto fence = prompt.find("```");
    const std::string advice = lower(prompt.substr(0, fence));

    std::vector<std::string> applied = transform_tags(program.blocks()[0].body);
    auto has = [&](const std::string &tag) { return std::find(applied.begin(), applied.end(), tag) != applied.end(); };

    std::vector<const MockTransform *> options;
    std::vector<double> weights;
    for (const auto &t : mock_transforms()) {
        if (t.unsafe || has(t.tag)) continue;
        double w = 1.0;
        bool advised = false;
        for (const auto &kw : t.keywords) {
            if (advice.find(kw) == std::string::npos) continue;
            advised = true;
            auto it = profile.catalog_bias.find(kw);
            if (it != profile.catalog_bias.end()) w += it->second;
        }
        if (t.needs_advice && !advised) continue;
        options.push_back(&t);
        weights.push_back(w);
    }

    const bool remove = !applied.empty() && (options.empty() || rng.bernoulli(0.2));
    if (remove) {
        applied.erase(applied.begin() + static_cast<std::ptrdiff_t>(rng.below(applied.size())));
    } else if (!options.empty()) {
        double total = 0.0;
        for (double w : weights) total += w;
        double pick = rng.uniform() * total;
        std::size_t chosen = options.size() - 1;
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (pick < weights[i]) {
                chosen = i;
                break;
            }
            pick -= weights[i];
        }
        applied.push_back(options[chosen]->tag);
    }
    if (rng.bernoulli(profile.p_unsafe) && !has(std::string(kUnsafeInnerLoopTag))) {
        applied.emplace_back(kUnsafeInnerLoopTag);
    }

    // Canonical tag order: identical tag sets give identical text.
    std::vector<std::string> ordered;
    for (const auto &t : mock_transforms()) {
        if (has(t.tag)) ordered.push_back(t.tag);
    }
    std::string body;
    for (const auto &tag : ordered) body += std::string(kTransformTagPrefix) + tag + "\n";
    body += std::string(kGeneratorTagPrefix) + std::string(label) + "\n";
    std::istringstream in(program.blocks()[0].body);
    std::string line;
    while (std::getline(in, line)) {
        if (!is_tag_line(line)) body += line + "\n";
    }
    std::string text = apply_modification(program, Modification{"mock", "", {{0, body}}}).full_text();

    if (rng.bernoulli(profile.p_malformed)) {
        switch (rng.below(3)) {
        case 0: { // lose the END marker
            const auto p = text.find(kBlockEndMarker);
            const auto bol = text.rfind('\n', p);
            const auto eol = text.find('\n', p);
            text.erase(bol + 1, eol == std::string::npos ? std::string::npos : eol - bol);
            break;
        }
        case 1: { // misspell the START marker
            const auto p = text.find(kBlockStartMarker);
            text.replace(p, kBlockStartMarker.size(), "EVOLVE-BLOK-START");
            break;
        }
        default: // garbled text outside the block
            text += "}} // ... rest of the kernel unchanged ...\n";
            break;
        }
    }
    return text;
}

std::string mock_check(const MockProfile &profile, std::uint64_t seed, std::string_view original,
                       std::string_view candidate) {
    const auto before = transform_tags(original);
    std::vector<std::string> introduced;
    for (const auto &tag : transform_tags(candidate)) {
        const MockTransform *t = find_mock_transform(tag);
        if (t && t->unsafe && std::find(before.begin(), before.end(), tag) == before.end()) {
            introduced.push_back(tag);
        }
    }
    if (introduced.empty()) {
        return "EQUIVALENT\nThe rewrite computes the same blended colors, transmittance and contributor counts.\n";
    }
    const std::string label = generator_label(candidate);
    double detect = 1.0;
    if (auto it = profile.checker_accuracy.find(label); it != profile.checker_accuracy.end()) {
        detect = it->second;
    } else if (auto any = profile.checker_accuracy.find("*"); any != profile.checker_accuracy.end()) {
        detect = any->second;
    }
    Rng rng(seed ^ stable_hash64(std::string(original) + '\0' + std::string(candidate)));
    if (!rng.bernoulli(detect)) {
        return "EQUIVALENT\nThe loop restructuring looks like a pure performance change.\n";
    }
    return "NOT EQUIVALENT\n"
           "The candidate drops the inner blending loop over the batch, so only the first splat of each batch is "
           "blended.\n"
           "Pixel colors and final transmittance differ from the original kernel.\n";
}

std::string mock_review(std::uint64_t seed, std::string_view prompt) {
    const auto candidate = extract_fenced(prompt).value_or("");
    const auto tags = transform_tags(candidate);
    static const char *kIdeas[] = {"try staging more data in shared memory", "look at the loop structure again",
                                   "reduce register pressure in the blend loop", "check the math intrinsics"};
    Rng rng(seed ^ stable_hash64(prompt));
    std::ostringstream out;
    out << "Review: " << tags.size() << " transformation(s) applied";
    if (!tags.empty()) {
        out << " (";
        for (std::size_t i = 0; i < tags.size(); ++i) out << (i ? ", " : "") << tags[i];
        out << ')';
    }
    out << ". Next iteration: " << kIdeas[rng.below(4)] << ".\n";
    return out.str();
}

std::string mock_respond(const BackendConfig &cfg, std::string_view prompt) {
    switch (cfg.role) {
    case Role::Planner:
        return task_of(prompt) == "prune" ? mock_prune(prompt) : mock_plan(prompt);
    case Role::Generator:
        return mock_generate(cfg.mock_profile, cfg.mock_seed, prompt, cfg.label);
    case Role::Reviewer:
        return mock_review(cfg.mock_seed, prompt);
    case Role::Checker: {
        const auto original = extract_fenced(prompt, 0).value_or("");
        const auto candidate = extract_fenced(prompt, 1).value_or("");
        return mock_check(cfg.mock_profile, cfg.mock_seed, original, candidate);
    }
    }
    return {};
}

} // namespace splatopt
