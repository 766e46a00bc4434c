// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/planner.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace splatopt;

namespace {

const std::filesystem::path kData = SPLATOPT_DATA_DIR;

const std::string kFiveItems = "1. Use fast-math intrinsics for exp. Cheaper transcendental functions.\n"
                               "2. Drop the per-pixel contributor bookkeeping. It is only needed for backward.\n"
                               "3. Simplify the batch loop. Fewer index computations per splat.\n"
                               "4. Coalesce the RGB loads. One vector load instead of three.\n"
                               "5. Improve the shared memory layout. Avoid bank conflicts.\n";

Plan three_item_plan() {
    Plan p;
    p.advice = {{1, "Fast math", "", ""}, {2, "Double buffering", "", "memory-bound kernels"}, {3, "Unroll", "", ""}};
    return p;
}

ProfileContext reference_context() {
    ProfileContext ctx;
    ctx.system = parse_metrics(kData / "fixtures" / "metrics_mipnerf360.csv");
    ctx.workload = parse_workload(kData / "fixtures" / "workload_reference.csv");
    ctx.occupancy = compute_waves(778, 519, {16, 16}, {24, 2048, 6});
    return ctx;
}

} // namespace

TEST(PlanPrompt, EmbedsProgramAndMarkerRule) {
    const auto p = load_program(kData / "fixtures" / "rasterize.cu");
    const std::string prompt = build_plan_prompt(p);
    EXPECT_NE(prompt.find(p.full_text()), std::string::npos);
    EXPECT_NE(prompt.find("EVOLVE-BLOCK"), std::string::npos);
}

TEST(PlanPrompt, NoBlocksThrows) {
    EXPECT_THROW(build_plan_prompt(extract_blocks("int main() {}\n")), NoEvolveBlocks);
}

TEST(ParseAdvice, FiveNumberedItems) {
    const auto plan = parse_advice(kFiveItems);
    ASSERT_EQ(plan.advice.size(), 5u);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(plan.advice[i].id, i + 1);
    EXPECT_EQ(plan.advice[0].title, "Use fast-math intrinsics for exp");
    EXPECT_EQ(plan.advice[0].rationale, "Cheaper transcendental functions.");
    EXPECT_EQ(plan.skipped_lines, 0u);
}

TEST(ParseAdvice, BulletsParenthesesAndContinuations) {
    const std::string text = "Here is my plan:\n"
                             "- **Fast math**: use intrinsics\n"
                             "  Precondition: compute-bound kernel\n"
                             "3) Unroll the channel loop\n"
                             "    since it has three iterations\n";
    const auto plan = parse_advice(text);
    ASSERT_EQ(plan.advice.size(), 2u);
    EXPECT_EQ(plan.advice[0].title, "Fast math");
    EXPECT_EQ(plan.advice[0].preconditions, "compute-bound kernel");
    EXPECT_EQ(plan.advice[1].id, 2);
    EXPECT_NE(plan.advice[1].rationale.find("three iterations"), std::string::npos);
    EXPECT_EQ(plan.skipped_lines, 1u);
}

TEST(ParseAdvice, NothingRecognizedThrows) {
    EXPECT_THROW(parse_advice("I have no suggestions.\n"), EmptyPlan);
    EXPECT_THROW(parse_advice(""), EmptyPlan);
}

TEST(ParseAdvice, RenderRoundTrip) {
    const auto plan = parse_advice(kFiveItems + "6. Reorder. Precondition: warps diverge\n");
    const auto again = parse_advice(render_advice_list(plan));
    ASSERT_EQ(again.advice.size(), plan.advice.size());
    for (std::size_t i = 0; i < plan.advice.size(); ++i) {
        EXPECT_EQ(again.advice[i].title, plan.advice[i].title);
        EXPECT_EQ(again.advice[i].id, plan.advice[i].id);
    }
    EXPECT_EQ(render_advice_list(again), render_advice_list(plan));
}

TEST(PrunePrompt, CarriesProfileFacts) {
    const std::string prompt = build_prune_prompt(parse_advice(kFiveItems), reference_context());
    for (const char *needle : {"compute-bound", "margin 5.52", "not_selected", "12 waves", "early stop rarely fires",
                               "[1]", "[5]", "KEEP", "DROP"})
        EXPECT_NE(prompt.find(needle), std::string::npos) << needle;
}

TEST(PrunePrompt, EmptyPlanThrows) { EXPECT_THROW(build_prune_prompt(Plan{}, reference_context()), EmptyPlan); }

TEST(DescribeWorkload, FrequentEarlyStop) {
    WorkloadStats w{40, 10, 0.4, 0.01};
    const std::string text = describe_workload(w);
    EXPECT_NE(text.find("low iteration count"), std::string::npos);
    EXPECT_NE(text.find("Early stop fires often"), std::string::npos);
}

TEST(ParsePruned, KeepAndDropWithReason) {
    const auto pr = parse_pruned("keep 1,3; drop 2 (memory-bound only)", three_item_plan());
    EXPECT_EQ(pr.kept, (std::vector<int>{1, 3}));
    ASSERT_EQ(pr.dropped.size(), 1u);
    EXPECT_EQ(pr.dropped[0].first, 2);
    EXPECT_EQ(pr.dropped[0].second, "memory-bound only");
    EXPECT_TRUE(pr.keeps(3));
    EXPECT_FALSE(pr.keeps(2));
}

TEST(ParsePruned, LineFormat) {
    const auto pr = parse_pruned("KEEP 2 (hides latency)\nDROP 1: already fast\n", three_item_plan());
    EXPECT_EQ(pr.kept, (std::vector<int>{2}));
    ASSERT_EQ(pr.dropped.size(), 2u);
    EXPECT_EQ(pr.dropped[0], (std::pair<int, std::string>{1, "already fast"}));
    EXPECT_EQ(pr.dropped[1], (std::pair<int, std::string>{3, "unmentioned"}));
}

TEST(ParsePruned, KeptAndDroppedEndsDropped) {
    const auto pr = parse_pruned("keep 1, 2\ndrop 2 (changed my mind)\nkeep 3", three_item_plan());
    EXPECT_EQ(pr.kept, (std::vector<int>{1, 3}));
}

TEST(ParsePruned, NoKnownIdThrows) {
    EXPECT_THROW(parse_pruned("keep everything", three_item_plan()), NoIdsRecognized);
    EXPECT_THROW(parse_pruned("keep 7", three_item_plan()), NoIdsRecognized);
}

TEST(ParsePruned, KeptAndDroppedPartitionThePlan) {
    const auto plan = parse_advice(kFiveItems);
    const char *responses[] = {"keep 1", "drop 5", "keep 1,2,3,4,5", "drop 1 (x)\nkeep 2\nkeep 4 (y)",
                               "KEEP 3\nDROP 3\nDROP 9"};
    for (const char *r : responses) {
        const auto pr = parse_pruned(r, plan);
        std::set<int> seen(pr.kept.begin(), pr.kept.end());
        for (const auto &[id, reason] : pr.dropped) {
            EXPECT_TRUE(seen.insert(id).second) << r;
            EXPECT_FALSE(reason.empty());
        }
        EXPECT_EQ(seen, (std::set<int>{1, 2, 3, 4, 5})) << r;
    }
}

TEST(SelectedAdvice, WholePlanOrKeptOnly) {
    const auto plan = three_item_plan();
    EXPECT_EQ(selected_advice(plan, nullptr).size(), 3u);
    const auto pr = parse_pruned("keep 3", plan);
    const auto sel = selected_advice(plan, &pr);
    ASSERT_EQ(sel.size(), 1u);
    EXPECT_EQ(sel[0].title, "Unroll");
    EXPECT_EQ(advice_prompt_section(sel), "Here are first 1 to try.\nUnroll.\n");
    EXPECT_EQ(advice_prompt_section({}), "");
}

TEST(PlanJson, RoundTrip) {
    auto plan = parse_advice(kFiveItems);
    plan.source_digest = "abc";
    const auto back = plan_from_json(plan_to_json(plan));
    EXPECT_EQ(plan_to_json(back), plan_to_json(plan));
    const auto pr = parse_pruned("keep 1,3; drop 2 (no)", plan);
    EXPECT_EQ(pruned_to_json(pruned_from_json(pruned_to_json(pr))), pruned_to_json(pr));
}
