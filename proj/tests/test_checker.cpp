// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/checker.hpp"
#include "splatopt/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace splatopt;

namespace {

const std::filesystem::path kData = SPLATOPT_DATA_DIR;

SourceProgram crosscheck_file(const std::string &name) { return load_program(kData / "crosscheck" / name); }

BackendConfig mock_checker(const std::string &label, std::map<std::string, double> accuracy) {
    BackendConfig cfg;
    cfg.role = Role::Checker;
    cfg.label = label;
    cfg.mock_profile.checker_accuracy = std::move(accuracy);
    return cfg;
}

class AlwaysDown : public HttpTransport {
  public:
    HttpResponse post(const std::string &, const std::vector<std::pair<std::string, std::string>> &,
                      const std::string &, double) override {
        return {503, ""};
    }
};

BackendConfig failing_remote() {
    setenv("SPLATOPT_CHECKER_TEST_KEY", "k", 1);
    BackendConfig cfg;
    cfg.role = Role::Checker;
    cfg.kind = BackendKind::Remote;
    cfg.label = "Down";
    cfg.endpoint = "http://x/v1";
    cfg.model = "m";
    cfg.api_key_env = "SPLATOPT_CHECKER_TEST_KEY";
    cfg.max_retries = 1;
    cfg.backoff_initial_seconds = 0.0;
    return cfg;
}

} // namespace

TEST(ParseVerdict, PlainEquivalent) {
    const auto v = parse_verdict("EQUIVALENT\nSame math.\n", "c1");
    EXPECT_TRUE(v.equivalent);
    EXPECT_EQ(v.reasons, std::vector<std::string>{"Same math."});
    EXPECT_EQ(v.checker_role, "c1");
}

TEST(ParseVerdict, NotEquivalentWithReasons) {
    const auto v = parse_verdict("Let me look.\n**Not Equivalent**\n- drops the inner loop\n\n- T differs\n");
    EXPECT_FALSE(v.equivalent);
    ASSERT_EQ(v.reasons.size(), 2u);
    EXPECT_EQ(v.reasons[0], "- drops the inner loop");
}

TEST(ParseVerdict, NotEquivalentAlwaysHasAReason) {
    const auto v = parse_verdict("not equivalent");
    EXPECT_FALSE(v.equivalent);
    EXPECT_EQ(v.reasons, std::vector<std::string>{"no reason given"});
}

TEST(ParseVerdict, NoVerdictThrows) {
    EXPECT_THROW(parse_verdict("maybe fine"), UnparseableVerdict);
    EXPECT_THROW(parse_verdict(""), UnparseableVerdict);
}

TEST(CheckPrompt, CarriesBothPrograms) {
    const auto orig = crosscheck_file("original.cu");
    const auto cand = crosscheck_file("gemini.cu");
    const auto prompt = build_check_prompt(orig, cand);
    EXPECT_NE(prompt.find(orig.full_text()), std::string::npos);
    EXPECT_NE(prompt.find(cand.full_text()), std::string::npos);
    EXPECT_LT(prompt.find(orig.full_text()), prompt.find(cand.full_text()));
}

TEST(Check, MockFlagsUnsafeFixture) {
    const auto v = check(crosscheck_file("original.cu"), crosscheck_file("gpt5.cu"), mock_checker("c", {}));
    EXPECT_FALSE(v.equivalent);
    EXPECT_FALSE(v.reasons.empty());
}

TEST(Check, IdenticalProgramIsEquivalent) {
    const auto orig = crosscheck_file("original.cu");
    EXPECT_TRUE(check(orig, orig, mock_checker("c", {})).equivalent);
}

TEST(Check, BackendFailureFailsClosed) {
    AlwaysDown down;
    const auto orig = crosscheck_file("original.cu");
    const auto v = check(orig, orig, failing_remote(), TemplateSet::defaults(), &down);
    EXPECT_FALSE(v.equivalent);
    ASSERT_FALSE(v.reasons.empty());
}

TEST(Check, MissingKeyPropagates) {
    auto cfg = failing_remote();
    cfg.api_key_env = "SPLATOPT_CHECKER_UNSET_KEY";
    unsetenv("SPLATOPT_CHECKER_UNSET_KEY");
    const auto orig = crosscheck_file("original.cu");
    EXPECT_THROW(check(orig, orig, cfg), AuthMissing);
}

TEST(CheckBenefit, Threshold) {
    EXPECT_TRUE(check_benefit(0.4));
    EXPECT_FALSE(check_benefit(1.0 / 3.0));
    EXPECT_FALSE(check_benefit(0.0));
    EXPECT_TRUE(check_benefit(0.2, 4, 1) == (0.2 > 1.0 / 5.0));
    EXPECT_TRUE(check_benefit(0.21, 4, 1));
}

TEST(CheckBenefit, MonotoneInErrorRate) {
    bool seen = false;
    for (int i = 0; i <= 100; ++i) {
        const bool b = check_benefit(i / 100.0);
        if (seen) EXPECT_TRUE(b);
        seen = seen || b;
    }
    EXPECT_TRUE(seen);
}

TEST(CrossCheck, ShippedConfigReproducesMatrix) {
    const auto cfg = load_run_config(kData / "configs" / "crosscheck_matrix.json");
    ASSERT_TRUE(cfg.crosscheck);
    std::map<std::string, SourceProgram> fixtures;
    for (const auto &[g, path] : cfg.crosscheck->fixtures) fixtures[g] = load_program(path);
    const auto m = build_matrix(cfg.crosscheck->checkers, cfg.crosscheck->generators, fixtures,
                                load_program(cfg.crosscheck->original));
    EXPECT_EQ(matrix_to_csv(m), "checker,GPT-5,Deepseek_r1,Gemini,Claude\n"
                                "GPT-5,Y,Y,Y,Y\n"
                                "Deepseek_r1,N,Y,Y,N\n"
                                "Gemini,N,N,Y,N\n"
                                "Claude,N,Y,N,N\n");
    EXPECT_TRUE(m.notes.empty());
    EXPECT_TRUE(m.at("Claude", "Deepseek_r1"));
    EXPECT_FALSE(m.at("Claude", "Claude"));
}

TEST(CrossCheck, EmptyCheckerList) {
    const auto m = build_matrix({}, {"A"}, {{"A", crosscheck_file("gpt5.cu")}}, crosscheck_file("original.cu"));
    EXPECT_TRUE(m.checkers.empty());
    EXPECT_TRUE(m.detected.empty());
}

TEST(CrossCheck, SafeFixtureIsNotDetected) {
    const auto orig = crosscheck_file("original.cu");
    const auto m = build_matrix({mock_checker("C", {})}, {"Safe"}, {{"Safe", orig}}, orig);
    ASSERT_EQ(m.detected.size(), 1u);
    EXPECT_FALSE(m.at("C", "Safe"));
    EXPECT_EQ(matrix_to_csv(m), "checker,Safe\nC,N\n");
}

TEST(CrossCheck, MissingFixtureIsInputError) {
    EXPECT_THROW(build_matrix({mock_checker("C", {})}, {"Nobody"}, {}, crosscheck_file("original.cu")), InputError);
}

TEST(CrossCheck, CellErrorsBecomeNotes) {
    AlwaysDown down;
    const auto orig = crosscheck_file("original.cu");
    const auto m = build_matrix({failing_remote()}, {"G"}, {{"G", crosscheck_file("gpt5.cu")}}, orig,
                                TemplateSet::defaults(), &down);
    EXPECT_FALSE(m.at("Down", "G"));
    ASSERT_EQ(m.notes.size(), 1u);
    EXPECT_EQ(m.notes[0].rfind("Down/G: ", 0), 0u);
}

TEST(CrossCheck, CsvRoundTrip) {
    CrossCheckMatrix m;
    m.checkers = {"a", "b"};
    m.generators = {"x", "y", "z"};
    m.detected = {{true, false, true}, {false, false, true}};
    EXPECT_EQ(matrix_from_csv(matrix_to_csv(m)), m);
    EXPECT_THROW(matrix_from_csv("checker,x\na,Y,N\n"), InputError);
    EXPECT_THROW(matrix_from_csv("checker,x\na,maybe\n"), InputError);
    EXPECT_THROW(m.at("nobody", "x"), InputError);
}
