// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/llm.hpp"
#include "splatopt/mock_llm.hpp"
#include "splatopt/program.hpp"
#include "splatopt/templates.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace splatopt;

namespace {

const std::filesystem::path kData = SPLATOPT_DATA_DIR;

std::string kernel_text() {
    std::ifstream in(kData / "fixtures" / "rasterize.cu");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string generate_prompt(const std::string &advice = "") {
    return TemplateSet::defaults().render("generate", {{"advice", advice}, {"program", kernel_text()}});
}

BackendConfig remote(const std::string &endpoint, const std::string &key_env) {
    BackendConfig cfg;
    cfg.kind = BackendKind::Remote;
    cfg.label = "remote";
    cfg.endpoint = endpoint;
    cfg.model = "test-model";
    cfg.api_key_env = key_env;
    cfg.timeout_seconds = 2.0;
    cfg.max_retries = 2;
    cfg.backoff_initial_seconds = 0.001;
    cfg.backoff_max_seconds = 0.004;
    return cfg;
}

std::string ok_body(const std::string &content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Replays scripted statuses and records what it was sent.
class ScriptedTransport : public HttpTransport {
  public:
    explicit ScriptedTransport(std::vector<int> statuses) : statuses_(std::move(statuses)) {}

    HttpResponse post(const std::string &url, const std::vector<std::pair<std::string, std::string>> &headers,
                      const std::string &body, double) override {
        last_url = url;
        last_headers = headers;
        last_body = body;
        const int status = statuses_.at(std::min(calls, statuses_.size() - 1));
        ++calls;
        if (status == -1) throw TransportError("connection refused");
        return {status, status == 200 ? ok_body("hello") : "{\"error\":\"x\"}"};
    }

    std::size_t calls = 0;
    std::string last_url;
    std::vector<std::pair<std::string, std::string>> last_headers;
    std::string last_body;

  private:
    std::vector<int> statuses_;
};

struct KeyGuard {
    explicit KeyGuard(const char *name, const char *value) : name_(name) { setenv(name, value, 1); }
    ~KeyGuard() { unsetenv(name_); }
    const char *name_;
};

} // namespace

TEST(Roles, StringRoundTrip) {
    for (Role r : {Role::Planner, Role::Generator, Role::Reviewer, Role::Checker})
        EXPECT_EQ(role_from_string(to_string(r)), r);
    EXPECT_THROW(role_from_string("oracle"), InputError);
}

TEST(BackendConfigJson, RoundTripAndValidation) {
    BackendConfig cfg = remote("http://localhost:1/v1/chat/completions", "SOME_KEY");
    cfg.role = Role::Planner;
    const auto back = backend_from_json(backend_to_json(cfg), Role::Planner);
    EXPECT_EQ(backend_to_json(back), backend_to_json(cfg));
    EXPECT_EQ(backend_to_json(cfg).dump().find("secret"), std::string::npos);

    cfg.temperature = -1.0;
    EXPECT_THROW(validate(cfg), InputError);
    cfg = remote("", "K");
    EXPECT_THROW(validate(cfg), InputError);
}

TEST(MockGenerator, DeterministicPerSeedAndPrompt) {
    MockProfile profile;
    const auto prompt = generate_prompt();
    EXPECT_EQ(mock_generate(profile, 5, prompt), mock_generate(profile, 5, prompt));
    std::set<std::string> outputs;
    for (std::uint64_t s = 0; s < 20; ++s) outputs.insert(mock_generate(profile, s, prompt));
    EXPECT_GT(outputs.size(), 1u);
}

TEST(MockGenerator, KeepsMarkersAndOutsideText) {
    MockProfile profile;
    const auto original = extract_blocks(kernel_text());
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto out = mock_generate(profile, s, generate_prompt(), "Tester");
        const auto cand = extract_blocks(out);
        EXPECT_EQ(cand.blocks().size(), original.blocks().size());
        EXPECT_FALSE(diff_outside_blocks(original, out));
        EXPECT_EQ(generator_label(out), "Tester");
        EXPECT_LE(transform_tags(out).size(), 1u);
    }
}

TEST(MockGenerator, AlwaysMalformedBreaksTheProgram) {
    MockProfile profile;
    profile.p_malformed = 1.0;
    const auto original = extract_blocks(kernel_text());
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto out = mock_generate(profile, s, generate_prompt());
        bool broken = false;
        try {
            broken = extract_blocks(out).blocks().size() != original.blocks().size() ||
                     diff_outside_blocks(original, out);
        } catch (const UnbalancedMarkers &) {
            broken = true;
        }
        EXPECT_TRUE(broken) << "seed " << s;
    }
}

TEST(MockGenerator, AdviceSteersTowardItsTransform) {
    MockProfile profile;
    profile.catalog_bias = default_catalog_bias();
    const auto prompt = generate_prompt("Here are first 1 to try.\nUse fast-math intrinsics.\n");
    int hits = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto tags = transform_tags(mock_generate(profile, s, prompt));
        hits += !tags.empty() && tags[0] == "fastmath";
    }
    // Without advice each of the eight eligible transforms is equally likely.
    EXPECT_GT(hits, 15);
}

TEST(MockGenerator, AdviceOnlyTransformNeedsAdvice) {
    MockProfile profile;
    for (std::uint64_t s = 0; s < 50; ++s) {
        for (const auto &t : transform_tags(mock_generate(profile, s, generate_prompt()))) EXPECT_NE(t, "shmem-layout");
    }
}

TEST(MockGenerator, AlwaysUnsafeAddsTheUnsafeTag) {
    MockProfile profile;
    profile.p_unsafe = 1.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto tags = transform_tags(mock_generate(profile, s, generate_prompt()));
        EXPECT_NE(std::find(tags.begin(), tags.end(), std::string(kUnsafeInnerLoopTag)), tags.end());
    }
}

TEST(MockGenerator, NoProgramNoCode) {
    EXPECT_EQ(mock_generate({}, 1, "no fence here").find("EVOLVE"), std::string::npos);
}

TEST(MockChecker, SafeCandidateIsEquivalent) {
    const auto orig = kernel_text();
    const auto cand = mock_generate({}, 3, generate_prompt());
    EXPECT_EQ(mock_check({}, 1, orig, cand).rfind("EQUIVALENT", 0), 0u);
}

TEST(MockChecker, AccuracyDecidesDetection) {
    const auto orig = kernel_text();
    MockProfile unsafe;
    unsafe.p_unsafe = 1.0;
    const auto cand = mock_generate(unsafe, 3, generate_prompt(), "Gen");

    MockProfile sure;
    EXPECT_EQ(mock_check(sure, 1, orig, cand).rfind("NOT EQUIVALENT", 0), 0u);
    MockProfile blind;
    blind.checker_accuracy = {{"Gen", 0.0}, {"*", 1.0}};
    EXPECT_EQ(mock_check(blind, 1, orig, cand).rfind("EQUIVALENT", 0), 0u);
    MockProfile fallback;
    fallback.checker_accuracy = {{"Other", 0.0}, {"*", 1.0}};
    EXPECT_EQ(mock_check(fallback, 1, orig, cand).rfind("NOT EQUIVALENT", 0), 0u);
}

TEST(MockPlanner, PlanAndPruneResponsesParse) {
    const auto plan = mock_plan(TemplateSet::defaults().render("plan", {{"program", kernel_text()}}));
    EXPECT_NE(plan.find("1."), std::string::npos);
    EXPECT_EQ(mock_plan(TemplateSet::defaults().render("plan", {{"program", kernel_text()}})), plan);
}

TEST(RequestBody, ChatCompletionShape) {
    BackendConfig cfg = remote("http://x/v1", "K");
    const auto j = nlohmann::json::parse(build_request_body(cfg, "hi \"there\""));
    EXPECT_EQ(j.at("model"), "test-model");
    EXPECT_EQ(j.at("messages").at(0).at("role"), "user");
    EXPECT_EQ(j.at("messages").at(0).at("content"), "hi \"there\"");
    EXPECT_DOUBLE_EQ(j.at("temperature").get<double>(), 0.7);
}

TEST(ResponseBody, FirstChoiceOrRemoteError) {
    EXPECT_EQ(parse_response_body(ok_body("abc")), "abc");
    EXPECT_THROW(parse_response_body("{}"), RemoteError);
    EXPECT_THROW(parse_response_body("not json"), RemoteError);
}

TEST(Remote, MissingKeyFailsBeforeAnyRequest) {
    unsetenv("SPLATOPT_TEST_UNSET_KEY");
    ScriptedTransport t({200});
    EXPECT_THROW(complete(remote("http://x/v1", "SPLATOPT_TEST_UNSET_KEY"), "p", &t), AuthMissing);
    EXPECT_EQ(t.calls, 0u);
}

TEST(Remote, SendsBearerKey) {
    KeyGuard key("SPLATOPT_TEST_KEY", "k123");
    ScriptedTransport t({200});
    const auto ex = complete(remote("http://x/v1", "SPLATOPT_TEST_KEY"), "prompt", &t);
    EXPECT_EQ(ex.response, "hello");
    EXPECT_EQ(ex.attempt, 1u);
    EXPECT_EQ(t.last_url, "http://x/v1");
    ASSERT_EQ(t.last_headers.size(), 1u);
    EXPECT_EQ(t.last_headers[0].second, "Bearer k123");
}

TEST(Remote, RetriesServerErrorsAndRateLimits) {
    KeyGuard key("SPLATOPT_TEST_KEY", "k");
    ScriptedTransport t({503, 429, 200});
    const auto ex = complete(remote("http://x/v1", "SPLATOPT_TEST_KEY"), "p", &t);
    EXPECT_EQ(ex.attempt, 3u);
    EXPECT_EQ(t.calls, 3u);
}

TEST(Remote, ClientErrorIsNotRetried) {
    KeyGuard key("SPLATOPT_TEST_KEY", "k");
    ScriptedTransport t({401});
    try {
        complete(remote("http://x/v1", "SPLATOPT_TEST_KEY"), "p", &t);
        FAIL();
    } catch (const RemoteError &e) {
        EXPECT_EQ(e.status(), 401);
    }
    EXPECT_EQ(t.calls, 1u);
}

TEST(Remote, ExhaustsAfterMaxRetriesPlusOne) {
    KeyGuard key("SPLATOPT_TEST_KEY", "k");
    ScriptedTransport t({500, -1});
    EXPECT_THROW(complete(remote("http://x/v1", "SPLATOPT_TEST_KEY"), "p", &t), BackendExhausted);
    EXPECT_EQ(t.calls, 3u);
}

TEST(Remote, RealHttpServer) {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_body, seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request &req, httplib::Response &res) {
        if (hits++ == 0) {
            res.status = 502;
            return;
        }
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        res.set_content(ok_body("served"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    KeyGuard key("SPLATOPT_TEST_KEY", "abc");
    const auto cfg = remote("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "SPLATOPT_TEST_KEY");
    const auto ex = complete(cfg, "ping");
    server.stop();
    th.join();

    EXPECT_EQ(ex.response, "served");
    EXPECT_EQ(ex.attempt, 2u);
    EXPECT_EQ(seen_auth, "Bearer abc");
    EXPECT_EQ(nlohmann::json::parse(seen_body).at("messages").at(0).at("content"), "ping");
}

TEST(Remote, UnreachableServerExhausts) {
    KeyGuard key("SPLATOPT_TEST_KEY", "abc");
    auto cfg = remote("http://127.0.0.1:1/v1", "SPLATOPT_TEST_KEY");
    cfg.max_retries = 1;
    EXPECT_THROW(complete(cfg, "p"), BackendExhausted);
}

namespace {

// Counts the largest number of overlapping post() calls.
class SlowTransport : public HttpTransport {
  public:
    HttpResponse post(const std::string &, const std::vector<std::pair<std::string, std::string>> &,
                      const std::string &, double) override {
        const int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        --in_flight;
        return {200, ok_body("ok")};
    }
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
};

} // namespace

TEST(Gateway, ConcurrencyLimitPerBackend) {
    KeyGuard key("SPLATOPT_TEST_KEY", "abc");
    auto transport = std::make_shared<SlowTransport>();
    auto cfg = remote("http://x/v1", "SPLATOPT_TEST_KEY");
    cfg.max_concurrency = 2;
    Gateway gw({{Role::Generator, cfg}}, transport);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.complete(Role::Generator, "p"); });
    for (auto &t : threads) t.join();
    EXPECT_EQ(transport->peak.load(), 2);
}

TEST(Gateway, NonceVariesMockReplies) {
    BackendConfig cfg;
    cfg.mock_seed = 9;
    Gateway gw({{Role::Generator, cfg}});
    const auto prompt = generate_prompt();
    EXPECT_EQ(gw.complete(Role::Generator, prompt).response, gw.complete(Role::Generator, prompt).response);
    std::set<std::string> replies;
    for (std::uint64_t n = 1; n <= 20; ++n) replies.insert(gw.complete(Role::Generator, prompt, n).response);
    EXPECT_GT(replies.size(), 1u);
    EXPECT_THROW(gw.complete(Role::Checker, "p"), InputError);
}
