// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/llm.hpp"

#include "splatopt/digest.hpp"

#include "splatopt/mock_llm.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace splatopt {

using nlohmann::json;

std::string to_string(Role r) {
    switch (r) {
    case Role::Planner:
        return "planner";
    case Role::Generator:
        return "generator";
    case Role::Reviewer:
        return "reviewer";
    case Role::Checker:
        return "checker";
    }
    return "unknown";
}

Role role_from_string(const std::string &s) {
    for (Role r : {Role::Planner, Role::Generator, Role::Reviewer, Role::Checker}) {
        if (to_string(r) == s) return r;
    }
    throw InputError("unknown role '" + s + "'");
}

void validate(const BackendConfig &cfg) {
    const std::string who = to_string(cfg.role) + " backend";
    if (cfg.kind == BackendKind::Remote) {
        if (cfg.endpoint.empty()) throw InputError(who + ": remote backend needs an endpoint");
        if (cfg.model.empty()) throw InputError(who + ": remote backend needs a model");
        if (cfg.api_key_env.empty()) throw InputError(who + ": remote backend needs api_key_env");
        if (!(cfg.timeout_seconds > 0)) throw InputError(who + ": timeout must be > 0");
        if (!(cfg.temperature >= 0.0)) throw InputError(who + ": temperature must be >= 0");
    } else {
        auto prob = [&](double p, const std::string &name) {
            if (!(p >= 0.0 && p <= 1.0)) throw InputError(who + ": " + name + " must lie in [0,1]");
        };
        prob(cfg.mock_profile.p_malformed, "p_malformed");
        prob(cfg.mock_profile.p_unsafe, "p_unsafe");
        for (const auto &[label, p] : cfg.mock_profile.checker_accuracy) prob(p, "checker_accuracy." + label);
    }
    if (cfg.max_concurrency < 1) throw InputError(who + ": max_concurrency must be >= 1");
}

BackendConfig backend_from_json(const json &j, Role role) {
    BackendConfig cfg;
    cfg.role = role;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "remote") {
            cfg.kind = BackendKind::Remote;
        } else if (kind == "mock") {
            cfg.kind = BackendKind::Mock;
        } else {
            throw InputError(to_string(role) + " backend: unknown kind '" + kind + "'");
        }
        cfg.label = j.value("label", cfg.kind == BackendKind::Mock ? "mock" : j.value("model", "remote"));
        cfg.endpoint = j.value("endpoint", "");
        cfg.model = j.value("model", "");
        cfg.api_key_env = j.value("api_key_env", "");
        cfg.temperature = j.value("temperature", cfg.temperature);
        cfg.timeout_seconds = j.value("timeout", cfg.timeout_seconds);
        cfg.max_retries = j.value("max_retries", cfg.max_retries);
        cfg.backoff_initial_seconds = j.value("backoff_initial", cfg.backoff_initial_seconds);
        cfg.backoff_max_seconds = j.value("backoff_max", cfg.backoff_max_seconds);
        cfg.max_concurrency = j.value("max_concurrency", cfg.max_concurrency);
        cfg.mock_seed = j.value("seed", std::uint64_t{0});
        if (j.contains("profile")) {
            const json &p = j.at("profile");
            cfg.mock_profile.p_malformed = p.value("p_malformed", 0.0);
            cfg.mock_profile.p_unsafe = p.value("p_unsafe", 0.0);
            cfg.mock_profile.catalog_bias = p.value("catalog_bias", std::map<std::string, double>{});
            cfg.mock_profile.checker_accuracy = p.value("checker_accuracy", std::map<std::string, double>{});
        }
    } catch (const json::exception &e) {
        throw InputError(to_string(role) + " backend: " + e.what());
    }
    if (cfg.kind == BackendKind::Mock && cfg.mock_profile.catalog_bias.empty()) {
        cfg.mock_profile.catalog_bias = default_catalog_bias();
    }
    validate(cfg);
    return cfg;
}

json backend_to_json(const BackendConfig &cfg) {
    json j = {{"kind", cfg.kind == BackendKind::Remote ? "remote" : "mock"},
              {"label", cfg.label},
              {"max_concurrency", cfg.max_concurrency}};
    if (cfg.kind == BackendKind::Remote) {
        // Only the variable name is stored, never the key.
        j["endpoint"] = cfg.endpoint;
        j["model"] = cfg.model;
        j["api_key_env"] = cfg.api_key_env;
        j["temperature"] = cfg.temperature;
        j["timeout"] = cfg.timeout_seconds;
        j["max_retries"] = cfg.max_retries;
        j["backoff_initial"] = cfg.backoff_initial_seconds;
        j["backoff_max"] = cfg.backoff_max_seconds;
    } else {
        j["seed"] = cfg.mock_seed;
        j["profile"] = {{"p_malformed", cfg.mock_profile.p_malformed},
                        {"p_unsafe", cfg.mock_profile.p_unsafe},
                        {"catalog_bias", cfg.mock_profile.catalog_bias},
                        {"checker_accuracy", cfg.mock_profile.checker_accuracy}};
    }
    return j;
}

std::string build_request_body(const BackendConfig &cfg, std::string_view prompt) {
    json body = {{"model", cfg.model},
                 {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
                 {"temperature", cfg.temperature}};
    return body.dump();
}

std::string parse_response_body(const std::string &body) {
    try {
        const json j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception &e) {
        throw RemoteError(200, std::string("unexpected completion response: ") + e.what());
    }
}

namespace {

class HttplibTransport : public HttpTransport {
  public:
    HttpResponse post(const std::string &url, const std::vector<std::pair<std::string, std::string>> &headers,
                      const std::string &body, double timeout_seconds) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw TransportError("endpoint '" + url + "' has no scheme");
        const auto path_begin = url.find('/', scheme_end + 3);
        const std::string origin = url.substr(0, path_begin);
        const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

        httplib::Client client(origin);
        const auto secs = static_cast<time_t>(timeout_seconds);
        const auto usecs = static_cast<time_t>((timeout_seconds - double(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);

        httplib::Headers h;
        for (const auto &[k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path, h, body, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
                throw Timeout("request to " + origin + " timed out");
            }
            throw TransportError("request to " + origin + " failed: " + httplib::to_string(err));
        }
        return {res->status, res->body};
    }
};

bool retriable_status(int status) { return status == 429 || status >= 500; }

} // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

Exchange complete(const BackendConfig &cfg, std::string_view prompt, HttpTransport *transport) {
    const auto start = std::chrono::steady_clock::now();
    Exchange ex;
    ex.role = cfg.role;
    ex.prompt = std::string(prompt);

    if (cfg.kind == BackendKind::Mock) {
        ex.response = mock_respond(cfg, prompt);
        ex.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return ex;
    }

    const char *key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthMissing("environment variable " + cfg.api_key_env + " is not set");
    }
    std::shared_ptr<HttpTransport> owned;
    if (transport == nullptr) {
        owned = make_http_transport();
        transport = owned.get();
    }
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Authorization", std::string("Bearer ") + key}};
    const std::string body = build_request_body(cfg, prompt);

    std::string last_error;
    double delay = cfg.backoff_initial_seconds;
    for (unsigned attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
        if (attempt > 1 && delay > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay = std::min(delay * 2.0, cfg.backoff_max_seconds);
        }
        try {
            const HttpResponse res = transport->post(cfg.endpoint, headers, body, cfg.timeout_seconds);
            if (res.status >= 200 && res.status < 300) {
                ex.response = parse_response_body(res.body);
                ex.attempt = attempt;
                ex.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                return ex;
            }
            if (!retriable_status(res.status)) {
                throw RemoteError(res.status, "backend returned HTTP " + std::to_string(res.status));
            }
            last_error = "HTTP " + std::to_string(res.status);
        } catch (const Timeout &e) {
            last_error = e.what();
        } catch (const TransportError &e) {
            last_error = e.what();
        }
    }
    throw BackendExhausted(to_string(cfg.role) + " backend failed after " + std::to_string(cfg.max_retries + 1) +
                           " attempts; last error: " + last_error);
}

Gateway::Gateway(std::map<Role, BackendConfig> backends, std::shared_ptr<HttpTransport> transport)
    : backends_(std::move(backends)), transport_(std::move(transport)) {
    for (auto &[role, cfg] : backends_) {
        cfg.role = role;
        validate(cfg);
        auto slots = std::make_unique<Slots>();
        slots->free = cfg.max_concurrency;
        slots_.emplace(role, std::move(slots));
    }
    if (!transport_) transport_ = make_http_transport();
}

const BackendConfig &Gateway::config(Role role) const {
    auto it = backends_.find(role);
    if (it == backends_.end()) throw InputError("no backend configured for role " + to_string(role));
    return it->second;
}

Exchange Gateway::complete(Role role, std::string_view prompt, std::uint64_t nonce) {
    BackendConfig cfg = config(role);
    if (nonce != 0) cfg.mock_seed = mix64(cfg.mock_seed ^ mix64(nonce));
    Slots &slots = *slots_.at(role);
    {
        std::unique_lock lock(slots.mu);
        slots.cv.wait(lock, [&] { return slots.free > 0; });
        --slots.free;
    }
    struct Release {
        Slots &s;
        ~Release() {
            {
                std::lock_guard lock(s.mu);
                ++s.free;
            }
            s.cv.notify_one();
        }
    } release{slots};
    return splatopt::complete(cfg, prompt, transport_.get());
}

} // namespace splatopt
