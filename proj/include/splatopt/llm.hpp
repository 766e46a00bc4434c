// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/error.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace splatopt {

enum class Role { Planner, Generator, Reviewer, Checker };
enum class BackendKind { Remote, Mock };

std::string to_string(Role r);
Role role_from_string(const std::string &s);

class AuthMissing : public Error {
  public:
    using Error::Error;
};

class TransportError : public Error {
  public:
    using Error::Error;
};

class RemoteError : public Error {
  public:
    RemoteError(int status, const std::string &what) : Error(what), status_(status) {}
    int status() const { return status_; }

  private:
    int status_;
};

class BackendExhausted : public Error {
  public:
    using Error::Error;
};

// Failure injection and detection knobs of the mock backends.
struct MockProfile {
    double p_malformed = 0.0;
    double p_unsafe = 0.0;
    // Advice keyword -> extra draw weight for the transforms it names.
    std::map<std::string, double> catalog_bias;
    // Generator label -> probability that an unsafe candidate is caught.
    // "*" is the fallback; with no entry at all detection is certain.
    std::map<std::string, double> checker_accuracy;
};

struct BackendConfig {
    Role role = Role::Generator;
    BackendKind kind = BackendKind::Mock;
    std::string label = "mock";
    // remote
    std::string endpoint;
    std::string model;
    std::string api_key_env;
    double temperature = 0.7;
    double timeout_seconds = 120.0;
    unsigned max_retries = 3;
    double backoff_initial_seconds = 1.0;
    double backoff_max_seconds = 30.0;
    unsigned max_concurrency = 2;
    // mock
    std::uint64_t mock_seed = 0;
    MockProfile mock_profile;
};

/// Throws InputError for a config that breaks its invariants.
void validate(const BackendConfig &cfg);

BackendConfig backend_from_json(const nlohmann::json &j, Role role);
nlohmann::json backend_to_json(const BackendConfig &cfg);

struct Exchange {
    Role role = Role::Generator;
    std::string prompt;
    std::string response;
    double latency_seconds = 0.0;
    unsigned attempt = 1;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

// Seam for the remote adapter. post() throws Timeout or TransportError when
// no HTTP response arrives.
class HttpTransport {
  public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string &url, const std::vector<std::pair<std::string, std::string>> &headers,
                              const std::string &body, double timeout_seconds) = 0;
};

/// cpp-httplib backed transport (http and https).
std::shared_ptr<HttpTransport> make_http_transport();

/// Chat-completion request body for one user message.
std::string build_request_body(const BackendConfig &cfg, std::string_view prompt);
/// Content of the first choice. Throws RemoteError on an unexpected shape.
std::string parse_response_body(const std::string &body);

/// One prompt, one completion. Remote calls retry timeouts, transport
/// errors, 429 and 5xx with exponential backoff; other statuses throw
/// RemoteError at once. Throws AuthMissing before any request when the key
/// variable is unset, and BackendExhausted after max_retries + 1 attempts.
Exchange complete(const BackendConfig &cfg, std::string_view prompt, HttpTransport *transport = nullptr);

// Role-addressed access with a per-backend in-flight limit.
class Gateway {
  public:
    explicit Gateway(std::map<Role, BackendConfig> backends, std::shared_ptr<HttpTransport> transport = nullptr);

    /// A non-zero nonce varies mock replies between calls with the same
    /// prompt (mocks have no sampling temperature). Remote backends ignore it.
    Exchange complete(Role role, std::string_view prompt, std::uint64_t nonce = 0);

    bool has(Role role) const { return backends_.count(role) != 0; }
    const BackendConfig &config(Role role) const;

  private:
    struct Slots {
        std::mutex mu;
        std::condition_variable cv;
        unsigned free = 0;
    };

    std::map<Role, BackendConfig> backends_;
    std::map<Role, std::unique_ptr<Slots>> slots_;
    std::shared_ptr<HttpTransport> transport_;
};

} // namespace splatopt
