#pragma once

// Minimal JSON-over-HTTP POST with per-request timeout and exponential
// backoff, shared by the completion backend and the embedding client.

#include <chrono>
#include <regex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fsprp/error.hpp"

namespace fsprp::http {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // always starts with '/'
};

inline Endpoint parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw ConfigError("invalid endpoint URL: " + url);
    return Endpoint{m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

struct RetryPolicy {
    int max_retries = 3;  // retries after the first attempt
    std::chrono::milliseconds timeout{30000};
    std::chrono::milliseconds initial_backoff{200};
    double backoff_multiplier = 2.0;
};

struct Reply {
    nlohmann::json body;
    int attempts = 0;
    std::chrono::nanoseconds latency{0};
};

/// POSTs `payload`. Transport failures and non-2xx statuses are retried up to
/// policy.max_retries times; a 2xx body that is not JSON fails immediately.
inline Reply post_json(const Endpoint& ep, const nlohmann::json& payload, const std::string& bearer_token,
                       const RetryPolicy& policy) {
    const auto started = std::chrono::steady_clock::now();
    const std::string body = payload.dump();
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    auto backoff = policy.initial_backoff;
    int last_status = -1;
    std::string last_error;
    const int attempts_allowed = policy.max_retries + 1;
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        httplib::Client client(ep.origin);
        client.set_connection_timeout(policy.timeout);
        client.set_read_timeout(policy.timeout);
        client.set_write_timeout(policy.timeout);
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            Reply reply;
            try {
                reply.body = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                throw BackendError(std::string("endpoint returned invalid JSON: ") + e.what(), attempt, res->status);
            }
            reply.attempts = attempt;
            reply.latency = std::chrono::steady_clock::now() - started;
            return reply;
        }
        if (res) {
            last_status = res->status;
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            last_status = -1;
            last_error = httplib::to_string(res.error());
        }
        if (attempt < attempts_allowed) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * policy.backoff_multiplier));
        }
    }
    throw BackendError(ep.origin + ep.path + ": " + last_error + " after " + std::to_string(attempts_allowed) +
                           " attempt(s)",
                       attempts_allowed, last_status);
}

}  // namespace fsprp::http
