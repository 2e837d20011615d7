#pragma once

// JSON-over-HTTP POST with exponential backoff, shared by the remote
// embedding provider and the chat-completion backend.

#include <chrono>
#include <string>
#include <thread>
#include <utility>
#include <vector>

// Eigen before httplib: resolv.h defines a `_res` macro that breaks Eigen headers.
#include <Eigen/Core>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fdrag/error.hpp"

namespace fdrag::http {

struct RetryPolicy {
    int max_attempts = 5;
    double base_delay_s = 0.5;
    double factor = 2.0;
    double timeout_s = 60.0;
};

struct Url {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "/v1/chat/completions"
};

inline Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InputError("URL without scheme: " + url);
    const auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) return {url, "/"};
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

struct JsonResponse {
    nlohmann::json body;
    int attempts = 0;
};

inline bool retryable_status(int status) { return status == 429 || status >= 500; }

/// POSTs `payload` and parses the JSON reply. Transport failures, 429 and 5xx
/// are retried with delays base, base*factor, ...; other statuses fail at once.
inline JsonResponse post_json(const std::string& url, const nlohmann::json& payload, const httplib::Headers& headers,
                              const RetryPolicy& policy) {
    const Url u = split_url(url);
    const std::string body = payload.dump();
    std::string last_error;
    double delay = policy.base_delay_s;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        httplib::Client cli(u.scheme_host_port);
        const auto secs = static_cast<time_t>(policy.timeout_s);
        const auto usecs = static_cast<time_t>((policy.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        auto res = cli.Post(u.path, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            try {
                return {nlohmann::json::parse(res->body), attempt};
            } catch (const nlohmann::json::parse_error& e) {
                throw TransportError(std::string("malformed response body: ") + e.what(), attempt);
            }
        }
        if (res && !retryable_status(res->status))
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + url, attempt);
        last_error = res ? "HTTP " + std::to_string(res->status) : "transport error: " + httplib::to_string(res.error());
        if (attempt < policy.max_attempts) {
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= policy.factor;
        }
    }
    throw TransportError(last_error + " from " + url, policy.max_attempts);
}

} // namespace fdrag::http
