#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "gathermos/meta_eval.hpp"

#include "httplib.h"
#include "json.hpp"

namespace gathermos {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

HttpBackend::HttpBackend(const BackendConfig& cfg) : cfg_(cfg) {
    if (cfg_.endpoint_url.empty()) cfg_.endpoint_url = env_or("GATHERMOS_ENDPOINT", "");
    if (cfg_.model_name.empty()) cfg_.model_name = env_or("GATHERMOS_MODEL", "");
    if (cfg_.endpoint_url.empty())
        throw std::invalid_argument(
            "http backend needs an endpoint (flag or GATHERMOS_ENDPOINT)");
    api_key_ = env_or(cfg_.api_key_env.c_str(), "");

    // Split scheme://authority from the request path.
    const auto scheme_end = cfg_.endpoint_url.find("://");
    const auto path_start = cfg_.endpoint_url.find(
        '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = cfg_.endpoint_url;
        path_ = "/";
    } else {
        host_ = cfg_.endpoint_url.substr(0, path_start);
        path_ = cfg_.endpoint_url.substr(path_start);
    }
}

std::string HttpBackend::complete(const std::string& prompt) {
    const nlohmann::json body = {
        {"model", cfg_.model_name},
        {"messages", {{{"role", "user"}, {"content", prompt}}}},
    };
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const auto timeout_sec = static_cast<time_t>(cfg_.timeout_s);
    const auto timeout_usec = static_cast<time_t>(
        (cfg_.timeout_s - static_cast<double>(timeout_sec)) * 1e6);

    for (int attempt = 0;; ++attempt) {
        // A fresh client per request: no keep-alive, no cookies, nothing
        // carried over from a previous minibatch.
        httplib::Client cli(host_);
        cli.set_connection_timeout(timeout_sec, timeout_usec);
        cli.set_read_timeout(timeout_sec, timeout_usec);
        cli.set_write_timeout(timeout_sec, timeout_usec);

        const httplib::Result res = cli.Post(path_, headers, payload, "application/json");
        if (!res) {
            switch (res.error()) {
                case httplib::Error::ConnectionTimeout:
                case httplib::Error::Read:
                case httplib::Error::Write:
                    throw Timeout("request to " + host_ + " timed out");
                default:
                    throw BackendUnreachable("cannot reach " + host_ + ": " +
                                             httplib::to_string(res.error()));
            }
        }

        if (res->status == 401 || res->status == 403)
            throw AuthError("endpoint rejected credentials (status " +
                            std::to_string(res->status) + ")");
        if (res->status == 429) {
            if (attempt >= cfg_.max_retries)
                throw RateLimited("still rate-limited after " +
                                  std::to_string(attempt) + " backoffs");
            const double delay_s = cfg_.backoff_base_s * std::pow(2.0, attempt);
            backoffs_.fetch_add(1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
            continue;
        }
        if (res->status >= 500)
            throw BackendUnreachable("server error status " + std::to_string(res->status));
        if (res->status != 200)
            throw MalformedServerReply("unexpected status " + std::to_string(res->status));

        const auto reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") ||
            !reply["choices"].is_array() || reply["choices"].empty())
            throw MalformedServerReply("response body is not a chat completion");
        const auto& first = reply["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string())
            throw MalformedServerReply("completion lacks message content");
        return first["message"]["content"].get<std::string>();
    }
}

}  // namespace gathermos
