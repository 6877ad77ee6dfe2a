#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmdistill/core/config.hpp"
#include "rmdistill/core/errors.hpp"
#include "rmdistill/llm/chat.hpp"

namespace rmd::llm {

class TransportError : public Error {
public:
    using Error::Error;
};

/// Non-retryable HTTP status; carries the response body.
class ApiError : public Error {
public:
    ApiError(int status, std::string body)
        : Error("HTTP " + std::to_string(status) + ": " + body), status_(status), body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

class EmptyCompletion : public Error {
public:
    EmptyCompletion() : Error("completion has no assistant content") {}
};

/// The endpoint cannot supply next-token distributions over the student
/// vocabulary; callers run with beta = 0.
class UnsupportedCapability : public Error {
public:
    using Error::Error;
};

class UnrecognizedPromptKind : public Error {
public:
    using Error::Error;
};

/// Teacher/candidate access used by every synthesis stage.
class ChatClient {
public:
    virtual ~ChatClient() = default;

    /// First choice's assistant content, verbatim.
    virtual std::string complete_chat(const EndpointConfig& endpoint, std::span<const ChatMessage> messages) = 0;

    /// One next-token distribution per byte of `continuation`, conditioned on
    /// `prefix` and the preceding continuation bytes.
    virtual std::vector<TokenDistribution> teacher_token_distributions(const EndpointConfig& endpoint,
                                                                       std::string_view prefix,
                                                                       std::string_view continuation) = 0;
};

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection-level failure (refused, reset, timeout); always retryable.
class TransportFailure : public Error {
public:
    using Error::Error;
};

class Transport {
public:
    virtual ~Transport() = default;
    /// POST `body` to base_url + `path`. Throws TransportFailure when no HTTP
    /// response was received.
    virtual HttpResponse post(const ParsedUrl& url, const std::string& path, const std::string& body,
                              const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// Counting limiter on in-flight requests.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(std::int64_t limit) : available_(limit) {
        if (limit <= 0) throw ValidationError("concurrency", "must be positive");
    }

    class Permit {
    public:
        explicit Permit(ConcurrencyLimiter& l) : limiter_(&l) { limiter_->acquire(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() { limiter_->release(); }

    private:
        ConcurrencyLimiter* limiter_;
    };

    Permit permit() { return Permit(*this); }

private:
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++available_;
        }
        cv_.notify_one();
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::int64_t available_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

inline nlohmann::json chat_request_body(const EndpointConfig& endpoint, std::span<const ChatMessage> messages) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    const DecodingParams& d = endpoint.decoding;
    nlohmann::json body{{"model", endpoint.model},
                        {"messages", std::move(msgs)},
                        {"temperature", d.temperature},
                        {"top_p", d.top_p},
                        {"max_tokens", d.max_tokens},
                        {"stream", false}};
    if (d.top_k) body["top_k"] = *d.top_k;
    if (d.min_p) body["min_p"] = *d.min_p;
    return body;
}

/// OpenAI-compatible chat completions client with bounded concurrency and
/// exponential-backoff retries. Safe to share across threads.
class HttpChatClient : public ChatClient {
public:
    HttpChatClient(std::shared_ptr<Transport> transport, RetryPolicy retry, std::int64_t concurrency,
                   Sleeper sleeper = real_sleep, bool verbose = false)
        : transport_(std::move(transport)), retry_(retry), limiter_(concurrency), sleeper_(std::move(sleeper)),
          verbose_(verbose) {
        if (retry_.max_attempts <= 0) throw ValidationError("retry.max_attempts", "must be positive");
    }

    std::string complete_chat(const EndpointConfig& endpoint, std::span<const ChatMessage> messages) override {
        if (messages.empty()) throw ValidationError("messages", "must be non-empty");
        for (const auto& m : messages) validate(m);
        const ParsedUrl url = parse_base_url(endpoint.base_url);
        std::vector<std::pair<std::string, std::string>> headers{{"Content-Type", "application/json"}};
        if (!endpoint.api_key_env.empty()) {
            const char* key = std::getenv(endpoint.api_key_env.c_str());
            if (!key) throw ValidationError("api_key_env", "environment variable " + endpoint.api_key_env + " is not set");
            headers.emplace_back("Authorization", std::string("Bearer ") + key);
        }
        const std::string body = chat_request_body(endpoint, messages).dump();
        if (verbose_) spdlog::debug("POST {}/v1/chat/completions (Authorization redacted) {}", endpoint.base_url, body);

        std::string last_failure;
        for (std::int64_t attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
            if (attempt > 1) {
                const double ms = retry_.backoff_base_ms * static_cast<double>(1LL << std::min<std::int64_t>(attempt - 2, 30));
                sleeper_(std::chrono::milliseconds(static_cast<std::int64_t>(ms)));
            }
            HttpResponse resp;
            try {
                auto permit = limiter_.permit();
                resp = transport_->post(url, url.path_prefix + "/v1/chat/completions", body, headers);
            } catch (const TransportFailure& e) {
                last_failure = e.what();
                spdlog::warn("{} attempt {}/{} failed: {}", endpoint.model, attempt, retry_.max_attempts, last_failure);
                continue;
            }
            if (verbose_) spdlog::debug("HTTP {} {}", resp.status, resp.body);
            if (resp.status >= 200 && resp.status < 300) return extract_content(resp.body);
            if (!retryable_status(resp.status)) throw ApiError(resp.status, resp.body);
            last_failure = "HTTP " + std::to_string(resp.status) + ": " + resp.body;
            spdlog::warn("{} attempt {}/{} failed: {}", endpoint.model, attempt, retry_.max_attempts, last_failure);
        }
        throw TransportError("giving up after " + std::to_string(retry_.max_attempts) + " attempts: " + last_failure);
    }

    /// Chat endpoints expose at most a few top log-probabilities over their own
    /// tokenizer, never a full distribution over the student's byte vocabulary.
    std::vector<TokenDistribution> teacher_token_distributions(const EndpointConfig& endpoint, std::string_view,
                                                               std::string_view) override {
        throw UnsupportedCapability("endpoint " + endpoint.model + " does not share the student vocabulary");
    }

    static std::string extract_content(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ApiError(200, "unparseable completion body: " + std::string(e.what()));
        }
        const auto choices = j.find("choices");
        if (choices == j.end() || !choices->is_array() || choices->empty()) throw EmptyCompletion();
        const auto& msg = (*choices)[0].value("message", nlohmann::json::object());
        const auto content = msg.find("content");
        if (content == msg.end() || !content->is_string() || content->get_ref<const std::string&>().empty())
            throw EmptyCompletion();
        return content->get<std::string>();
    }

private:
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
    ConcurrencyLimiter limiter_;
    Sleeper sleeper_;
    bool verbose_;
};

} // namespace rmd::llm
