#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmdistill/core/errors.hpp"

namespace rmd::llm {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

inline Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw ValidationError("role", "unknown role \"" + std::string(s) + "\"");
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline ChatMessage user_message(std::string content) { return {Role::user, std::move(content)}; }
inline ChatMessage assistant_message(std::string content) { return {Role::assistant, std::move(content)}; }

inline void validate(const ChatMessage& m) {
    if (m.role != Role::system && m.content.empty())
        throw ValidationError("message.content", "must be non-empty for " + std::string(to_string(m.role)) + " turns");
}

struct DecodingParams {
    double temperature = 0.0;
    double top_p = 1.0;
    std::optional<std::int64_t> top_k;
    std::optional<double> min_p;
    std::int64_t max_tokens = 2048;

    friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

/// Greedy-style decoding used for candidate models.
inline DecodingParams candidate_decoding() { return {0.0, 1.0, std::nullopt, std::nullopt, 2048}; }

/// Recommended non-thinking sampling for the Qwen3 teacher.
inline DecodingParams qwen_non_thinking_decoding() { return {0.7, 0.8, 20, 0.0, 2048}; }

inline void validate(const DecodingParams& p, const std::string& where) {
    if (!std::isfinite(p.temperature) || p.temperature < 0)
        throw ValidationError(where + ".temperature", "must be >= 0");
    if (!std::isfinite(p.top_p) || p.top_p <= 0 || p.top_p > 1)
        throw ValidationError(where + ".top_p", "must lie in (0,1]");
    if (p.top_k && *p.top_k <= 0) throw ValidationError(where + ".top_k", "must be positive");
    if (p.min_p && (!std::isfinite(*p.min_p) || *p.min_p < 0))
        throw ValidationError(where + ".min_p", "must be >= 0");
    if (p.max_tokens <= 0) throw ValidationError(where + ".max_tokens", "must be positive");
}

struct EndpointConfig {
    std::string base_url;
    std::string model;
    /// Name of the environment variable holding the bearer token; empty for none.
    std::string api_key_env;
    DecodingParams decoding;

    friend bool operator==(const EndpointConfig&, const EndpointConfig&) = default;
};

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path_prefix;
};

/// Splits "scheme://host[:port][/prefix]". Only http and https are accepted.
inline ParsedUrl parse_base_url(std::string_view url) {
    ParsedUrl out;
    const auto sep = url.find("://");
    if (sep == std::string_view::npos) throw ValidationError("base_url", "missing scheme in \"" + std::string(url) + "\"");
    out.scheme = std::string(url.substr(0, sep));
    if (out.scheme != "http" && out.scheme != "https")
        throw ValidationError("base_url", "scheme must be http or https");
    const std::string rest(url.substr(sep + 3));
    const auto slash = rest.find('/');
    std::string_view authority = std::string_view(rest).substr(0, slash);
    if (slash != std::string::npos) out.path_prefix = rest.substr(slash);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    const auto colon = authority.rfind(':');
    if (colon != std::string_view::npos) {
        const std::string port(authority.substr(colon + 1));
        authority = authority.substr(0, colon);
        if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5)
            throw ValidationError("base_url", "bad port \"" + port + "\"");
        out.port = std::stoi(port);
        if (out.port <= 0 || out.port > 65535) throw ValidationError("base_url", "port out of range");
    } else {
        out.port = out.scheme == "https" ? 443 : 80;
    }
    if (authority.empty()) throw ValidationError("base_url", "missing host");
    out.host = std::string(authority);
    return out;
}

inline void validate(const EndpointConfig& e, const std::string& where) {
    try {
        parse_base_url(e.base_url);
    } catch (const ValidationError& err) {
        throw ValidationError(where + ".base_url", err.what());
    }
    if (e.model.empty()) throw ValidationError(where + ".model", "must be non-empty");
    validate(e.decoding, where + ".decoding");
}

/// Next-token distribution, indexed by token id.
struct TokenDistribution {
    std::vector<double> probs;
};

inline bool is_normalized(const TokenDistribution& d, double tol = 1e-6) {
    double sum = 0;
    for (double p : d.probs) {
        if (!(p >= 0)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

} // namespace rmd::llm
