#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/hash.hpp"
#include "rmdistill/llm/chat.hpp"
#include "rmdistill/trainer/train_config.hpp"

namespace rmd {

struct RetryPolicy {
    std::int64_t max_attempts = 4;
    double backoff_base_ms = 500.0;

    friend bool operator==(const RetryPolicy&, const RetryPolicy&) = default;
};

struct SynthesisOptions {
    std::int64_t pairs_per_instruction = 1;
    /// Require score lines to hold nothing but the numerals.
    bool strict_parse = false;
    /// Re-ask the teacher once when a refinement reply lacks its tags.
    bool retry_parse = false;

    friend bool operator==(const SynthesisOptions&, const SynthesisOptions&) = default;
};

struct PipelineConfig {
    llm::EndpointConfig teacher{"http://localhost:8000", "teacher", "", llm::qwen_non_thinking_decoding()};
    std::vector<llm::EndpointConfig> candidates;
    std::uint64_t tau_e = 0;
    double tau_s = 3.0;
    double alpha = 0.2;
    double beta = 0.2;
    std::uint64_t seed = 42;
    std::int64_t concurrency = 4;
    RetryPolicy retry;
    train::TrainConfig train;
    SynthesisOptions synthesis;

    double margin_weight() const noexcept { return 1.0 - alpha - beta; }

    /// Training settings with the run seed applied; `train.seed` itself is ignored.
    train::TrainConfig train_config() const {
        train::TrainConfig t = train;
        t.seed = seed;
        return t;
    }

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

inline void validate(const PipelineConfig& c) {
    llm::validate(c.teacher, "teacher");
    for (std::size_t i = 0; i < c.candidates.size(); ++i)
        llm::validate(c.candidates[i], "candidates[" + std::to_string(i) + "]");
    if (!std::isfinite(c.tau_s) || c.tau_s < 0) throw ValidationError("filter.tau_s", "must be >= 0");
    if (!std::isfinite(c.alpha) || c.alpha < 0) throw ValidationError("loss.alpha", "must be >= 0");
    if (!std::isfinite(c.beta) || c.beta < 0) throw ValidationError("loss.beta", "must be >= 0");
    if (!(c.alpha + c.beta < 1.0))
        throw ValidationError("loss.alpha+beta", "must be < 1 so the margin weight stays positive");
    if (c.concurrency <= 0) throw ValidationError("concurrency", "must be positive");
    if (c.retry.max_attempts <= 0) throw ValidationError("retry.max_attempts", "must be positive");
    if (!std::isfinite(c.retry.backoff_base_ms) || c.retry.backoff_base_ms < 0)
        throw ValidationError("retry.backoff_base_ms", "must be >= 0");
    if (c.synthesis.pairs_per_instruction <= 0)
        throw ValidationError("synthesis.pairs_per_instruction", "must be positive");
    train::validate(c.train);
}

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    if (!obj.is_object()) throw ParseError((where.empty() ? std::string("config") : where) + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ValidationError(where.empty() ? key : where + "." + key, "unknown key");
    }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError((where.empty() ? std::string() : where + ".") + key + ": " + e.what());
    }
}

inline json to_json(const llm::DecodingParams& p) {
    json j{{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
    if (p.top_k) j["top_k"] = *p.top_k;
    if (p.min_p) j["min_p"] = *p.min_p;
    return j;
}

inline llm::DecodingParams decoding_from_json(const json& j, const std::string& where, llm::DecodingParams p) {
    reject_unknown(j, where, {"temperature", "top_p", "top_k", "min_p", "max_tokens"});
    read(j, "temperature", where, p.temperature);
    read(j, "top_p", where, p.top_p);
    read(j, "max_tokens", where, p.max_tokens);
    if (j.contains("top_k")) {
        std::int64_t k = 0;
        read(j, "top_k", where, k);
        p.top_k = k;
    }
    if (j.contains("min_p")) {
        double m = 0;
        read(j, "min_p", where, m);
        p.min_p = m;
    }
    return p;
}

inline json to_json(const llm::EndpointConfig& e) {
    return {{"base_url", e.base_url}, {"model", e.model}, {"api_key_env", e.api_key_env}, {"decoding", to_json(e.decoding)}};
}

inline llm::EndpointConfig endpoint_from_json(const json& j, const std::string& where, llm::EndpointConfig e) {
    reject_unknown(j, where, {"base_url", "model", "api_key_env", "decoding"});
    read(j, "base_url", where, e.base_url);
    read(j, "model", where, e.model);
    read(j, "api_key_env", where, e.api_key_env);
    if (j.contains("decoding")) e.decoding = decoding_from_json(j.at("decoding"), where + ".decoding", e.decoding);
    return e;
}

} // namespace config_detail

inline nlohmann::json to_json(const PipelineConfig& c) {
    using config_detail::to_json;
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& e : c.candidates) cands.push_back(to_json(e));
    return {
        {"teacher", to_json(c.teacher)},
        {"candidates", cands},
        {"filter", {{"tau_e", c.tau_e}, {"tau_s", c.tau_s}}},
        {"loss", {{"alpha", c.alpha}, {"beta", c.beta}}},
        {"seed", c.seed},
        {"concurrency", c.concurrency},
        {"retry", {{"max_attempts", c.retry.max_attempts}, {"backoff_base_ms", c.retry.backoff_base_ms}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"batch_size", c.train.batch_size},
          {"epochs", c.train.epochs},
          {"max_seq_len", c.train.max_seq_len},
          {"dim", c.train.dim},
          {"objective", std::string(train::to_string(c.train.objective))},
          {"margin_scale", c.train.margin_scale}}},
        {"synthesis",
         {{"pairs_per_instruction", c.synthesis.pairs_per_instruction},
          {"strict_parse", c.synthesis.strict_parse},
          {"retry_parse", c.synthesis.retry_parse}}},
    };
}

/// Builds a validated config from a parsed document. Absent keys keep their
/// defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
    using namespace config_detail;
    PipelineConfig c;
    reject_unknown(j, "", {"teacher", "candidates", "filter", "loss", "seed", "concurrency", "retry", "train", "synthesis"});
    if (j.contains("teacher")) c.teacher = endpoint_from_json(j.at("teacher"), "teacher", c.teacher);
    if (j.contains("candidates")) {
        const auto& arr = j.at("candidates");
        if (!arr.is_array()) throw ParseError("candidates: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            llm::EndpointConfig base{"", "", "", llm::candidate_decoding()};
            c.candidates.push_back(endpoint_from_json(arr[i], "candidates[" + std::to_string(i) + "]", base));
        }
    }
    if (j.contains("filter")) {
        const auto& f = j.at("filter");
        reject_unknown(f, "filter", {"tau_e", "tau_s"});
        if (f.contains("tau_e") && !f.at("tau_e").is_number_unsigned())
            throw ValidationError("filter.tau_e", "must be a non-negative integer");
        read(f, "tau_e", "filter", c.tau_e);
        read(f, "tau_s", "filter", c.tau_s);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        reject_unknown(l, "loss", {"alpha", "beta"});
        read(l, "alpha", "loss", c.alpha);
        read(l, "beta", "loss", c.beta);
    }
    read(j, "seed", "", c.seed);
    read(j, "concurrency", "", c.concurrency);
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        reject_unknown(r, "retry", {"max_attempts", "backoff_base_ms"});
        read(r, "max_attempts", "retry", c.retry.max_attempts);
        read(r, "backoff_base_ms", "retry", c.retry.backoff_base_ms);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, "train", {"learning_rate", "batch_size", "epochs", "max_seq_len", "dim", "objective", "margin_scale"});
        read(t, "learning_rate", "train", c.train.learning_rate);
        read(t, "batch_size", "train", c.train.batch_size);
        read(t, "epochs", "train", c.train.epochs);
        read(t, "max_seq_len", "train", c.train.max_seq_len);
        read(t, "dim", "train", c.train.dim);
        read(t, "margin_scale", "train", c.train.margin_scale);
        if (t.contains("objective")) {
            std::string o;
            read(t, "objective", "train", o);
            c.train.objective = train::objective_from_string(o);
        }
    }
    if (j.contains("synthesis")) {
        const auto& s = j.at("synthesis");
        reject_unknown(s, "synthesis", {"pairs_per_instruction", "strict_parse", "retry_parse"});
        read(s, "pairs_per_instruction", "synthesis", c.synthesis.pairs_per_instruction);
        read(s, "strict_parse", "synthesis", c.synthesis.strict_parse);
        read(s, "retry_parse", "synthesis", c.synthesis.retry_parse);
    }
    validate(c);
    return c;
}

inline PipelineConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return config_from_json(j);
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

inline void save_config(const PipelineConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(c).dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

/// Digest of every semantically relevant field (the serialized form is
/// canonical: nlohmann objects keep keys sorted).
inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()); }

} // namespace rmd
