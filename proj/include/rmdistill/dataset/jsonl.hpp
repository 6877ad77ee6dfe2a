#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/types.hpp"

namespace rmd {

using nlohmann::json;

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    std::string buf;
    for (const auto& r : records) buf += r.dump() + "\n";
    write_file_atomic(path, buf);
}

/// Calls `fn(record, line_number)` for every non-blank line.
inline void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError(n, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw SchemaError(n, "expected a JSON object");
        fn(j, n);
    }
}

/// Append-only checkpoint log; each line is flushed as soon as it is written.
class JsonlAppender {
public:
    explicit JsonlAppender(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::app);
        if (!out_) throw IoError("cannot append to " + path.string());
    }
    void append(const json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Field access with line-numbered schema errors
// ---------------------------------------------------------------------------

namespace jsonl_detail {

inline const json& field(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaError(line, std::string("missing \"") + key + "\"");
    return *it;
}

inline std::string str(const json& j, const char* key, std::size_t line) {
    const json& v = field(j, key, line);
    if (!v.is_string()) throw SchemaError(line, std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
}

inline double num(const json& j, const char* key, std::size_t line) {
    const json& v = field(j, key, line);
    if (!v.is_number()) throw SchemaError(line, std::string("\"") + key + "\" must be a number");
    return v.get<double>();
}

} // namespace jsonl_detail

// ---------------------------------------------------------------------------
// Record codecs
// ---------------------------------------------------------------------------

inline json to_json(const Instruction& x) { return {{"id", x.id}, {"text", x.text}}; }

inline Instruction instruction_from_json(const json& j, std::size_t line) {
    using namespace jsonl_detail;
    Instruction x{str(j, "id", line), str(j, "text", line)};
    try {
        validate(x);
    } catch (const ValidationError& e) {
        throw SchemaError(line, e.what());
    }
    return x;
}

inline json to_json(const ResponsePool& p) {
    json rs = json::array();
    for (const auto& r : p.responses) rs.push_back({{"model_id", r.model_id}, {"text", r.text}});
    return {{"instruction", to_json(p.instruction)}, {"responses", rs}};
}

inline ResponsePool pool_from_json(const json& j, std::size_t line) {
    using namespace jsonl_detail;
    ResponsePool p;
    const json& inst = field(j, "instruction", line);
    if (!inst.is_object()) throw SchemaError(line, "\"instruction\" must be an object");
    p.instruction = instruction_from_json(inst, line);
    const json& rs = field(j, "responses", line);
    if (!rs.is_array()) throw SchemaError(line, "\"responses\" must be an array");
    for (const auto& r : rs) {
        if (!r.is_object()) throw SchemaError(line, "response must be an object");
        CandidateResponse c{str(r, "model_id", line), str(r, "text", line)};
        if (c.model_id.empty()) throw SchemaError(line, "response model_id must be non-empty");
        p.responses.push_back(std::move(c));
    }
    return p;
}

inline json to_json(const AnnotatedPair& a) {
    return {{"instruction", to_json(a.instruction())}, {"chosen", a.chosen()},           {"rejected", a.rejected()},
            {"score_chosen", a.score_chosen()},      {"score_rejected", a.score_rejected()}};
}

inline AnnotatedPair annotated_from_json(const json& j, std::size_t line) {
    using namespace jsonl_detail;
    const json& inst = field(j, "instruction", line);
    if (!inst.is_object()) throw SchemaError(line, "\"instruction\" must be an object");
    try {
        return AnnotatedPair(instruction_from_json(inst, line), str(j, "chosen", line), str(j, "rejected", line),
                             num(j, "score_chosen", line), num(j, "score_rejected", line));
    } catch (const ValidationError& e) {
        throw SchemaError(line, e.what());
    }
}

/// The stored edit distance is informational; readers recompute it.
inline json to_json(const RefinedPair& r) {
    return {{"instruction", to_json(r.instruction())},
            {"rejected", r.rejected()},
            {"refined", r.refined()},
            {"reasoning", r.reasoning()},
            {"score_rejected", r.score_rejected()},
            {"score_refined", r.score_refined()},
            {"edit_distance", r.edit_distance()}};
}

inline RefinedPair refined_from_json(const json& j, std::size_t line) {
    using namespace jsonl_detail;
    const json& inst = field(j, "instruction", line);
    if (!inst.is_object()) throw SchemaError(line, "\"instruction\" must be an object");
    try {
        return RefinedPair(instruction_from_json(inst, line), str(j, "rejected", line), str(j, "refined", line),
                           str(j, "reasoning", line), num(j, "score_rejected", line), num(j, "score_refined", line));
    } catch (const ValidationError& e) {
        throw SchemaError(line, e.what());
    }
}

inline json to_json(const DatasetEntry& e) {
    return {{"instruction", e.instruction()},
            {"chosen", e.chosen()},
            {"rejected", e.rejected()},
            {"score_chosen", e.score_chosen()},
            {"score_rejected", e.score_rejected()},
            {"teacher_response", e.teacher_response() ? json(*e.teacher_response()) : json(nullptr)},
            {"source", std::string(to_string(e.source()))}};
}

inline DatasetEntry entry_from_json(const json& j, std::size_t line) {
    using namespace jsonl_detail;
    std::optional<std::string> teacher;
    const json& t = field(j, "teacher_response", line);
    if (t.is_string()) teacher = t.get<std::string>();
    else if (!t.is_null()) throw SchemaError(line, "\"teacher_response\" must be a string or null");
    try {
        return DatasetEntry(str(j, "instruction", line), str(j, "chosen", line), str(j, "rejected", line),
                            num(j, "score_chosen", line), num(j, "score_rejected", line), std::move(teacher),
                            source_from_string(str(j, "source", line)));
    } catch (const ValidationError& e) {
        throw SchemaError(line, e.what());
    }
}

template <typename T, typename Decode>
std::vector<T> read_records(const std::filesystem::path& path, Decode decode) {
    std::vector<T> out;
    for_each_jsonl(path, [&](const json& j, std::size_t line) { out.push_back(decode(j, line)); });
    return out;
}

template <typename T>
void write_records(const std::filesystem::path& path, const std::vector<T>& items) {
    std::vector<json> recs;
    recs.reserve(items.size());
    for (const auto& it : items) recs.push_back(to_json(it));
    write_jsonl(path, recs);
}

} // namespace rmd
