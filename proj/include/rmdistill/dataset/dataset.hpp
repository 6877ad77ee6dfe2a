#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/dataset/jsonl.hpp"

namespace rmd {

struct FilterReport {
    std::size_t total_in = 0;
    std::size_t kept = 0;
    std::size_t dropped_edit = 0;    ///< edit distance <= tau_e
    std::size_t dropped_margin = 0;  ///< 0 < score margin <= tau_s
    std::size_t dropped_order = 0;   ///< score_refined <= score_rejected

    bool reconciles() const noexcept { return total_in == kept + dropped_edit + dropped_margin + dropped_order; }

    friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

inline nlohmann::json to_json(const FilterReport& r) {
    return {{"total_in", r.total_in},
            {"kept", r.kept},
            {"dropped_edit", r.dropped_edit},
            {"dropped_margin", r.dropped_margin},
            {"dropped_order", r.dropped_order}};
}

/// Keeps pairs with edit_distance > tau_e and (score_refined - score_rejected)
/// > tau_s, in input order. Each dropped pair is counted once, checking edit
/// distance first, then score order, then margin.
inline std::pair<std::vector<RefinedPair>, FilterReport> filter_refined(std::span<const RefinedPair> pairs,
                                                                        std::uint64_t tau_e, double tau_s) {
    if (!(tau_s >= 0)) throw ValidationError("tau_s", "must be >= 0");
    std::vector<RefinedPair> kept;
    FilterReport rep;
    rep.total_in = pairs.size();
    for (const auto& p : pairs) {
        if (!(p.edit_distance() > tau_e)) ++rep.dropped_edit;
        else if (!(p.score_refined() > p.score_rejected())) ++rep.dropped_order;
        else if (!(p.score_margin() > tau_s)) ++rep.dropped_margin;
        else kept.push_back(p);
    }
    rep.kept = kept.size();
    return {std::move(kept), rep};
}

class MissingTeacherResponse : public Error {
public:
    using Error::Error;
};

/// Multiset union of sampled and refined pairs (sampled first). Each entry
/// takes the teacher response cached for its instruction id; when
/// `require_teacher_response` is set a missing one is an error.
inline std::vector<DatasetEntry> merge_datasets(std::span<const AnnotatedPair> sampled, std::span<const RefinedPair> refined,
                                                const std::map<std::string, std::string>& teacher_responses,
                                                bool require_teacher_response) {
    auto lookup = [&](const Instruction& x) -> std::optional<std::string> {
        const auto it = teacher_responses.find(x.id);
        if (it != teacher_responses.end()) return it->second;
        if (require_teacher_response)
            throw MissingTeacherResponse("no teacher response for instruction " + x.id);
        return std::nullopt;
    };
    std::vector<DatasetEntry> out;
    out.reserve(sampled.size() + refined.size());
    for (const auto& a : sampled)
        out.emplace_back(a.instruction().text, a.chosen(), a.rejected(), a.score_chosen(), a.score_rejected(),
                         lookup(a.instruction()), Source::sampled);
    for (const auto& r : refined)
        out.emplace_back(r.instruction().text, r.refined(), r.rejected(), r.score_refined(), r.score_rejected(),
                         lookup(r.instruction()), Source::refined);
    return out;
}

inline void write_dataset(const std::vector<DatasetEntry>& entries, const std::filesystem::path& path) {
    write_records(path, entries);
}

inline std::vector<DatasetEntry> read_dataset(const std::filesystem::path& path) {
    return read_records<DatasetEntry>(path, entry_from_json);
}

} // namespace rmd
