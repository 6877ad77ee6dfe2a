#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/dataset/levenshtein.hpp"

namespace rmd {

inline constexpr double kMinScore = 1.0;
inline constexpr double kMaxScore = 10.0;

inline bool score_in_range(double s) { return std::isfinite(s) && s >= kMinScore && s <= kMaxScore; }

struct Instruction {
    std::string id;
    std::string text;

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

inline void validate(const Instruction& x) {
    if (x.id.empty()) throw ValidationError("instruction.id", "must be non-empty");
    if (x.text.empty()) throw ValidationError("instruction.text", "must be non-empty (id " + x.id + ")");
}

struct CandidateResponse {
    std::string model_id;
    std::string text;

    friend bool operator==(const CandidateResponse&, const CandidateResponse&) = default;
};

struct ResponsePool {
    Instruction instruction;
    std::vector<CandidateResponse> responses;

    friend bool operator==(const ResponsePool&, const ResponsePool&) = default;
};

/// Teacher-annotated (x, y_w, y_l) triplet. Construction enforces a strict
/// score order and distinct texts; ties never reach this type.
class AnnotatedPair {
public:
    AnnotatedPair(Instruction instruction, std::string chosen, std::string rejected,
                  double score_chosen, double score_rejected)
        : instruction_(std::move(instruction)), chosen_(std::move(chosen)),
          rejected_(std::move(rejected)), score_chosen_(score_chosen),
          score_rejected_(score_rejected) {
        if (!score_in_range(score_chosen_))
            throw ValidationError("score_chosen", "must lie in [1,10]");
        if (!score_in_range(score_rejected_))
            throw ValidationError("score_rejected", "must lie in [1,10]");
        if (!(score_chosen_ > score_rejected_))
            throw ValidationError("score_chosen", "must exceed score_rejected");
        if (chosen_ == rejected_)
            throw ValidationError("chosen", "must differ from rejected");
    }

    const Instruction& instruction() const noexcept { return instruction_; }
    const std::string& chosen() const noexcept { return chosen_; }
    const std::string& rejected() const noexcept { return rejected_; }
    double score_chosen() const noexcept { return score_chosen_; }
    double score_rejected() const noexcept { return score_rejected_; }

    friend bool operator==(const AnnotatedPair&, const AnnotatedPair&) = default;

private:
    Instruction instruction_;
    std::string chosen_;
    std::string rejected_;
    double score_chosen_;
    double score_rejected_;
};

/// Rejected response plus the teacher's minimal edit of it. The edit distance
/// is always computed here from the two texts.
class RefinedPair {
public:
    RefinedPair(Instruction instruction, std::string rejected, std::string refined,
                std::string reasoning, double score_rejected, double score_refined)
        : instruction_(std::move(instruction)), rejected_(std::move(rejected)),
          refined_(std::move(refined)), reasoning_(std::move(reasoning)),
          score_rejected_(score_rejected), score_refined_(score_refined),
          edit_distance_(levenshtein(refined_, rejected_)) {
        if (!score_in_range(score_rejected_))
            throw ValidationError("score_rejected", "must lie in [1,10]");
        if (!score_in_range(score_refined_))
            throw ValidationError("score_refined", "must lie in [1,10]");
    }

    const Instruction& instruction() const noexcept { return instruction_; }
    const std::string& rejected() const noexcept { return rejected_; }
    const std::string& refined() const noexcept { return refined_; }
    const std::string& reasoning() const noexcept { return reasoning_; }
    double score_rejected() const noexcept { return score_rejected_; }
    double score_refined() const noexcept { return score_refined_; }
    double score_margin() const noexcept { return score_refined_ - score_rejected_; }
    std::size_t edit_distance() const noexcept { return edit_distance_; }

    friend bool operator==(const RefinedPair&, const RefinedPair&) = default;

private:
    Instruction instruction_;
    std::string rejected_;
    std::string refined_;
    std::string reasoning_;
    double score_rejected_;
    double score_refined_;
    std::size_t edit_distance_;
};

enum class Source { sampled, refined };

inline std::string_view to_string(Source s) { return s == Source::sampled ? "sampled" : "refined"; }

inline Source source_from_string(std::string_view s) {
    if (s == "sampled") return Source::sampled;
    if (s == "refined") return Source::refined;
    throw ValidationError("source", "expected \"sampled\" or \"refined\", got \"" + std::string(s) + "\"");
}

/// One training record of the merged dataset.
class DatasetEntry {
public:
    DatasetEntry(std::string instruction, std::string chosen, std::string rejected,
                 double score_chosen, double score_rejected,
                 std::optional<std::string> teacher_response, Source source)
        : instruction_(std::move(instruction)), chosen_(std::move(chosen)),
          rejected_(std::move(rejected)), score_chosen_(score_chosen),
          score_rejected_(score_rejected), teacher_response_(std::move(teacher_response)),
          source_(source) {
        if (!std::isfinite(score_chosen_) || !std::isfinite(score_rejected_))
            throw ValidationError("score_chosen", "scores must be finite");
        if (!(score_chosen_ > score_rejected_))
            throw ValidationError("score_chosen", "must exceed score_rejected");
    }

    const std::string& instruction() const noexcept { return instruction_; }
    const std::string& chosen() const noexcept { return chosen_; }
    const std::string& rejected() const noexcept { return rejected_; }
    double score_chosen() const noexcept { return score_chosen_; }
    double score_rejected() const noexcept { return score_rejected_; }
    const std::optional<std::string>& teacher_response() const noexcept { return teacher_response_; }
    Source source() const noexcept { return source_; }

    friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;

private:
    std::string instruction_;
    std::string chosen_;
    std::string rejected_;
    double score_chosen_;
    double score_rejected_;
    std::optional<std::string> teacher_response_;
    Source source_;
};

} // namespace rmd
