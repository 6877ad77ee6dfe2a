#pragma once

#include <array>
#include <cctype>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/llm/chat.hpp"

namespace rmd::synth {

// ---------------------------------------------------------------------------
// Templates. Line structure and wording are reproduced verbatim, including the
// missing space in "above.Please".
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAnnotationHead =
    "You are a helpful and precise assistant for checking the quality of the answer.\n"
    "\n"
    "[Question]\n";
inline constexpr std::string_view kAnnotationAfterQuestion = "\n\n[The Start of Assistant 1's Answer]\n";
inline constexpr std::string_view kAnnotationAfterAnswer1 =
    "\n[The End of Assistant 1's Answer]\n"
    "\n"
    "[The Start of Assistant 2's Answer]\n";
inline constexpr std::string_view kAnnotationTail =
    "\n[The End of Assistant 2's Answer]\n"
    "\n"
    "[System]\n"
    "We would like to request your feedback on the performance of two AI assistants in response to the user "
    "question displayed above.Please rate the helpfulness, relevance, accuracy, level of details of their responses.\n"
    "Each assistant receives an overall score on a scale of 1 to 10, where a higher score indicates better overall "
    "performance.\n"
    "Please output a single line containing only two values indicating the scores for Assistant 1 and 2, "
    "respectively. The two scores are separated by a space. Avoid any potential bias and ensure that the order in "
    "which the responses were presented does not affect your judgment. Do NOT provide any explanation.\n"
    "\n"
    "### Response:";

inline constexpr std::array<std::string_view, 6> kAnnotationMarkers = {
    "[Question]",
    "[The Start of Assistant 1's Answer]",
    "[The End of Assistant 1's Answer]",
    "[The Start of Assistant 2's Answer]",
    "[The End of Assistant 2's Answer]",
    "[System]",
};

inline constexpr std::string_view kStartReasoning = "<Start of Reasoning>";
inline constexpr std::string_view kEndReasoning = "<End of Reasoning>";
inline constexpr std::string_view kStartModified = "<Start of Modified Response>";
inline constexpr std::string_view kEndModified = "<End of Modified Response>";

inline constexpr std::string_view kRefinementHead =
    "<Start of Instruction>\n"
    "Given the question from the user, you need to modify the given non-preferred to get a preferred reply from the "
    "assistant. Begin your answer with why the given non-preferred response is not preferred compared to the "
    "preferred response and how this can be improved. Output your editing by strictly following this format:\n"
    "\n"
    "<Start of Reasoning>\n"
    "<End of Reasoning>\n"
    "\n"
    "<Start of Modified Response>\n"
    "<End of Modified Response>\n"
    "\n"
    "You must maintain the original structure of the non-preferred response, ensure the edit distance between the "
    "modified response and the non-preferred response is as low as possible.\n"
    "<End of Instruction>\n"
    "\n"
    "<Start of Question>\n";
inline constexpr std::string_view kRefinementAfterQuestion =
    "\n<End of Question>\n"
    "\n"
    "<Start of Preferred Response>\n";
inline constexpr std::string_view kRefinementAfterTeacher =
    "\n<End of Preferred Response>\n"
    "\n"
    "<Start of Non-Preferred Response>\n";
inline constexpr std::string_view kRefinementTail = "\n<End of Non-Preferred Response>";

inline constexpr std::array<std::string_view, 12> kRefinementMarkers = {
    "<Start of Instruction>",          "<End of Instruction>",
    kStartReasoning,                   kEndReasoning,
    kStartModified,                    kEndModified,
    "<Start of Question>",             "<End of Question>",
    "<Start of Preferred Response>",   "<End of Preferred Response>",
    "<Start of Non-Preferred Response>", "<End of Non-Preferred Response>",
};

inline constexpr std::string_view kCalibrationBefore = "Now, considering the rejected response was scored ";
inline constexpr std::string_view kCalibrationAfter =
    " out of 10 for quality, helpfulness, and alignment, score the Modified Response in the assistant's reply above "
    "on the same 1-10 scale. Output only the numerical score. Do NOT provide any explanation.";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class MalformedScoreLine : public ParseError {
public:
    using ParseError::ParseError;
};

class MalformedScore : public ParseError {
public:
    using ParseError::ParseError;
};

class ScoreOutOfRange : public ParseError {
public:
    using ParseError::ParseError;
};

class MissingTag : public ParseError {
public:
    explicit MissingTag(std::string tag) : ParseError("missing tag " + tag), tag_(std::move(tag)) {}
    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

class EmptyModifiedResponse : public ParseError {
public:
    EmptyModifiedResponse() : ParseError("modified response is empty") {}
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

template <std::size_t N>
void reject_markers(std::string_view body, const char* field, const std::array<std::string_view, N>& markers) {
    for (auto m : markers)
        if (body.find(m) != std::string_view::npos)
            throw ValidationError(field, "contains the template marker " + std::string(m));
}

} // namespace detail

/// Initial preference annotation prompt for (question, answer 1, answer 2).
inline std::vector<llm::ChatMessage> build_annotation_prompt(const Instruction& x, std::string_view answer1,
                                                             std::string_view answer2) {
    detail::reject_markers(x.text, "question_body", kAnnotationMarkers);
    detail::reject_markers(answer1, "answer1_body", kAnnotationMarkers);
    detail::reject_markers(answer2, "answer2_body", kAnnotationMarkers);
    std::string s;
    s.append(kAnnotationHead).append(x.text);
    s.append(kAnnotationAfterQuestion).append(answer1);
    s.append(kAnnotationAfterAnswer1).append(answer2);
    s.append(kAnnotationTail);
    return {llm::user_message(std::move(s))};
}

struct AnnotationBodies {
    std::string question;
    std::string answer1;
    std::string answer2;
};

namespace detail {

inline std::optional<std::vector<std::string>> split_fixed(std::string_view text,
                                                           std::initializer_list<std::string_view> pieces) {
    std::vector<std::string> bodies;
    auto it = pieces.begin();
    if (!text.starts_with(*it)) return std::nullopt;
    std::size_t pos = it->size();
    for (++it; it != pieces.end(); ++it) {
        const bool last = std::next(it) == pieces.end();
        const std::size_t at = last ? text.rfind(*it) : text.find(*it, pos);
        if (at == std::string_view::npos || at < pos) return std::nullopt;
        bodies.emplace_back(text.substr(pos, at - pos));
        pos = at + it->size();
    }
    if (pos != text.size()) return std::nullopt;
    return bodies;
}

} // namespace detail

/// Inverse of `build_annotation_prompt` for marker-free bodies.
inline std::optional<AnnotationBodies> extract_annotation_bodies(std::string_view prompt) {
    auto b = detail::split_fixed(prompt, {kAnnotationHead, kAnnotationAfterQuestion, kAnnotationAfterAnswer1, kAnnotationTail});
    if (!b) return std::nullopt;
    return AnnotationBodies{(*b)[0], (*b)[1], (*b)[2]};
}

/// Contrastive refinement prompt: question, teacher reference, rejected answer.
inline std::vector<llm::ChatMessage> build_refinement_prompt(const Instruction& x, std::string_view teacher_answer,
                                                             std::string_view rejected) {
    detail::reject_markers(x.text, "question_body", kRefinementMarkers);
    detail::reject_markers(teacher_answer, "teacher_answer_body", kRefinementMarkers);
    detail::reject_markers(rejected, "rejected_answer_body", kRefinementMarkers);
    std::string s;
    s.append(kRefinementHead).append(x.text);
    s.append(kRefinementAfterQuestion).append(teacher_answer);
    s.append(kRefinementAfterTeacher).append(rejected);
    s.append(kRefinementTail);
    return {llm::user_message(std::move(s))};
}

struct RefinementBodies {
    std::string question;
    std::string teacher_answer;
    std::string rejected;
};

inline std::optional<RefinementBodies> extract_refinement_bodies(std::string_view prompt) {
    auto b = detail::split_fixed(prompt, {kRefinementHead, kRefinementAfterQuestion, kRefinementAfterTeacher, kRefinementTail});
    if (!b) return std::nullopt;
    return RefinementBodies{(*b)[0], (*b)[1], (*b)[2]};
}

/// Shortest decimal that reads back as the same double ("5", "5.5").
inline std::string format_score(double s) { return fmt::format("{}", s); }

struct RefinementOutcome {
    std::string reasoning;
    std::string modified;
    /// Refinement prompt followed by the assistant reply.
    std::vector<llm::ChatMessage> dialogue;
};

/// Appends the self-calibrated scoring turn, anchored at the rejected
/// response's score, to the refinement dialogue.
inline std::vector<llm::ChatMessage> build_calibration_prompt(const RefinementOutcome& outcome, double rejected_score) {
    if (!score_in_range(rejected_score)) throw ValidationError("rejected_score", "must lie in [1,10]");
    std::vector<llm::ChatMessage> msgs = outcome.dialogue;
    std::string turn;
    turn.append(kCalibrationBefore).append(format_score(rejected_score)).append(kCalibrationAfter);
    msgs.push_back(llm::user_message(std::move(turn)));
    return msgs;
}

/// Anchor score from a rendered calibration turn.
inline std::optional<double> extract_calibration_anchor(std::string_view turn) {
    if (!turn.starts_with(kCalibrationBefore) || !turn.ends_with(kCalibrationAfter)) return std::nullopt;
    const std::string num(turn.substr(kCalibrationBefore.size(),
                                      turn.size() - kCalibrationBefore.size() - kCalibrationAfter.size()));
    char* end = nullptr;
    const double v = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size()) return std::nullopt;
    return v;
}

/// Reply in the refinement output format.
inline std::string render_refinement_reply(std::string_view reasoning, std::string_view modified) {
    std::string s;
    s.append(kStartReasoning).append("\n").append(reasoning).append("\n").append(kEndReasoning).append("\n\n");
    s.append(kStartModified).append("\n").append(modified).append("\n").append(kEndModified);
    return s;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

inline std::string_view last_nonempty_line(std::string_view text) {
    while (!text.empty()) {
        const auto nl = text.rfind('\n');
        const std::string_view line = nl == std::string_view::npos ? text : text.substr(nl + 1);
        if (!trim(line).empty()) return trim(line);
        if (nl == std::string_view::npos) break;
        text = text.substr(0, nl);
    }
    return {};
}

struct Numeral {
    double value;
    std::size_t begin;
    std::size_t end;
};

/// ASCII decimal numerals ("7", "9.5", "-2"). A minus sign counts only at the
/// start of the line or after whitespace; a trailing '.' is not consumed.
inline std::vector<Numeral> scan_numerals(std::string_view line) {
    std::vector<Numeral> out;
    const auto digit = [](char c) { return c >= '0' && c <= '9'; };
    std::size_t i = 0;
    while (i < line.size()) {
        if (!digit(line[i])) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        if (begin > 0 && line[begin - 1] == '-' && (begin == 1 || std::isspace(static_cast<unsigned char>(line[begin - 2]))))
            --begin;
        while (i < line.size() && digit(line[i])) ++i;
        if (i + 1 < line.size() && line[i] == '.' && digit(line[i + 1])) {
            ++i;
            while (i < line.size() && digit(line[i])) ++i;
        }
        const std::string tok(line.substr(begin, i - begin));
        out.push_back({std::strtod(tok.c_str(), nullptr), begin, i});
    }
    return out;
}

inline bool only_numerals(std::string_view line, const std::vector<Numeral>& nums) {
    std::size_t pos = 0;
    for (const auto& n : nums) {
        for (; pos < n.begin; ++pos)
            if (!std::isspace(static_cast<unsigned char>(line[pos]))) return false;
        pos = n.end;
    }
    for (; pos < line.size(); ++pos)
        if (!std::isspace(static_cast<unsigned char>(line[pos]))) return false;
    return true;
}

inline double checked_score(double v) {
    if (!score_in_range(v)) throw ScoreOutOfRange("score " + format_score(v) + " outside [1,10]");
    return v;
}

inline std::optional<std::pair<std::size_t, std::size_t>> find_span(std::string_view text, std::string_view open,
                                                                      std::string_view close, bool& saw_open) {
    std::size_t from = 0;
    saw_open = false;
    while (true) {
        const auto s = text.find(open, from);
        if (s == std::string_view::npos) return std::nullopt;
        saw_open = true;
        const auto body = s + open.size();
        const auto e = text.find(close, body);
        if (e != std::string_view::npos) return std::pair{body, e};
        from = body;
    }
}

} // namespace detail

/// Two scores from the last non-empty line of an annotation reply. Tolerant
/// mode takes the first two numerals on that line; strict mode requires the
/// line to hold exactly two numerals and nothing else.
inline std::pair<double, double> parse_score_line(std::string_view reply, bool strict = false) {
    const std::string_view line = detail::last_nonempty_line(reply);
    const auto nums = detail::scan_numerals(line);
    if (nums.size() < 2 || (strict && (nums.size() != 2 || !detail::only_numerals(line, nums))))
        throw MalformedScoreLine("expected two scores, got \"" + std::string(line) + "\"");
    return {detail::checked_score(nums[0].value), detail::checked_score(nums[1].value)};
}

/// The single score of a calibrated-scoring reply.
inline double parse_calibrated_score(std::string_view reply, bool strict = false) {
    const std::string_view line = strict ? detail::trim(reply) : detail::last_nonempty_line(reply);
    const auto nums = detail::scan_numerals(line);
    if (nums.size() != 1 || (strict && !detail::only_numerals(line, nums)))
        throw MalformedScore("expected one score, got \"" + std::string(line) + "\"");
    return detail::checked_score(nums[0].value);
}

/// Reasoning and modified-response spans of a refinement reply. The first
/// complete span of each tag pair wins; spans are trimmed. `prompt` becomes the
/// head of the retained dialogue.
inline RefinementOutcome parse_refinement(std::string_view reply, std::vector<llm::ChatMessage> prompt = {}) {
    auto span_of = [&](std::string_view open, std::string_view close) {
        bool saw_open = false;
        const auto sp = detail::find_span(reply, open, close, saw_open);
        if (!sp) throw MissingTag(std::string(saw_open ? close : open));
        return std::string(detail::trim(reply.substr(sp->first, sp->second - sp->first)));
    };
    RefinementOutcome out;
    out.reasoning = span_of(kStartReasoning, kEndReasoning);
    out.modified = span_of(kStartModified, kEndModified);
    if (out.modified.empty()) throw EmptyModifiedResponse();
    out.dialogue = std::move(prompt);
    out.dialogue.push_back(llm::assistant_message(std::string(reply)));
    return out;
}

} // namespace rmd::synth
