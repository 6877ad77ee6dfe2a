#pragma once

// Curated teacher replies with their expected parse results.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmdistill/synthesis/prompts.hpp"

namespace rmd::corpus {

enum class Kind { score_line, calibrated, refinement };

struct Case {
    std::string name;
    Kind kind;
    std::string reply;
    bool strict = false;
    // expected outcome: either values or an error class name
    std::optional<std::pair<double, double>> scores;  // score_line
    std::optional<double> score;                      // calibrated
    std::optional<std::pair<std::string, std::string>> spans;  // refinement (reasoning, modified)
    std::string error;                                         // expected exception type
    std::string missing_tag;                                   // for MissingTag
};

inline const std::string kFigureRejected = "You can use L[0] to access the last element of a list.";
inline const std::string kFigureRefined = "You can use L[-1] to access the last element of a list.";
inline const std::string kFigureReasoning =
    "The non-preferred response uses L[0], which returns the first element. Python's negative indexing makes L[-1] "
    "the last element, so only the index needs to change.";

inline std::vector<Case> cases() {
    using K = Kind;
    std::vector<Case> c;
    auto score = [&](std::string name, std::string reply, double a, double b, bool strict = false) {
        c.push_back({std::move(name), K::score_line, std::move(reply), strict, std::pair{a, b}, {}, {}, "", ""});
    };
    auto score_err = [&](std::string name, std::string reply, std::string err, bool strict = false) {
        c.push_back({std::move(name), K::score_line, std::move(reply), strict, {}, {}, {}, std::move(err), ""});
    };
    auto cal = [&](std::string name, std::string reply, double s, bool strict = false) {
        c.push_back({std::move(name), K::calibrated, std::move(reply), strict, {}, s, {}, "", ""});
    };
    auto cal_err = [&](std::string name, std::string reply, std::string err, bool strict = false) {
        c.push_back({std::move(name), K::calibrated, std::move(reply), strict, {}, {}, {}, std::move(err), ""});
    };
    auto ref = [&](std::string name, std::string reply, std::string reasoning, std::string modified) {
        c.push_back({std::move(name), K::refinement, std::move(reply), false, {}, {}, std::pair{std::move(reasoning), std::move(modified)}, "", ""});
    };
    auto ref_err = [&](std::string name, std::string reply, std::string err, std::string tag = "") {
        c.push_back({std::move(name), K::refinement, std::move(reply), false, {}, {}, {}, std::move(err), std::move(tag)});
    };

    // annotation score lines
    score("bare pair", "7 4", 7, 4);
    score("bare pair strict", "7 4", 7, 4, true);
    score("chatty prefix on the same line", "Sure! 9.5 3", 9.5, 3);
    score_err("chatty prefix strict", "Sure! 9.5 3", "MalformedScoreLine", true);
    score("explanation above", "Assistant 1 is more precise.\n\n8 6\n", 8, 6);
    score("trailing blank lines", "8 6\n\n   \n", 8, 6);
    score("crlf line endings", "Evaluation done.\r\n7 4\r\n", 7, 4);
    score("tab separated", "9\t2", 9, 2);
    score("decimals", "7.25 7.75", 7.25, 7.75);
    score("range ends", "Scores: 10 1", 10, 1);
    score("trailing commentary", "7 4 because the first is better", 7, 4);
    score("unicode prose above", "\xC3\x89valuation termin\xC3\xA9" "e \xE2\x9C\x93\n6 3", 6, 3);
    score_err("labelled scores strict", "Assistant 1: 6, Assistant 2: 9", "MalformedScoreLine", true);
    score_err("single numeral", "7", "MalformedScoreLine");
    score_err("empty reply", "", "MalformedScoreLine");
    score_err("words only", "seven four", "MalformedScoreLine");
    score_err("fullwidth digits", "\xEF\xBC\x97 \xEF\xBC\x94", "MalformedScoreLine");
    score_err("scores on an earlier line", "7 4\nI hope this helps!", "MalformedScoreLine");
    score_err("above range", "11 4", "ScoreOutOfRange");
    score_err("below range", "0 5", "ScoreOutOfRange");
    score_err("negative", "-3 4", "ScoreOutOfRange");

    // calibrated scores
    cal("integer", "8", 8);
    cal("decimal", "8.5", 8.5);
    cal("labelled tolerant", "Score: 9", 9);
    cal("reasoning above", "The refined response fixes the index.\n7", 7);
    cal("padded", "  10 \n", 10, true);
    cal_err("labelled strict", "Score: 9", "MalformedScore", true);
    cal_err("spelled out", "eleven", "MalformedScore");
    cal_err("two numerals", "8 9", "MalformedScore");
    cal_err("out of range", "12", "ScoreOutOfRange");

    // refinement replies
    const std::string figure = synth::render_refinement_reply(kFigureReasoning, kFigureRefined);
    ref("figure example", figure, kFigureReasoning, kFigureRefined);
    ref("chatty wrapper", "Sure, here is my analysis.\n\n" + figure + "\n\nLet me know if you need more.", kFigureReasoning,
        kFigureRefined);
    ref("inline tags", "<Start of Reasoning>off by one<End of Reasoning><Start of Modified Response>x = L[-1]<End of Modified Response>",
        "off by one", "x = L[-1]");
    ref("duplicated tags keep the first span",
        figure + "\n<Start of Reasoning>\nsecond\n<End of Reasoning>\n<Start of Modified Response>\nother\n<End of Modified Response>",
        kFigureReasoning, kFigureRefined);
    ref("unicode body",
        synth::render_refinement_reply("Indice erron\xC3\xA9 \xE2\x80\x94 L[0]", "Utilisez L[-1] \xE2\x9C\x93"),
        "Indice erron\xC3\xA9 \xE2\x80\x94 L[0]", "Utilisez L[-1] \xE2\x9C\x93");
    ref_err("missing end of modified",
            "<Start of Reasoning>r<End of Reasoning>\n<Start of Modified Response>\n" + kFigureRefined, "MissingTag",
            std::string(synth::kEndModified));
    ref_err("missing reasoning", "<Start of Modified Response>\n" + kFigureRefined + "\n<End of Modified Response>",
            "MissingTag", std::string(synth::kStartReasoning));
    ref_err("empty modified", "<Start of Reasoning>r<End of Reasoning><Start of Modified Response>\n  \n<End of Modified Response>",
            "EmptyModifiedResponse");
    ref_err("no tags at all", "I would change L[0] to L[-1].", "MissingTag", std::string(synth::kStartReasoning));
    return c;
}

/// Empty when the case behaves as expected, otherwise a description.
inline std::string check(const Case& c) {
    auto fmt_pair = [](double a, double b) { return synth::format_score(a) + " " + synth::format_score(b); };
    try {
        switch (c.kind) {
        case Kind::score_line: {
            const auto [a, b] = synth::parse_score_line(c.reply, c.strict);
            if (!c.error.empty()) return "expected " + c.error + ", parsed " + fmt_pair(a, b);
            if (c.scores->first != a || c.scores->second != b) return "parsed " + fmt_pair(a, b);
            return "";
        }
        case Kind::calibrated: {
            const double s = synth::parse_calibrated_score(c.reply, c.strict);
            if (!c.error.empty()) return "expected " + c.error + ", parsed " + synth::format_score(s);
            if (*c.score != s) return "parsed " + synth::format_score(s);
            return "";
        }
        case Kind::refinement: {
            const auto out = synth::parse_refinement(c.reply);
            if (!c.error.empty()) return "expected " + c.error + ", parsed a refinement";
            if (out.reasoning != c.spans->first) return "reasoning span \"" + out.reasoning + "\"";
            if (out.modified != c.spans->second) return "modified span \"" + out.modified + "\"";
            return "";
        }
        }
    } catch (const synth::MissingTag& e) {
        if (c.error != "MissingTag") return std::string("unexpected ") + e.what();
        if (!c.missing_tag.empty() && e.tag() != c.missing_tag) return "named tag " + e.tag();
        return "";
    } catch (const synth::EmptyModifiedResponse& e) {
        return c.error == "EmptyModifiedResponse" ? "" : std::string("unexpected ") + e.what();
    } catch (const synth::ScoreOutOfRange& e) {
        return c.error == "ScoreOutOfRange" ? "" : std::string("unexpected ") + e.what();
    } catch (const synth::MalformedScoreLine& e) {
        return c.error == "MalformedScoreLine" ? "" : std::string("unexpected ") + e.what();
    } catch (const synth::MalformedScore& e) {
        return c.error == "MalformedScore" ? "" : std::string("unexpected ") + e.what();
    }
    return "unreachable";
}

} // namespace rmd::corpus
