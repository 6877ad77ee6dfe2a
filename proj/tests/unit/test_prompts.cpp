#include <catch_amalgamated.hpp>

#include "rmdistill/core/rng.hpp"
#include "rmdistill/synthesis/prompts.hpp"
#include "../support/parser_corpus.hpp"

using namespace rmd;
using namespace rmd::synth;

TEST_CASE("parser corpus") {
    const auto cases = corpus::cases();
    REQUIRE(cases.size() >= 30);
    for (const auto& c : cases) {
        INFO(c.name);
        CHECK(corpus::check(c).empty());
    }
}

TEST_CASE("annotation prompt carries the verbatim template") {
    const Instruction x{"q1", "How to get the last element of a list L in Python?"};
    const auto msgs = build_annotation_prompt(x, corpus::kFigureRejected, corpus::kFigureRefined);
    REQUIRE(msgs.size() == 1);
    CHECK(msgs[0].role == llm::Role::user);
    const std::string& p = msgs[0].content;
    CHECK(p.starts_with("You are a helpful and precise assistant for checking the quality of the answer.\n\n[Question]\n" + x.text));
    CHECK(p.find("displayed above.Please rate the helpfulness") != std::string::npos);
    CHECK(p.find("The two scores are separated by a space.") != std::string::npos);
    CHECK(p.ends_with("### Response:"));
    const auto bodies = extract_annotation_bodies(p);
    REQUIRE(bodies);
    CHECK(bodies->question == x.text);
    CHECK(bodies->answer1 == corpus::kFigureRejected);
    CHECK(bodies->answer2 == corpus::kFigureRefined);
}

TEST_CASE("refinement prompt places reference and rejected answers") {
    const Instruction x{"q1", "How to get the last element of a list L in Python?"};
    const std::string y_t = "In Python, negative indexing allows you to access elements from the end, with -1 representing the last item.";
    const auto msgs = build_refinement_prompt(x, y_t, corpus::kFigureRejected);
    REQUIRE(msgs.size() == 1);
    const auto b = extract_refinement_bodies(msgs[0].content);
    REQUIRE(b);
    CHECK(b->question == x.text);
    CHECK(b->teacher_answer == y_t);
    CHECK(b->rejected == corpus::kFigureRejected);
    CHECK(msgs[0].content.find("ensure the edit distance between the modified response and the non-preferred response is as low as possible") !=
          std::string::npos);
}

TEST_CASE("bodies holding template markers are rejected") {
    const Instruction x{"q", "plain"};
    CHECK_THROWS_AS(build_annotation_prompt(x, "[System] hi", "b"), ValidationError);
    CHECK_THROWS_AS(build_refinement_prompt(x, "ref", "<End of Non-Preferred Response>"), ValidationError);
    CHECK_THROWS_AS(build_refinement_prompt(Instruction{"q", "<Start of Question>"}, "ref", "r"), ValidationError);
}

TEST_CASE("calibration turn extends the refinement dialogue") {
    const Instruction x{"q1", "How to get the last element of a list L in Python?"};
    auto prompt = build_refinement_prompt(x, "Use negative indexing.", corpus::kFigureRejected);
    const std::string reply = render_refinement_reply(corpus::kFigureReasoning, corpus::kFigureRefined);
    const auto outcome = parse_refinement(reply, prompt);
    REQUIRE(outcome.dialogue.size() == 2);
    CHECK(outcome.dialogue[1].role == llm::Role::assistant);
    CHECK(outcome.dialogue[1].content == reply);

    const auto cal = build_calibration_prompt(outcome, 4);
    REQUIRE(cal.size() == 3);
    CHECK(cal[2].role == llm::Role::user);
    CHECK(cal[2].content ==
          "Now, considering the rejected response was scored 4 out of 10 for quality, helpfulness, and alignment, score the "
          "Modified Response in the assistant's reply above on the same 1-10 scale. Output only the numerical score. Do NOT "
          "provide any explanation.");
    CHECK(extract_calibration_anchor(cal[2].content) == 4.0);
    CHECK(extract_calibration_anchor(build_calibration_prompt(outcome, 6.5)[2].content) == 6.5);
    CHECK_THROWS_AS(build_calibration_prompt(outcome, 0), ValidationError);
}

TEST_CASE("score formatting round-trips through the parser") {
    for (int a = 1; a <= 10; ++a)
        for (int b = 1; b <= 10; ++b) {
            const auto [pa, pb] = parse_score_line(format_score(a) + " " + format_score(b), true);
            REQUIRE(pa == a);
            REQUIRE(pb == b);
        }
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double a = 1 + 9 * rng.uniform(), b = 1 + 9 * rng.uniform();
        const auto [pa, pb] = parse_score_line(format_score(a) + " " + format_score(b), true);
        REQUIRE(pa == a);
        REQUIRE(pb == b);
    }
}

TEST_CASE("rendered refinement replies parse back") {
    Rng rng(11);
    const std::string alphabet = "abc xyz\n\t[]()-=L0123456789";
    for (int i = 0; i < 300; ++i) {
        std::string reasoning, modified;
        for (int k = rng.uniform_int(1, 40); k > 0; --k) reasoning.push_back(alphabet[rng.index(alphabet.size())]);
        for (int k = rng.uniform_int(1, 40); k > 0; --k) modified.push_back(alphabet[rng.index(alphabet.size())]);
        const auto trimmed = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\n");
            if (b == std::string::npos) return std::string();
            return s.substr(b, s.find_last_not_of(" \t\n") - b + 1);
        };
        if (trimmed(modified).empty()) continue;
        const auto out = parse_refinement(render_refinement_reply(reasoning, modified));
        REQUIRE(out.reasoning == trimmed(reasoning));
        REQUIRE(out.modified == trimmed(modified));
    }
}
