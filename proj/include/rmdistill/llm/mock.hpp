#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmdistill/core/rng.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/llm/client.hpp"
#include "rmdistill/synthesis/prompts.hpp"
#include "rmdistill/trainer/model.hpp"

namespace rmd::llm {

// ---------------------------------------------------------------------------
// Hidden quality function of the mock teacher
//
//   q(y) = (#instruction keywords present in y) - (#"ERR" tokens in y)
//
// Keywords are the distinct lowercase ASCII-letter words of length >= 4 in the
// instruction. "ERR" tokens are whitespace-delimited tokens equal to "ERR".
// ---------------------------------------------------------------------------

inline constexpr std::string_view kErrToken = "ERR";
inline constexpr std::string_view kFixToken = "FIX";

inline std::vector<std::string> letter_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u) && u < 0x80) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

inline std::vector<std::string> instruction_keywords(std::string_view instruction) {
    std::vector<std::string> out;
    for (auto& w : letter_words(instruction))
        if (w.size() >= 4 && std::find(out.begin(), out.end(), w) == out.end()) out.push_back(std::move(w));
    return out;
}

inline std::size_t keywords_covered(std::string_view instruction, std::string_view response) {
    const auto words = letter_words(response);
    const std::set<std::string> present(words.begin(), words.end());
    std::size_t n = 0;
    for (const auto& k : instruction_keywords(instruction)) n += present.count(k);
    return n;
}

namespace mock_detail {

template <typename F>
void for_each_token(std::string_view text, F&& f) {
    std::size_t i = 0;
    const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && ws(text[i])) ++i;
        const std::size_t b = i;
        while (i < text.size() && !ws(text[i])) ++i;
        if (i > b) f(b, i);
    }
}

} // namespace mock_detail

inline std::size_t count_err_tokens(std::string_view text) {
    std::size_t n = 0;
    mock_detail::for_each_token(text, [&](std::size_t b, std::size_t e) { n += text.substr(b, e - b) == kErrToken; });
    return n;
}

/// Replaces every "ERR" token with "FIX", leaving all other bytes in place.
inline std::string fix_err_tokens(std::string_view text) {
    std::string out(text);
    mock_detail::for_each_token(text, [&](std::size_t b, std::size_t e) {
        if (text.substr(b, e - b) == kErrToken) out.replace(b, e - b, kFixToken);
    });
    return out;
}

inline double mock_quality(std::string_view instruction, std::string_view response) {
    return static_cast<double>(keywords_covered(instruction, response)) - static_cast<double>(count_err_tokens(response));
}

/// floor(clamp(q, 1, 10))
inline double mock_score(std::string_view instruction, std::string_view response) {
    return std::floor(std::clamp(mock_quality(instruction, response), 1.0, 10.0));
}

/// Shape of the synthetic candidate responses.
///
/// All candidates for one instruction carry the same number of ERR tokens, so
/// the teacher's preference between them follows keyword coverage. Candidates
/// that cover less pad the answer with filler words (about `ramble` fillers
/// per missing keyword), which makes the preferred response the shorter one.
struct MockProfile {
    std::int64_t err_min = 3;
    std::int64_t err_max = 6;
    /// Extra ERR tokens drawn per model, 0..err_spread.
    std::int64_t err_spread = 0;
    /// Candidates cover between keyword_fraction_min * K and K keywords.
    double keyword_fraction_min = 0.5;
    double ramble = 3.0;
    std::int64_t teacher_lm_dim = 16;
    double teacher_lm_stddev = 0.5;
};

/// Deterministic stand-in for both the teacher and the candidate models.
/// Replies are a pure function of (seed, model, messages).
class MockTeacher : public ChatClient {
public:
    MockTeacher(std::uint64_t seed, std::string teacher_model, MockProfile profile = {})
        : seed_(seed), teacher_model_(std::move(teacher_model)), profile_(profile) {
        Rng rng = Rng(seed).fork("teacher-lm");
        teacher_lm_ = train::ModelParams::gaussian(profile_.teacher_lm_dim, rng, profile_.teacher_lm_stddev);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& teacher_model() const noexcept { return teacher_model_; }
    const MockProfile& profile() const noexcept { return profile_; }
    const train::ModelParams& teacher_lm() const noexcept { return teacher_lm_; }

    std::string complete_chat(const EndpointConfig& endpoint, std::span<const ChatMessage> messages) override {
        return reply(endpoint.model, messages);
    }

    std::vector<TokenDistribution> teacher_token_distributions(const EndpointConfig&, std::string_view prefix,
                                                               std::string_view continuation) override {
        return distributions(prefix, continuation);
    }

    std::vector<TokenDistribution> distributions(std::string_view prefix, std::string_view continuation) const {
        const auto t = train::forward(teacher_lm_, prefix, continuation, static_cast<std::int64_t>(prefix.size() + continuation.size()));
        const Eigen::MatrixXd lp = train::lm_log_softmax(teacher_lm_, t);
        std::vector<TokenDistribution> out(static_cast<std::size_t>(lp.rows()));
        for (Eigen::Index j = 0; j < lp.rows(); ++j) {
            auto& p = out[static_cast<std::size_t>(j)].probs;
            p.resize(static_cast<std::size_t>(lp.cols()));
            double sum = 0;
            for (Eigen::Index v = 0; v < lp.cols(); ++v) sum += p[static_cast<std::size_t>(v)] = std::exp(lp(j, v));
            for (double& x : p) x /= sum;
        }
        return out;
    }

    /// The mock's reply to `messages` when addressed as `model`.
    std::string reply(std::string_view model, std::span<const ChatMessage> messages) const {
        if (messages.empty() || messages.back().role != Role::user)
            throw UnrecognizedPromptKind("mock expects a conversation ending in a user turn");
        const std::string& last = messages.back().content;

        if (const auto anchor = synth::extract_calibration_anchor(last)) {
            std::optional<synth::RefinementBodies> refine;
            for (const auto& m : messages)
                if (m.role == Role::user && (refine = synth::extract_refinement_bodies(m.content))) break;
            if (!refine) throw UnrecognizedPromptKind("calibration turn without a refinement dialogue");
            const double replacements = static_cast<double>(count_err_tokens(refine->rejected));
            return synth::format_score(std::min(*anchor + replacements, 10.0));
        }
        if (messages.size() == 1) {
            if (const auto a = synth::extract_annotation_bodies(last)) {
                return synth::format_score(mock_score(a->question, a->answer1)) + " " +
                       synth::format_score(mock_score(a->question, a->answer2));
            }
            if (const auto r = synth::extract_refinement_bodies(last)) {
                const std::size_t n = count_err_tokens(r->rejected);
                std::string reasoning =
                    n == 0 ? std::string("The non-preferred response has no marked errors, so no edit is needed.")
                           : "The non-preferred response contains " + std::to_string(n) +
                                 " erroneous step(s) marked ERR that the preferred response avoids. "
                                 "Replacing each one with a correct step fixes it without changing the structure.";
                return synth::render_refinement_reply(reasoning, fix_err_tokens(r->rejected));
            }
            if (model == teacher_model_) return reference_answer(last);
            return candidate_answer(model, last);
        }
        throw UnrecognizedPromptKind("mock cannot classify a " + std::to_string(messages.size()) + "-turn conversation");
    }

    /// Teacher reference: mentions every keyword and carries no error token.
    static std::string reference_answer(std::string_view instruction) {
        const auto kw = instruction_keywords(instruction);
        std::string s = "A good answer covers";
        for (std::size_t i = 0; i < kw.size(); ++i) {
            s += (i == 0 ? " " : (i + 1 == kw.size() ? " and " : ", "));
            s += kw[i];
        }
        s += kw.empty() ? " the question directly." : ", and shows how they fit together.";
        return s;
    }

    /// Candidate response for `model`: a subset of the keywords, filler words
    /// and the instruction's ERR tokens, ending in "ok".
    std::string candidate_answer(std::string_view model, std::string_view instruction) const {
        static constexpr std::string_view kFiller[] = {"we", "can", "use", "the", "a", "to", "and", "so", "it", "is", "then", "of"};
        const auto kw = instruction_keywords(instruction);
        Rng base = Rng(seed_).fork("difficulty\x1f" + std::string(instruction));
        Rng rng = Rng(seed_).fork("candidate\x1f" + std::string(model) + "\x1f" + std::string(instruction));
        const auto errs = base.uniform_int(profile_.err_min, profile_.err_max) + rng.uniform_int(0, profile_.err_spread);
        const auto k = static_cast<std::int64_t>(kw.size());
        const auto lo = std::min<std::int64_t>(k, static_cast<std::int64_t>(std::ceil(profile_.keyword_fraction_min * static_cast<double>(k))));
        const auto covered = rng.uniform_int(lo, k);
        const auto fillers = static_cast<std::int64_t>(std::llround(profile_.ramble * static_cast<double>(k - covered))) + rng.uniform_int(0, 2);

        std::vector<std::size_t> idx(kw.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(static_cast<std::size_t>(covered));
        std::sort(idx.begin(), idx.end());

        std::vector<std::string> words;
        for (std::size_t i : idx) words.push_back(kw[i]);
        auto insert_at_random = [&](std::string w) {
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), std::move(w));
        };
        for (std::int64_t f = 0; f < fillers; ++f) insert_at_random(std::string(kFiller[rng.index(std::size(kFiller))]));
        for (std::int64_t e = 0; e < errs; ++e) insert_at_random(std::string(kErrToken));
        words.emplace_back("ok");
        std::string s;
        for (const auto& w : words) {
            if (!s.empty()) s.push_back(' ');
            s += w;
        }
        return s;
    }

private:
    std::uint64_t seed_;
    std::string teacher_model_;
    MockProfile profile_;
    train::ModelParams teacher_lm_;
};

// ---------------------------------------------------------------------------
// Synthetic corpora for offline runs
// ---------------------------------------------------------------------------

/// Pronounceable lowercase pseudo-word of 2..3 consonant-vowel syllables.
inline std::string pseudo_word(Rng& rng) {
    static constexpr std::string_view kCons = "bdfgklmnprstvz";
    static constexpr std::string_view kVow = "aeiou";
    std::string w;
    const auto syll = rng.uniform_int(2, 3);
    for (std::int64_t i = 0; i < syll; ++i) {
        w.push_back(kCons[rng.index(kCons.size())]);
        w.push_back(kVow[rng.index(kVow.size())]);
    }
    return w;
}

/// Instructions whose keywords are exactly `min_kw..max_kw` pseudo-words;
/// the glue words are shorter than four letters.
inline std::vector<Instruction> synthetic_instructions(std::size_t n, std::uint64_t seed, const std::string& id_prefix = "syn",
                                                       std::int64_t min_kw = 10, std::int64_t max_kw = 14) {
    Rng rng = Rng(seed).fork("instructions/" + id_prefix);
    std::vector<Instruction> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> kw;
        const auto k = rng.uniform_int(min_kw, max_kw);
        while (static_cast<std::int64_t>(kw.size()) < k) {
            auto w = pseudo_word(rng);
            if (std::find(kw.begin(), kw.end(), w) == kw.end()) kw.push_back(std::move(w));
        }
        std::string text = "How do ";
        for (std::size_t j = 0; j < kw.size(); ++j) {
            text += (j == 0 ? "" : (j + 1 == kw.size() ? " and " : ", "));
            text += kw[j];
        }
        text += " fit in?";
        char id[32];
        std::snprintf(id, sizeof id, "%s-%05zu", id_prefix.c_str(), i);
        out.push_back({id, std::move(text)});
    }
    return out;
}

} // namespace rmd::llm
