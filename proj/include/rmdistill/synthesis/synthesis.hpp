#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/rng.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/llm/client.hpp"
#include "rmdistill/synthesis/prompts.hpp"

namespace rmd::synth {

class PoolTooSmall : public Error {
public:
    using Error::Error;
};

class MismatchedPair : public Error {
public:
    using Error::Error;
};

/// A teacher model reached through some client.
struct Teacher {
    llm::ChatClient* client = nullptr;
    llm::EndpointConfig endpoint;
    bool strict_parse = false;
    bool retry_parse = false;

    std::string ask(const std::vector<llm::ChatMessage>& messages) const { return client->complete_chat(endpoint, messages); }
};

/// Indices of two distinct responses; the first is shown as Assistant 1.
using IndexPair = std::pair<std::size_t, std::size_t>;

/// Uniform over unordered index pairs not in `exclude`, with a uniformly random
/// presentation order.
inline IndexPair sample_pair_indices(std::size_t pool_size, Rng& rng, const std::set<IndexPair>& exclude = {}) {
    if (pool_size < 2) throw PoolTooSmall("pool holds " + std::to_string(pool_size) + " responses; need at least 2");
    std::vector<IndexPair> open;
    for (std::size_t i = 0; i < pool_size; ++i)
        for (std::size_t j = i + 1; j < pool_size; ++j)
            if (!exclude.count({i, j})) open.emplace_back(i, j);
    if (open.empty()) throw PoolTooSmall("every pair of the pool has already been used");
    auto [a, b] = open[rng.index(open.size())];
    if (rng.coin()) std::swap(a, b);
    return {a, b};
}

inline std::pair<std::string, std::string> sample_pair(const ResponsePool& pool, Rng& rng) {
    const auto [a, b] = sample_pair_indices(pool.responses.size(), rng);
    return {pool.responses[a].text, pool.responses[b].text};
}

/// Equal teacher scores. The pair is not stored.
struct Tie {
    double score = 0.0;
};

using Annotation = std::variant<AnnotatedPair, Tie>;

/// Scores (y_a, y_b) with the annotation prompt; the higher-scored response
/// becomes chosen. Identical texts tie without a teacher call.
inline Annotation annotate_pair(const Instruction& x, const std::string& y_a, const std::string& y_b, const Teacher& teacher) {
    validate(x);
    if (y_a == y_b) return Tie{};
    const std::string reply = teacher.ask(build_annotation_prompt(x, y_a, y_b));
    const auto [s_a, s_b] = parse_score_line(reply, teacher.strict_parse);
    if (s_a > s_b) return AnnotatedPair(x, y_a, y_b, s_a, s_b);
    if (s_b > s_a) return AnnotatedPair(x, y_b, y_a, s_b, s_a);
    return Tie{s_a};
}

/// The teacher's own answer y_T, used as the refinement reference and as the
/// generative-regularization target.
inline std::string generate_teacher_response(const Instruction& x, const Teacher& teacher) {
    validate(x);
    return teacher.ask({llm::user_message(x.text)});
}

inline RefinementOutcome run_refinement(const Instruction& x, const std::string& teacher_response,
                                        const std::string& rejected, const Teacher& teacher) {
    auto prompt = build_refinement_prompt(x, teacher_response, rejected);
    const int attempts = teacher.retry_parse ? 2 : 1;
    for (int i = 1;; ++i) {
        const std::string reply = teacher.ask(prompt);
        try {
            return parse_refinement(reply, prompt);
        } catch (const ParseError&) {
            if (i >= attempts) throw;
        }
    }
}

/// Contrastive refinement of the pair's rejected response followed by
/// self-calibrated scoring anchored at the rejected response's annotation
/// score. Pairs whose calibrated score does not exceed the anchor are still
/// returned; filtering decides their fate.
inline RefinedPair refine_pair(const AnnotatedPair& pair, const std::string& teacher_response, const Teacher& teacher) {
    const Instruction& x = pair.instruction();
    const RefinementOutcome outcome = run_refinement(x, teacher_response, pair.rejected(), teacher);
    const std::string reply = teacher.ask(build_calibration_prompt(outcome, pair.score_rejected()));
    const double refined_score = parse_calibrated_score(reply, teacher.strict_parse);
    return RefinedPair(x, pair.rejected(), outcome.modified, outcome.reasoning, pair.score_rejected(), refined_score);
}

inline RefinedPair refine_pair(const AnnotatedPair& pair, const Teacher& teacher) {
    return refine_pair(pair, generate_teacher_response(pair.instruction(), teacher), teacher);
}

/// Externally labeled pair (labeled scenario).
struct GoldPair {
    Instruction instruction;
    std::string chosen;
    std::string rejected;
};

/// True iff the teacher's chosen response is the gold chosen response.
inline bool consistency_filter(const GoldPair& gold, const AnnotatedPair& judged) {
    if (gold.instruction.id != judged.instruction().id)
        throw MismatchedPair("instruction " + gold.instruction.id + " vs " + judged.instruction().id);
    const std::set<std::string> a{gold.chosen, gold.rejected};
    const std::set<std::string> b{judged.chosen(), judged.rejected()};
    if (a != b) throw MismatchedPair("responses differ for instruction " + gold.instruction.id);
    return judged.chosen() == gold.chosen;
}

} // namespace rmd::synth
