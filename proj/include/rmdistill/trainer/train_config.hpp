#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "rmdistill/core/errors.hpp"

namespace rmd::train {

/// Pairwise term of the training objective.
enum class PairObjective {
    margin,     ///< squared error between reward margin and teacher score margin
    bt,         ///< Bradley-Terry negative log-likelihood
    margin_bt,  ///< Bradley-Terry with the score margin subtracted inside the sigmoid
    steerlm,    ///< per-response regression onto the teacher score
    lsam,       ///< soft-label cross-entropy with target sigmoid(score margin)
};

inline std::string_view to_string(PairObjective o) {
    switch (o) {
    case PairObjective::margin: return "margin";
    case PairObjective::bt: return "bt";
    case PairObjective::margin_bt: return "margin_bt";
    case PairObjective::steerlm: return "steerlm";
    case PairObjective::lsam: return "lsam";
    }
    return "margin";
}

inline PairObjective objective_from_string(std::string_view s) {
    for (auto o : {PairObjective::margin, PairObjective::bt, PairObjective::margin_bt,
                   PairObjective::steerlm, PairObjective::lsam})
        if (to_string(o) == s) return o;
    throw ValidationError("train.objective", "unknown objective \"" + std::string(s) + "\"");
}

// Defaults follow the student RM recipe: 1 epoch, batch 16, lr 1e-5,
// 1024-byte sequences. Toy runs override the learning rate.
struct TrainConfig {
    double learning_rate = 1e-5;
    std::int64_t batch_size = 16;
    std::int64_t epochs = 1;
    std::int64_t max_seq_len = 1024;
    std::int64_t dim = 16;
    PairObjective objective = PairObjective::margin;
    /// Teacher score margins are divided by this before use. 1 leaves them as is.
    double margin_scale = 1.0;
    std::uint64_t seed = 0;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
    if (!std::isfinite(c.learning_rate) || c.learning_rate < 0)
        throw ValidationError("train.learning_rate", "must be finite and >= 0");
    if (c.batch_size <= 0) throw ValidationError("train.batch_size", "must be positive");
    if (c.epochs <= 0) throw ValidationError("train.epochs", "must be positive");
    if (c.max_seq_len <= 0) throw ValidationError("train.max_seq_len", "must be positive");
    if (c.dim <= 0) throw ValidationError("train.dim", "must be positive");
    if (!std::isfinite(c.margin_scale) || c.margin_scale <= 0)
        throw ValidationError("train.margin_scale", "must be positive");
}

} // namespace rmd::train
