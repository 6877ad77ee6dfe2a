#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmdistill/core/rng.hpp"
#include "rmdistill/core/types.hpp"
#include "rmdistill/trainer/objective.hpp"
#include "rmdistill/trainer/train_config.hpp"

namespace rmd::train {

inline constexpr double kInitStddev = 0.02;

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(std::size_t step, const std::string& what)
        : Error("non-finite loss at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

struct StepLog {
    std::size_t step = 0;
    double loss = 0.0;
    double margin_term = 0.0;
    double nll_term = 0.0;
    double kl_term = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<StepLog> log;
};

/// Supplies the teacher's per-position distributions over an entry's teacher
/// response. Only consulted when beta > 0.
using TeacherDistProvider = std::function<std::vector<llm::TokenDistribution>(const DatasetEntry&)>;

inline ModelParams init_params(const TrainConfig& config) {
    Rng rng = Rng(config.seed).fork("init");
    return ModelParams::gaussian(config.dim, rng, kInitStddev);
}

/// Mini-batch SGD on the batch-averaged objective. Deterministic in
/// (dataset order, config, weights).
inline TrainResult train(std::span<const DatasetEntry> dataset, const TrainConfig& config, const LossWeights& weights,
                         const TeacherDistProvider& teacher = {}) {
    validate(config);
    if (dataset.empty()) throw ValidationError("dataset", "must be non-empty");
    if (weights.beta != 0.0 && !teacher)
        throw MissingTeacherDistributions("beta > 0 but no teacher distribution provider was given");

    const ObjectiveOptions opt{config.objective, config.margin_scale, config.max_seq_len};
    TrainResult result{init_params(config), {}};
    ModelParams& params = result.params;
    const Rng root(config.seed);
    std::vector<std::size_t> order(dataset.size());
    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::size_t step = 0;

    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffler = root.fork("shuffle/" + std::to_string(epoch));
        shuffler.shuffle(order.begin(), order.end());

        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            ModelParams grad = ModelParams::zeros(params.dim(), params.vocab());
            StepLog rec{++step, 0, 0, 0, 0};
            for (std::size_t k = start; k < end; ++k) {
                const DatasetEntry& e = dataset[order[k]];
                std::vector<llm::TokenDistribution> dists;
                std::optional<TeacherDists> span;
                if (weights.beta != 0.0) {
                    dists = teacher(e);
                    span = TeacherDists(dists);
                }
                LossAndGradient g = gradients(e, params, weights, span, opt);
                grad.axpy(inv, g.grad);
                rec.loss += inv * g.loss.total;
                rec.margin_term += inv * g.loss.pair;
                rec.nll_term += inv * g.loss.nll;
                rec.kl_term += inv * g.loss.kl;
            }
            if (!std::isfinite(rec.loss)) throw NonFiniteLoss(rec.step, "batch loss");
            if (!grad.all_finite()) throw NonFiniteLoss(rec.step, "gradient");
            params.axpy(-config.learning_rate, grad);
            result.log.push_back(rec);
        }
    }
    return result;
}

struct EvalPair {
    std::string instruction;
    std::string better;
    std::string worse;
};

/// Fraction of pairs where reward(better) > reward(worse); exact ties score 0.5.
inline double eval_pairwise_accuracy(const ModelParams& params, std::span<const EvalPair> pairs,
                                     std::int64_t max_seq_len = 1024) {
    if (pairs.empty()) throw ValidationError("pairs", "must be non-empty");
    double hits = 0.0;
    for (const auto& p : pairs) {
        const double rb = reward(params, p.instruction, p.better, max_seq_len);
        const double rw = reward(params, p.instruction, p.worse, max_seq_len);
        if (rb > rw) hits += 1.0;
        else if (rb == rw) hits += 0.5;
    }
    return hits / static_cast<double>(pairs.size());
}

} // namespace rmd::train
