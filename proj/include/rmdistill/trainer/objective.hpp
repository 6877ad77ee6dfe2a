#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmdistill/core/types.hpp"
#include "rmdistill/llm/chat.hpp"
#include "rmdistill/trainer/losses.hpp"
#include "rmdistill/trainer/model.hpp"

namespace rmd::train {

class MissingTeacherDistributions : public Error {
public:
    using Error::Error;
};

class MissingTeacherResponse : public Error {
public:
    using Error::Error;
};

/// Loss weights after capability resolution. The pairwise term is scaled by
/// 1 - alpha - beta; beta is forced to 0 when no teacher distributions exist.
struct LossWeights {
    double alpha = 0.0;
    double beta = 0.0;

    double margin_weight() const noexcept { return 1.0 - alpha - beta; }
};

inline LossWeights resolve_weights(double alpha, double beta, bool teacher_distributions_available) {
    LossWeights w{alpha, teacher_distributions_available ? beta : 0.0};
    if (w.alpha < 0 || w.beta < 0) throw ValidationError("loss", "weights must be >= 0");
    if (!(w.margin_weight() > 0)) throw ValidationError("loss.alpha+beta", "must be < 1");
    return w;
}

struct ObjectiveOptions {
    PairObjective objective = PairObjective::margin;
    double margin_scale = 1.0;
    std::int64_t max_seq_len = 1024;
};

struct LossBreakdown {
    double total = 0.0;
    double pair = 0.0;  ///< unweighted pairwise term
    double nll = 0.0;   ///< mean NLL over teacher-response positions
    double kl = 0.0;    ///< mean forward KL over teacher-response positions
    std::size_t kl_floored = 0;
};

using TeacherDists = std::span<const llm::TokenDistribution>;

namespace detail {

inline void require_teacher(std::optional<TeacherDists> dists, std::size_t positions, double beta) {
    if (beta == 0.0) return;
    if (!dists) throw MissingTeacherDistributions("beta > 0 but no teacher distributions were supplied");
    if (dists->size() != positions)
        throw MissingTeacherDistributions("expected " + std::to_string(positions) + " teacher distributions, got " +
                                          std::to_string(dists->size()));
}

/// Generative regularization on one teacher response. When `grad` is given,
/// accumulates d(loss)/d(params) into it.
inline void reg_term(const ModelParams& params, const ForwardTrace& t, std::optional<TeacherDists> dists, double alpha,
                     double beta, LossBreakdown& out, ModelParams* grad) {
    const Eigen::Index L = t.positions();
    if (L == 0 || (alpha == 0.0 && beta == 0.0)) return;
    require_teacher(dists, static_cast<std::size_t>(L), beta);
    const Eigen::MatrixXd logq = lm_log_softmax(params, t);
    double nll = 0.0, kl = 0.0;
    Eigen::MatrixXd dlogits;
    if (grad) dlogits = Eigen::MatrixXd::Zero(L, params.vocab());
    for (Eigen::Index j = 0; j < L; ++j) {
        const int tok = t.target[static_cast<std::size_t>(j)];
        nll -= logq(j, tok);
        Eigen::RowVectorXd q;
        if (grad || beta != 0.0) q = logq.row(j).array().exp();
        if (beta != 0.0) {
            const auto& p = (*dists)[static_cast<std::size_t>(j)].probs;
            if (static_cast<Eigen::Index>(p.size()) != params.vocab())
                throw ValidationError("teacher_dists", "vocabulary size mismatch");
            const auto r = kl_divergence(p, std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
            kl += r.value;
            out.kl_floored += r.floored;
            if (grad)
                for (Eigen::Index v = 0; v < q.size(); ++v) dlogits(j, v) += beta * (q(v) - p[static_cast<std::size_t>(v)]);
        }
        if (grad && alpha != 0.0) {
            dlogits.row(j) += alpha * q;
            dlogits(j, tok) -= alpha;
        }
    }
    const double inv = 1.0 / static_cast<double>(L);
    out.nll = nll * inv;
    out.kl = kl * inv;
    out.total += alpha * out.nll + beta * out.kl;
    if (!grad) return;
    dlogits *= inv;
    grad->U += dlogits.transpose() * t.hidden;
    Eigen::MatrixXd dH = dlogits * params.U;
    // backbone
    for (Eigen::Index j = 0; j < L; ++j) {
        const Eigen::VectorXd h = t.hidden.row(j).transpose();
        const Eigen::VectorXd du = dH.row(j).transpose().cwiseProduct((1.0 - h.array().square()).matrix());
        const int prev = t.prev[static_cast<std::size_t>(j)];
        grad->W += du * params.E.row(prev);
        grad->E.row(prev) += (params.W.transpose() * du).transpose();
    }
}

/// Accumulates coeff * d(reward)/d(params) for one response trace.
inline void reward_grad(const ModelParams& params, const ForwardTrace& t, double coeff, ModelParams& grad) {
    const Eigen::Index n = t.positions();
    const double inv = 1.0 / static_cast<double>(n);
    grad.v += coeff * mean_hidden(t);
    const Eigen::VectorXd dh = coeff * inv * params.v;
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd h = t.hidden.row(j).transpose();
        const Eigen::VectorXd du = dh.cwiseProduct((1.0 - h.array().square()).matrix());
        const int prev = t.prev[static_cast<std::size_t>(j)];
        grad.W += du * params.E.row(prev);
        grad.E.row(prev) += (params.W.transpose() * du).transpose();
    }
}

inline LossBreakdown evaluate(const DatasetEntry& entry, const ModelParams& params, const LossWeights& w,
                              std::optional<TeacherDists> dists, const ObjectiveOptions& opt, ModelParams* grad) {
    if (entry.chosen().empty() || entry.rejected().empty())
        throw ValidationError("entry", "chosen and rejected must be non-empty");
    const ForwardTrace tw = forward(params, entry.instruction(), entry.chosen(), opt.max_seq_len);
    const ForwardTrace tl = forward(params, entry.instruction(), entry.rejected(), opt.max_seq_len);
    const double r_w = params.v.dot(mean_hidden(tw));
    const double r_l = params.v.dot(mean_hidden(tl));
    const double scale = 1.0 / opt.margin_scale;
    const PairTerm pt = pair_term(opt.objective, r_w, r_l, entry.score_chosen() * scale, entry.score_rejected() * scale);

    LossBreakdown out;
    out.pair = pt.value;
    out.total = w.margin_weight() * pt.value;
    if (grad) {
        reward_grad(params, tw, w.margin_weight() * pt.d_chosen, *grad);
        reward_grad(params, tl, w.margin_weight() * pt.d_rejected, *grad);
    }
    if (w.alpha != 0.0 || w.beta != 0.0) {
        if (!entry.teacher_response())
            throw MissingTeacherResponse("generative regularization is enabled but the entry has no teacher response");
        const ForwardTrace tt = forward(params, entry.instruction(), *entry.teacher_response(), opt.max_seq_len);
        reg_term(params, tt, dists, w.alpha, w.beta, out, grad);
    }
    return out;
}

} // namespace detail

/// (1/L) sum_t [ -alpha log P(y_T^t | .) + beta KL(P_T || P_student) ] over the
/// teacher response y_T given instruction x.
inline LossBreakdown loss_reg(const ModelParams& params, std::string_view instruction, std::string_view teacher_response,
                              std::optional<TeacherDists> dists, double alpha, double beta,
                              std::int64_t max_seq_len = 1024) {
    if (beta != 0.0 && !dists) throw MissingTeacherDistributions("beta > 0 but no teacher distributions were supplied");
    LossBreakdown out;
    const ForwardTrace t = forward(params, instruction, teacher_response, max_seq_len);
    detail::reg_term(params, t, dists, alpha, beta, out, nullptr);
    return out;
}

/// (1 - alpha - beta) * pairwise term + generative regularization.
inline LossBreakdown loss_total(const DatasetEntry& entry, const ModelParams& params, const LossWeights& weights,
                                std::optional<TeacherDists> dists, const ObjectiveOptions& opt = {}) {
    return detail::evaluate(entry, params, weights, dists, opt, nullptr);
}

struct LossAndGradient {
    LossBreakdown loss;
    ModelParams grad;
};

/// Analytic gradient of `loss_total` with respect to every parameter tensor.
inline LossAndGradient gradients(const DatasetEntry& entry, const ModelParams& params, const LossWeights& weights,
                                 std::optional<TeacherDists> dists, const ObjectiveOptions& opt = {}) {
    LossAndGradient r{{}, ModelParams::zeros(params.dim(), params.vocab())};
    r.loss = detail::evaluate(entry, params, weights, dists, opt, &r.grad);
    return r;
}

} // namespace rmd::train
