#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/trainer/train_config.hpp"

namespace rmd::train {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// -log sigmoid(r_w - r_l)
inline double loss_bt(double r_w, double r_l) { return softplus(-(r_w - r_l)); }

/// ((r_w - r_l) - (s_w - s_l))^2
inline double loss_margin(double r_w, double r_l, double s_w, double s_l) {
    const double resid = (r_w - r_l) - (s_w - s_l);
    return resid * resid;
}

/// -log sigmoid(r_w - r_l - gamma), gamma = s_w - s_l
inline double loss_margin_bt(double r_w, double r_l, double s_w, double s_l) {
    return softplus(-((r_w - r_l) - (s_w - s_l)));
}

inline double loss_steerlm(double r_pred, double s_target) {
    const double d = r_pred - s_target;
    return d * d;
}

/// Soft-label cross-entropy: p = sigmoid(r_w - r_l), eps = sigmoid(s_w - s_l),
/// loss = -(eps log p + (1 - eps) log(1 - p)).
inline double loss_lsam(double r_w, double r_l, double s_w, double s_l) {
    const double z = r_w - r_l;
    const double eps = sigmoid(s_w - s_l);
    return eps * softplus(-z) + (1.0 - eps) * softplus(z);
}

inline constexpr double kKlFloor = 1e-12;

struct KlResult {
    double value = 0.0;
    std::size_t floored = 0;  ///< entries of q raised to the floor
};

/// KL(p || q) = sum_v p(v) log(p(v) / q(v)). Entries of q below 1e-12 are
/// floored; terms with p(v) = 0 contribute nothing.
inline KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ValidationError("kl", "distributions have different supports");
    KlResult r;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double qi = q[i];
        if (qi < kKlFloor) {
            qi = kKlFloor;
            ++r.floored;
        }
        if (p[i] > 0) r.value += p[i] * (std::log(p[i]) - std::log(qi));
    }
    return r;
}

/// Value and partial derivatives of a pairwise objective w.r.t. both rewards.
struct PairTerm {
    double value = 0.0;
    double d_chosen = 0.0;
    double d_rejected = 0.0;
};

inline PairTerm pair_term(PairObjective objective, double r_w, double r_l, double s_w, double s_l) {
    const double z = r_w - r_l;
    const double gamma = s_w - s_l;
    PairTerm t;
    double dz = 0.0;
    switch (objective) {
    case PairObjective::margin:
        t.value = loss_margin(r_w, r_l, s_w, s_l);
        dz = 2.0 * (z - gamma);
        break;
    case PairObjective::bt:
        t.value = loss_bt(r_w, r_l);
        dz = sigmoid(z) - 1.0;
        break;
    case PairObjective::margin_bt:
        t.value = loss_margin_bt(r_w, r_l, s_w, s_l);
        dz = sigmoid(z - gamma) - 1.0;
        break;
    case PairObjective::lsam:
        t.value = loss_lsam(r_w, r_l, s_w, s_l);
        dz = sigmoid(z) - sigmoid(gamma);
        break;
    case PairObjective::steerlm:
        t.value = loss_steerlm(r_w, s_w) + loss_steerlm(r_l, s_l);
        t.d_chosen = 2.0 * (r_w - s_w);
        t.d_rejected = 2.0 * (r_l - s_l);
        return t;
    }
    t.d_chosen = dz;
    t.d_rejected = -dz;
    return t;
}

} // namespace rmd::train
