#pragma once

// Independent reference implementations used by the unit and acceptance suites.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rmdistill/core/rng.hpp"
#include "rmdistill/trainer/model.hpp"

namespace rmd::oracle {

/// Levenshtein distance straight from its recursive definition, memoized on
/// (i, j) suffix positions.
template <typename Seq>
std::size_t levenshtein_recursive(const Seq& a, const Seq& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<long> memo((n + 1) * (m + 1), -1);
    std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == n) return m - j;
        if (j == m) return n - i;
        long& slot = memo[i * (m + 1) + j];
        if (slot >= 0) return static_cast<std::size_t>(slot);
        std::size_t best;
        if (a[i] == b[j]) {
            best = d(i + 1, j + 1);
        } else {
            best = 1 + std::min({d(i + 1, j), d(i, j + 1), d(i + 1, j + 1)});
        }
        slot = static_cast<long>(best);
        return best;
    };
    return d(0, 0);
}

inline std::string random_string(Rng& rng, std::size_t max_len, std::string_view alphabet) {
    const auto len = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_len)));
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.index(alphabet.size())]);
    return s;
}

/// Central difference d f / d p_i with step h.
inline double central_difference(train::ModelParams p, Eigen::Index i, double h,
                                 const std::function<double(const train::ModelParams&)>& f) {
    const double x = p.at(i);
    p.at(i) = x + h;
    const double up = f(p);
    p.at(i) = x - h;
    const double down = f(p);
    return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Flat indices worth probing: every v and W entry, the E rows of the tokens
/// that occur, and a random sample of U.
inline std::vector<Eigen::Index> probe_indices(const train::ModelParams& p, const std::vector<int>& tokens, Rng& rng,
                                               std::size_t u_samples) {
    std::vector<Eigen::Index> idx;
    const Eigen::Index e_off = 0, w_off = p.E.size(), u_off = w_off + p.W.size(), v_off = u_off + p.U.size();
    for (Eigen::Index i = 0; i < p.v.size(); ++i) idx.push_back(v_off + i);
    for (Eigen::Index i = 0; i < p.W.size(); ++i) idx.push_back(w_off + i);
    std::vector<bool> seen(static_cast<std::size_t>(p.vocab()), false);
    for (int t : tokens) {
        if (seen[static_cast<std::size_t>(t)]) continue;
        seen[static_cast<std::size_t>(t)] = true;
        for (Eigen::Index c = 0; c < p.dim(); ++c) idx.push_back(e_off + c * p.vocab() + t);  // column-major
    }
    for (std::size_t k = 0; k < u_samples; ++k) idx.push_back(u_off + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(p.U.size()))));
    return idx;
}

} // namespace rmd::oracle
