#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/rng.hpp"

namespace rmd::train {

class SequenceTooLong : public Error {
public:
    using Error::Error;
};

// Byte-level tokenizer: each UTF-8 byte is its own id, plus one BOS id.
inline constexpr int kBos = 256;
inline constexpr int kVocab = 257;

inline std::vector<int> encode(std::string_view text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(static_cast<unsigned char>(c));
    return ids;
}

inline std::string decode(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id > 255) throw ValidationError("token", "id " + std::to_string(id) + " is not a byte");
        out.push_back(static_cast<char>(id));
    }
    return out;
}

/// Parameters of the toy reward model: a one-layer tanh backbone over the
/// previous token's embedding, feeding a language-model head and a scalar
/// reward head. The same layout doubles as a gradient accumulator.
struct ModelParams {
    Eigen::MatrixXd E;  // vocab x dim token embeddings
    Eigen::MatrixXd W;  // dim x dim backbone
    Eigen::MatrixXd U;  // vocab x dim LM head
    Eigen::VectorXd v;  // dim reward head

    Eigen::Index dim() const { return W.rows(); }
    Eigen::Index vocab() const { return E.rows(); }

    static ModelParams zeros(Eigen::Index dim, Eigen::Index vocab = kVocab) {
        return {Eigen::MatrixXd::Zero(vocab, dim), Eigen::MatrixXd::Zero(dim, dim),
                Eigen::MatrixXd::Zero(vocab, dim), Eigen::VectorXd::Zero(dim)};
    }

    static ModelParams gaussian(Eigen::Index dim, Rng& rng, double stddev, Eigen::Index vocab = kVocab) {
        ModelParams p = zeros(dim, vocab);
        auto fill = [&](auto& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
        };
        fill(p.E);
        fill(p.W);
        fill(p.U);
        fill(p.v);
        return p;
    }

    ModelParams& operator+=(const ModelParams& o) {
        E += o.E, W += o.W, U += o.U, v += o.v;
        return *this;
    }

    ModelParams& operator*=(double s) {
        E *= s, W *= s, U *= s, v *= s;
        return *this;
    }

    /// this += s * o
    void axpy(double s, const ModelParams& o) {
        E += s * o.E, W += s * o.W, U += s * o.U, v += s * o.v;
    }

    bool all_finite() const { return E.allFinite() && W.allFinite() && U.allFinite() && v.allFinite(); }

    /// Total number of scalars, in the fixed order E, W, U, v (column-major
    /// within each tensor). `at` addresses the same flat layout.
    Eigen::Index size() const { return E.size() + W.size() + U.size() + v.size(); }

    double& at(Eigen::Index i) {
        for (auto* m : {&E, &W, &U}) {
            if (i < m->size()) return m->data()[i];
            i -= m->size();
        }
        return v.data()[i];
    }
    double at(Eigen::Index i) const { return const_cast<ModelParams&>(*this).at(i); }

    bool operator==(const ModelParams& o) const {
        return E.rows() == o.E.rows() && W.rows() == o.W.rows() && E == o.E && W == o.W && U == o.U && v == o.v;
    }
};

/// Hidden states for the continuation of a context/continuation sequence.
/// The full sequence is BOS + bytes(context) + bytes(continuation); row j of
/// `hidden` is tanh(W * E[prev_j]) where prev_j is the token preceding the
/// j-th continuation byte.
struct ForwardTrace {
    std::vector<int> prev;     // conditioning token per continuation position
    std::vector<int> target;   // continuation byte per position
    Eigen::MatrixXd hidden;    // positions x dim

    Eigen::Index positions() const { return hidden.rows(); }
};

inline ForwardTrace forward(const ModelParams& params, std::string_view context, std::string_view continuation,
                            std::int64_t max_seq_len) {
    if (static_cast<std::int64_t>(context.size() + continuation.size()) > max_seq_len)
        throw SequenceTooLong("sequence of " + std::to_string(context.size() + continuation.size()) +
                              " bytes exceeds limit " + std::to_string(max_seq_len));
    ForwardTrace t;
    const auto n = static_cast<Eigen::Index>(continuation.size());
    t.prev.resize(static_cast<std::size_t>(n));
    t.target = encode(continuation);
    int last = context.empty() ? kBos : static_cast<unsigned char>(context.back());
    for (Eigen::Index j = 0; j < n; ++j) {
        t.prev[static_cast<std::size_t>(j)] = last;
        last = t.target[static_cast<std::size_t>(j)];
    }
    t.hidden.resize(n, params.dim());
    for (Eigen::Index j = 0; j < n; ++j)
        t.hidden.row(j) = (params.W * params.E.row(t.prev[static_cast<std::size_t>(j)]).transpose()).array().tanh().transpose();
    return t;
}

inline Eigen::VectorXd mean_hidden(const ForwardTrace& t) { return t.hidden.colwise().mean().transpose(); }

/// v . mean of the response's hidden states.
inline double reward(const ModelParams& params, std::string_view instruction, std::string_view response,
                     std::int64_t max_seq_len = 1024) {
    if (response.empty()) throw ValidationError("response", "reward needs at least one response byte");
    const ForwardTrace t = forward(params, instruction, response, max_seq_len);
    return params.v.dot(mean_hidden(t));
}

/// Row-wise log-softmax of the LM logits U * h_t.
inline Eigen::MatrixXd lm_log_softmax(const ModelParams& params, const ForwardTrace& t) {
    Eigen::MatrixXd logits = t.hidden * params.U.transpose();  // positions x vocab
    for (Eigen::Index j = 0; j < logits.rows(); ++j) {
        const double m = logits.row(j).maxCoeff();
        const double lse = m + std::log((logits.row(j).array() - m).exp().sum());
        logits.row(j).array() -= lse;
    }
    return logits;
}

/// log P(continuation_t | context, continuation_<t) for every position.
inline std::vector<double> lm_log_probs(const ModelParams& params, std::string_view context,
                                        std::string_view continuation, std::int64_t max_seq_len = 1024) {
    const ForwardTrace t = forward(params, context, continuation, max_seq_len);
    const Eigen::MatrixXd lp = lm_log_softmax(params, t);
    std::vector<double> out(static_cast<std::size_t>(t.positions()));
    for (Eigen::Index j = 0; j < t.positions(); ++j) out[static_cast<std::size_t>(j)] = lp(j, t.target[static_cast<std::size_t>(j)]);
    return out;
}

/// Mean negative log-likelihood of `continuation` per byte.
inline double mean_nll(const ModelParams& params, std::string_view context, std::string_view continuation,
                       std::int64_t max_seq_len = 1024) {
    const auto lp = lm_log_probs(params, context, continuation, max_seq_len);
    if (lp.empty()) return 0.0;
    double s = 0;
    for (double x : lp) s -= x;
    return s / static_cast<double>(lp.size());
}

} // namespace rmd::train
