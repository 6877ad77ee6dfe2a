#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rmdistill/core/errors.hpp"
#include "rmdistill/core/hash.hpp"
#include "rmdistill/trainer/model.hpp"
#include "rmdistill/trainer/train.hpp"

namespace rmd::train {

inline constexpr const char* kCheckpointFormat = "rmdistill-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// SHA-256 over dim, vocab and the raw little-endian bytes of E, W, U, v.
inline std::string params_hash(const ModelParams& p) {
    std::string buf;
    auto put_u64 = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
    };
    put_u64(static_cast<std::uint64_t>(p.dim()));
    put_u64(static_cast<std::uint64_t>(p.vocab()));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        std::uint64_t bits = 0;
        const double x = p.at(i);
        std::memcpy(&bits, &x, sizeof bits);
        put_u64(bits);
    }
    return sha256_hex(buf);
}

namespace detail {

inline nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_rows(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw ParseError(std::string("checkpoint: ") + name + " has wrong row count");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(std::string("checkpoint: ") + name + " has wrong column count");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

} // namespace detail

/// JSON checkpoint: format tag, version, dim, vocab, seed, content hash and
/// the four tensors as row lists. Doubles print with round-trip precision.
inline std::string checkpoint_json(const ModelParams& p, std::uint64_t seed) {
    nlohmann::json v = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.v.size(); ++i) v.push_back(p.v(i));
    nlohmann::json j{{"format", kCheckpointFormat},
                     {"version", kCheckpointVersion},
                     {"dim", p.dim()},
                     {"vocab", p.vocab()},
                     {"seed", seed},
                     {"hash", params_hash(p)},
                     {"E", detail::matrix_rows(p.E)},
                     {"W", detail::matrix_rows(p.W)},
                     {"U", detail::matrix_rows(p.U)},
                     {"v", v}};
    return j.dump() + "\n";
}

struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    std::string hash;
};

inline Checkpoint parse_checkpoint(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.value("format", "") != kCheckpointFormat) throw ParseError("checkpoint: unknown format");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw ParseError("checkpoint: unsupported version " + j.at("version").dump());
        const auto dim = j.at("dim").get<Eigen::Index>();
        const auto vocab = j.at("vocab").get<Eigen::Index>();
        if (dim <= 0 || vocab <= 0) throw ParseError("checkpoint: bad shape");
        Checkpoint c;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.hash = j.at("hash").get<std::string>();
        c.params.E = detail::matrix_from_rows(j.at("E"), vocab, dim, "E");
        c.params.W = detail::matrix_from_rows(j.at("W"), dim, dim, "W");
        c.params.U = detail::matrix_from_rows(j.at("U"), vocab, dim, "U");
        const auto& v = j.at("v");
        if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != dim) throw ParseError("checkpoint: v has wrong size");
        c.params.v.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i) c.params.v(i) = v[static_cast<std::size_t>(i)].get<double>();
        if (params_hash(c.params) != c.hash) throw ParseError("checkpoint: content hash mismatch");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

/// step,loss,margin_term,nll_term,kl_term
inline std::string loss_csv(std::span<const StepLog> log) {
    std::string out = "step,loss,margin_term,nll_term,kl_term\n";
    for (const auto& r : log)
        out += fmt::format("{},{},{},{},{}\n", r.step, r.loss, r.margin_term, r.nll_term, r.kl_term);
    return out;
}

} // namespace rmd::train
