#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "rmdistill/core/hash.hpp"

namespace rmd {

/// Seeded, single-owner generator. Never share one across tasks; derive a
/// child with `fork` instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }

    /// Uniform real in [0, 1).
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }

    bool coin() { return uniform_int(0, 1) == 1; }

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

    /// Child generator whose seed depends only on (this seed, key), not on
    /// how many draws this generator has made.
    Rng fork(std::string_view key) const { return Rng(child_seed(seed_, key)); }

    static std::uint64_t child_seed(std::uint64_t seed, std::string_view key) {
        std::string material = std::to_string(seed);
        material.push_back('\x1f');
        material.append(key);
        return digest_u64(material);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

inline Rng rng_from_seed(std::uint64_t seed) { return Rng(seed); }

} // namespace rmd
