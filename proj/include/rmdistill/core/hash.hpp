#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "rmdistill/core/errors.hpp"

namespace rmd {

using Digest = std::array<unsigned char, 32>;

inline Digest sha256(std::string_view data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw Error("sha256 failed");
    return out;
}

inline std::string to_hex(const Digest& d) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(d.size() * 2);
    for (unsigned char c : d) {
        s.push_back(kHex[c >> 4]);
        s.push_back(kHex[c & 0xF]);
    }
    return s;
}

inline std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_sha256_hex(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// First eight digest bytes, little-endian.
inline std::uint64_t digest_u64(std::string_view data) {
    const Digest d = sha256(data);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | d[static_cast<std::size_t>(i)];
    return v;
}

} // namespace rmd
