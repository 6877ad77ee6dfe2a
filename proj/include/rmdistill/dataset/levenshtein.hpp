#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rmd {

/// Decodes UTF-8 into Unicode scalar values. Bytes that do not start a
/// well-formed sequence map to U+DC80..U+DCFF (one per byte), so every byte
/// string has a lossless, distinct decoding.
inline std::vector<char32_t> utf8_scalars(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    const std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        const unsigned char b0 = p[i];
        std::size_t len = 0;
        char32_t cp = 0;
        char32_t min_cp = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2, cp = b0 & 0x1F, min_cp = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3, cp = b0 & 0x0F, min_cp = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4, cp = b0 & 0x07, min_cp = 0x10000;
        }
        bool ok = len != 0 && i + len <= n;
        for (std::size_t k = 1; ok && k < len; ++k) {
            if ((p[i + k] & 0xC0) != 0x80) ok = false;
            else cp = (cp << 6) | (p[i + k] & 0x3F);
        }
        if (ok && (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
        if (ok) {
            out.push_back(cp);
            i += len;
        } else {
            out.push_back(0xDC00 + b0);
            ++i;
        }
    }
    return out;
}

/// Unit-cost edit distance (insert, delete, substitute) over any two sequences.
template <typename Seq>
std::size_t levenshtein_seq(const Seq& a, const Seq& b) {
    if (a.size() < b.size()) return levenshtein_seq(b, a);
    // two-row DP over the shorter sequence
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Character-level Levenshtein distance between two UTF-8 strings, counted in
/// Unicode scalar values.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein_seq(utf8_scalars(a), utf8_scalars(b));
}

} // namespace rmd
