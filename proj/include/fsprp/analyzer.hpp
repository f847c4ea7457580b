#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fsprp/util/text.hpp"

namespace fsprp {

namespace detail {

inline bool is_separator(char32_t cp) {
    if (cp == util::kInvalidCodepoint) return true;
    if (cp < 0x80) {
        return !((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9'));
    }
    if (util::is_unicode_space(cp)) return true;
    if (cp <= 0x9F) return true;                                          // C1 controls
    if (cp >= 0xA1 && cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;  // Latin-1 punctuation/symbols
    if (cp == 0xD7 || cp == 0xF7) return true;                            // multiplication, division
    if (cp == 0x037E || cp == 0x0387) return true;                        // Greek question mark, ano teleia
    if (cp >= 0x055A && cp <= 0x055F) return true;                        // Armenian punctuation
    if (cp == 0x0589 || cp == 0x05BE || cp == 0x05C0 || cp == 0x05C3 || cp == 0x05F3 || cp == 0x05F4) return true;
    if (cp == 0x060C || cp == 0x061B || cp == 0x061F || cp == 0x06D4) return true;  // Arabic punctuation
    if (cp >= 0x2000 && cp <= 0x206F) return true;                        // General Punctuation
    if (cp >= 0x20A0 && cp <= 0x20CF) return true;                        // currency symbols
    if (cp >= 0x2190 && cp <= 0x2BFF) return true;                        // arrows, math operators, misc symbols
    if (cp >= 0x2E00 && cp <= 0x2E7F) return true;                        // Supplemental Punctuation
    if (cp >= 0x3000 && cp <= 0x303F) return true;                        // CJK symbols and punctuation
    if (cp >= 0xFE10 && cp <= 0xFE1F) return true;                        // vertical forms
    if (cp >= 0xFE30 && cp <= 0xFE6F) return true;                        // CJK compatibility / small forms
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;                        // fullwidth ASCII punctuation
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    if (cp == 0xFEFF || cp == 0xFFFD) return true;
    return false;
}

// Simple case folding for the scripts most common in IR collections:
// ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic and fullwidth Latin.
inline char32_t fold_case(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0x80) return cp;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x137 && cp % 2 == 0) return cp + 1;
    if (cp >= 0x139 && cp <= 0x148 && cp % 2 == 1) return cp + 1;
    if (cp >= 0x14A && cp <= 0x177 && cp % 2 == 0) return cp + 1;
    if (cp == 0x178) return 0xFF;
    if (cp == 0x179 || cp == 0x17B || cp == 0x17D) return cp + 1;
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 32;
    return cp;
}

}  // namespace detail

/// Lowercases and splits on Unicode whitespace and punctuation. No stemming,
/// no stopwords. Malformed UTF-8 bytes act as separators.
inline std::vector<std::string> analyze(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto [cp, len] = util::decode_utf8(text, pos);
        pos += len;
        if (detail::is_separator(cp)) {
            if (!current.empty()) terms.push_back(std::move(current));
            current.clear();
        } else {
            util::append_utf8(current, detail::fold_case(cp));
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

inline std::set<std::string> term_set(std::string_view text) {
    auto terms = analyze(text);
    return {std::make_move_iterator(terms.begin()), std::make_move_iterator(terms.end())};
}

}  // namespace fsprp
