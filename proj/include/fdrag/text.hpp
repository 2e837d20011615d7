#pragma once

// UTF-8 text utilities: canonical normalization, code-point classification
// and whitespace tokenization with byte offsets.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>
#include <unicode/utf8.h>

#include "fdrag/error.hpp"

namespace fdrag::text {

/// Decodes the code point starting at byte offset `i` and advances `i`.
/// Ill-formed sequences decode to U+FFFD.
inline UChar32 next_cp(std::string_view s, std::size_t& i) {
    UChar32 c = 0;
    auto len = static_cast<std::int32_t>(s.size());
    auto pos = static_cast<std::int32_t>(i);
    U8_NEXT(s.data(), pos, len, c);
    i = static_cast<std::size_t>(pos);
    return c < 0 ? 0xFFFD : c;
}

inline void append_cp(std::string& out, UChar32 c) {
    char buf[4];
    std::int32_t n = 0;
    UBool err = false;
    U8_APPEND(reinterpret_cast<std::uint8_t*>(buf), n, 4, c, err);
    if (!err) out.append(buf, static_cast<std::size_t>(n));
}

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }
inline bool is_punct(UChar32 c) { return u_ispunct(c); }
inline bool is_upper(UChar32 c) { return u_isupper(c) || u_istitle(c); }
inline bool is_digit(UChar32 c) { return u_isdigit(c); }

inline std::size_t cp_length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size();) {
        next_cp(s, i);
        ++n;
    }
    return n;
}

inline bool is_ascii(std::string_view s) {
    for (unsigned char c : s)
        if (c >= 0x80) return false;
    return true;
}

/// NFC composition followed by root-locale lowercasing.
inline std::string nfc_lower(std::string_view s) {
    if (is_ascii(s)) {
        std::string out(s);
        for (auto& c : out)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return out;
    }
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<std::int32_t>(s.size())));
    icu::UnicodeString composed = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw Error("NFC normalization failed");
    composed.toLower(icu::Locale::getRoot());
    std::string out;
    composed.toUTF8String(out);
    return out;
}

/// Canonical form used for every comparison between spans: NFC, lowercase,
/// leading/trailing punctuation removed, whitespace runs collapsed to one space.
inline std::string normalize(std::string_view s) {
    const std::string lowered = nfc_lower(s);
    std::vector<UChar32> cps;
    cps.reserve(lowered.size());
    for (std::size_t i = 0; i < lowered.size();) cps.push_back(next_cp(lowered, i));

    std::size_t b = 0, e = cps.size();
    while (b < e && (is_space(cps[b]) || is_punct(cps[b]))) ++b;
    while (e > b && (is_space(cps[e - 1]) || is_punct(cps[e - 1]))) --e;

    std::string out;
    bool pending_space = false;
    for (std::size_t i = b; i < e; ++i) {
        if (is_space(cps[i])) {
            pending_space = true;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        append_cp(out, cps[i]);
    }
    return out;
}

/// Whitespace-delimited token with its byte span in the source string.
struct Token {
    std::string_view raw;
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        UChar32 c = next_cp(s, i);
        if (is_space(c)) continue;
        std::size_t end = i;
        while (i < s.size()) {
            std::size_t save = i;
            c = next_cp(s, i);
            if (is_space(c)) {
                i = save;
                break;
            }
            end = i;
        }
        out.push_back({s.substr(start, end - start), start, end});
    }
    return out;
}

/// Normalized word form: normalize() plus removal of a possessive 's.
inline std::string normalize_token(std::string_view raw) {
    std::string t = normalize(raw);
    for (std::string_view suffix : {std::string_view("'s"), std::string_view("\xE2\x80\x99s")}) {
        if (t.size() > suffix.size() && t.ends_with(suffix)) {
            t.resize(t.size() - suffix.size());
            t = normalize(t);
            break;
        }
    }
    return t;
}

/// Token-level normal form of a whole text; used for grounding checks so that
/// a span and its surrounding context are normalized the same way.
inline std::string normalize_words(std::string_view s) {
    std::string out;
    for (const auto& tok : tokenize(s)) {
        std::string w = normalize_token(tok.raw);
        if (w.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

/// True when `needle` occurs in `haystack` on word boundaries. Both are
/// expected to be in normalize_words() form.
inline bool contains_words(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    std::size_t pos = haystack.find(needle);
    while (pos != std::string_view::npos) {
        const bool left = pos == 0 || haystack[pos - 1] == ' ';
        const std::size_t r = pos + needle.size();
        const bool right = r == haystack.size() || haystack[r] == ' ';
        if (left && right) return true;
        pos = haystack.find(needle, pos + 1);
    }
    return false;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    while (b < s.size()) {
        std::size_t j = b;
        if (!is_space(next_cp(s, j))) break;
        b = j;
    }
    std::size_t e = s.size();
    while (e > b) {
        // step back one code point
        std::size_t k = e - 1;
        while (k > b && (static_cast<unsigned char>(s[k]) & 0xC0) == 0x80) --k;
        std::size_t j = k;
        if (!is_space(next_cp(s, j))) break;
        e = k;
    }
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t sp = s.find(' ', pos);
        if (sp == std::string_view::npos) sp = s.size();
        if (sp > pos) out.emplace_back(s.substr(pos, sp - pos));
        pos = sp + 1;
    }
    return out;
}

} // namespace fdrag::text
