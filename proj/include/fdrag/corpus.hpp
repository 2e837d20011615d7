#pragma once

// Rule-based segmentation, anchor extraction and fact typing.
//
// "Salient" spans are approximated by three deterministic rules: maximal
// runs of capitalized words, numeric tokens, and longer content words. The
// typing rules below are stand-ins for a statistical NER and are kept in
// versioned word lists under data/.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/error.hpp"
#include "fdrag/lexicon.hpp"
#include "fdrag/text.hpp"

namespace fdrag {

enum class Granularity { paragraph, sentence };

inline std::string_view to_string(Granularity g) { return g == Granularity::paragraph ? "paragraph" : "sentence"; }

inline Granularity parse_granularity(std::string_view s) {
    if (s == "paragraph") return Granularity::paragraph;
    if (s == "sentence") return Granularity::sentence;
    throw InputError("unknown granularity: " + std::string(s));
}

enum class FactType { PERSON, ORG, LOC, DATE, NUMBER, TERM };

inline std::string_view to_string(FactType t) {
    switch (t) {
        case FactType::PERSON: return "PERSON";
        case FactType::ORG: return "ORG";
        case FactType::LOC: return "LOC";
        case FactType::DATE: return "DATE";
        case FactType::NUMBER: return "NUMBER";
        case FactType::TERM: return "TERM";
    }
    return "TERM";
}

inline FactType parse_fact_type(std::string_view s) {
    for (auto t : {FactType::PERSON, FactType::ORG, FactType::LOC, FactType::DATE, FactType::NUMBER, FactType::TERM})
        if (to_string(t) == s) return t;
    throw InputError("unknown fact type: " + std::string(s));
}

struct Document {
    std::string doc_id;
    std::string text;
    std::optional<std::string> client_hint;
};

struct TextUnit {
    std::string unit_id;
    Granularity granularity = Granularity::paragraph;
    std::string text;
    std::string doc_id;
    std::size_t position = 0;
    // Byte span in the source document. Paragraph spans tile the document
    // (the blank-line delimiters belong to the preceding paragraph); sentence
    // spans cover the sentence text only.
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct TypedFact {
    std::string span;
    FactType type = FactType::TERM;
    std::string source_unit_id;

    friend bool operator==(const TypedFact&, const TypedFact&) = default;
};

/// Normalized salient spans. Ordered for deterministic iteration.
using AnchorSet = std::set<std::string>;

struct Segmentation {
    std::vector<TextUnit> paragraphs;
    std::vector<TextUnit> sentences;
};

namespace detail {

inline bool is_closing(UChar32 c) {
    return c == '"' || c == '\'' || c == ')' || c == ']' || c == 0x201D || c == 0x2019 || c == 0xBB;
}

inline bool is_opening(UChar32 c) {
    return c == '"' || c == '\'' || c == '(' || c == '[' || c == 0x201C || c == 0x2018 || c == 0xAB;
}

/// Lowercased token with leading opening punctuation removed, for
/// abbreviation lookups ("(e.g." -> "e.g.").
inline std::string abbreviation_key(std::string_view raw) {
    std::size_t i = 0;
    while (i < raw.size()) {
        std::size_t j = i;
        if (!is_opening(text::next_cp(raw, j))) break;
        i = j;
    }
    std::string key = text::nfc_lower(raw.substr(i));
    while (!key.empty() && (key.back() == ',' || key.back() == ';' || key.back() == ':')) key.pop_back();
    return key;
}

/// A single letter followed by a period, e.g. the "J." in "J. Smith".
inline bool is_initial(std::string_view key) {
    if (key.size() < 2 || key.back() != '.') return false;
    std::size_t i = 0;
    UChar32 c = text::next_cp(key, i);
    return i == key.size() - 1 && u_isalpha(c);
}

inline bool guarded(std::string_view raw, const Lexicon& lx) {
    const std::string key = abbreviation_key(raw);
    return lx.abbreviations.contains(key) || is_initial(key);
}

/// Strips closing quotes/brackets and reports whether the token then ends in
/// sentence-final punctuation.
inline bool ends_with_terminal(std::string_view raw) {
    std::vector<UChar32> cps;
    for (std::size_t i = 0; i < raw.size();) cps.push_back(text::next_cp(raw, i));
    while (!cps.empty() && is_closing(cps.back())) cps.pop_back();
    if (cps.empty()) return false;
    const UChar32 c = cps.back();
    return c == '.' || c == '!' || c == '?';
}

inline std::vector<std::pair<std::size_t, std::size_t>> split_sentences(std::string_view s, const Lexicon& lx) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    const auto toks = text::tokenize(s);
    if (toks.empty()) return spans;
    std::size_t start = toks.front().begin;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        const auto& tok = toks[i];
        if (!ends_with_terminal(tok.raw) || guarded(tok.raw, lx)) continue;
        // next token must start (after opening quotes) with uppercase or digit
        std::string_view next = toks[i + 1].raw;
        std::size_t j = 0;
        UChar32 c = text::next_cp(next, j);
        while (is_opening(c) && j < next.size()) c = text::next_cp(next, j);
        if (!(text::is_upper(c) || text::is_digit(c))) continue;
        spans.emplace_back(start, tok.end);
        start = toks[i + 1].begin;
    }
    spans.emplace_back(start, toks.back().end);
    return spans;
}

struct Candidate {
    enum class Kind { run, number, term };
    Kind kind = Kind::term;
    std::string span;
    std::vector<std::string> words;  // normalized words of the span
    bool honorific = false;
};

inline bool is_numeric(std::string_view norm) {
    if (norm.empty() || !(norm.front() >= '0' && norm.front() <= '9')) return false;
    bool digit = false;
    for (char c : norm) {
        if (c >= '0' && c <= '9')
            digit = true;
        else if (c != ',' && c != '.')
            return false;
    }
    return digit;
}

inline bool has_alnum(std::string_view s) {
    for (std::size_t i = 0; i < s.size();)
        if (u_isalnum(text::next_cp(s, i))) return true;
    return false;
}

/// Applies the three anchor rules and returns candidates in text order
/// (runs first as they are found, then numbers and terms in token order).
inline std::vector<Candidate> analyze(std::string_view s, const Lexicon& lx) {
    struct Tok {
        std::string norm;
        bool cap = false;
        bool numeric = false;
        bool leading_break = false;
        bool trailing_break = false;
        bool sentence_start = false;
    };
    const auto raw = text::tokenize(s);
    std::vector<Tok> toks(raw.size());
    bool prev_ends = true;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto& t = toks[i];
        std::string_view r = raw[i].raw;
        t.norm = text::normalize_token(r);
        t.numeric = is_numeric(t.norm);
        std::size_t k = 0;
        UChar32 first = text::next_cp(r, k);
        t.leading_break = text::is_punct(first);
        while (text::is_punct(first) && k < r.size()) first = text::next_cp(r, k);
        t.cap = text::is_upper(first);
        const bool guard = guarded(r, lx);
        std::size_t last_pos = r.size();
        while (last_pos > 0 && (static_cast<unsigned char>(r[last_pos - 1]) & 0xC0) == 0x80) --last_pos;
        std::size_t lp = last_pos > 0 ? last_pos - 1 : 0;
        UChar32 last = text::next_cp(r, lp);
        t.trailing_break = text::is_punct(last) && !guard;
        t.sentence_start = prev_ends;
        prev_ends = ends_with_terminal(r) && !guard;
    }

    std::vector<Candidate> out;
    std::vector<bool> in_run(toks.size(), false);
    std::size_t i = 0;
    while (i < toks.size()) {
        const auto& t = toks[i];
        const bool can_start = t.cap && !t.numeric && !t.norm.empty() && !lx.stopwords.contains(t.norm) && has_alnum(t.norm);
        if (!can_start) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (!t.trailing_break) {
            while (j < toks.size() && toks[j].cap && !toks[j].numeric && !toks[j].leading_break && !toks[j].norm.empty() &&
                   !lx.honorifics.contains(toks[j].norm)) {
                const bool stop = toks[j].trailing_break;
                ++j;
                if (stop) break;
            }
        }
        std::size_t b = i;
        bool honorific = false;
        while (b < j && lx.honorifics.contains(toks[b].norm)) {
            ++b;
            honorific = true;
        }
        const bool accept = b < j && (!toks[i].sentence_start || j - i >= 2);
        if (accept) {
            Candidate c;
            c.kind = Candidate::Kind::run;
            c.honorific = honorific;
            for (std::size_t k = b; k < j; ++k) c.words.push_back(toks[k].norm);
            for (std::size_t k = 0; k < c.words.size(); ++k) c.span += (k ? " " : "") + c.words[k];
            out.push_back(std::move(c));
            for (std::size_t k = i; k < j; ++k) in_run[k] = true;
        }
        i = j;
    }
    for (std::size_t k = 0; k < toks.size(); ++k) {
        if (in_run[k] || toks[k].norm.empty()) continue;
        const auto& t = toks[k];
        if (t.numeric) {
            out.push_back({Candidate::Kind::number, t.norm, {t.norm}, false});
        } else if (!lx.stopwords.contains(t.norm) && has_alnum(t.norm) && text::cp_length(t.norm) >= 4) {
            out.push_back({Candidate::Kind::term, t.norm, {t.norm}, false});
        }
    }
    return out;
}

inline bool is_year(std::string_view norm) {
    if (norm.size() != 4) return false;
    for (char c : norm)
        if (c < '0' || c > '9') return false;
    return (norm[0] == '1') || (norm[0] == '2' && norm[1] == '0');
}

inline FactType classify(const Candidate& c, const Lexicon& lx) {
    if (c.kind == Candidate::Kind::number) return is_year(c.span) ? FactType::DATE : FactType::NUMBER;
    if (c.words.size() == 1 && lx.months.contains(c.words.front())) return FactType::DATE;
    if (c.kind == Candidate::Kind::run) {
        if (lx.org_suffixes.contains(c.words.back())) return FactType::ORG;
        if (lx.gazetteer.contains(c.span)) return FactType::LOC;
        if (c.honorific) return FactType::PERSON;
        if (c.words.size() >= 2 && (lx.given_names.contains(c.words.front()) || lx.person_suffixes.contains(c.words.back())))
            return FactType::PERSON;
        return FactType::TERM;
    }
    if (lx.gazetteer.contains(c.span)) return FactType::LOC;
    return FactType::TERM;
}

} // namespace detail

/// Splits documents into paragraph units (blank-line separated) and sentence
/// units. Throws InputError naming the document when its text is blank or
/// its id repeats.
inline Segmentation segment(const std::vector<Document>& docs, const Lexicon& lx = Lexicon::builtin()) {
    if (docs.empty()) throw InputError("segment: no documents");
    Segmentation seg;
    std::unordered_set<std::string> seen;
    for (const auto& doc : docs) {
        if (!seen.insert(doc.doc_id).second) throw InputError("duplicate doc_id: " + doc.doc_id);
        if (text::trim(doc.text).empty()) throw InputError("empty document: " + doc.doc_id);

        // content blocks = maximal runs of non-blank lines
        std::vector<std::pair<std::size_t, std::size_t>> blocks;
        std::string_view s = doc.text;
        std::size_t line_start = 0;
        std::optional<std::size_t> block_begin;
        std::size_t block_end = 0;
        while (line_start <= s.size()) {
            std::size_t nl = s.find('\n', line_start);
            std::size_t line_end = nl == std::string_view::npos ? s.size() : nl;
            std::string_view line = s.substr(line_start, line_end - line_start);
            const auto toks = text::tokenize(line);
            if (toks.empty()) {
                if (block_begin) blocks.emplace_back(*block_begin, block_end);
                block_begin.reset();
            } else {
                if (!block_begin) block_begin = line_start + toks.front().begin;
                block_end = line_start + toks.back().end;
            }
            if (nl == std::string_view::npos) break;
            line_start = nl + 1;
        }
        if (block_begin) blocks.emplace_back(*block_begin, block_end);

        std::size_t sentence_pos = 0;
        for (std::size_t p = 0; p < blocks.size(); ++p) {
            TextUnit para;
            para.granularity = Granularity::paragraph;
            para.doc_id = doc.doc_id;
            para.position = p;
            para.unit_id = doc.doc_id + "#p" + std::to_string(p);
            para.begin = p == 0 ? 0 : blocks[p].first;
            para.end = p + 1 < blocks.size() ? blocks[p + 1].first : s.size();
            para.text = std::string(s.substr(blocks[p].first, blocks[p].second - blocks[p].first));
            for (auto [b, e] : detail::split_sentences(para.text, lx)) {
                TextUnit sent;
                sent.granularity = Granularity::sentence;
                sent.doc_id = doc.doc_id;
                sent.position = sentence_pos;
                sent.unit_id = doc.doc_id + "#s" + std::to_string(sentence_pos);
                sent.begin = blocks[p].first + b;
                sent.end = blocks[p].first + e;
                sent.text = para.text.substr(b, e - b);
                seg.sentences.push_back(std::move(sent));
                ++sentence_pos;
            }
            seg.paragraphs.push_back(std::move(para));
        }
    }
    return seg;
}

inline AnchorSet extract_anchors(std::string_view s, const Lexicon& lx = Lexicon::builtin()) {
    AnchorSet out;
    for (auto& c : detail::analyze(s, lx)) out.insert(std::move(c.span));
    return out;
}

/// Types every anchor of every unit; one fact per distinct span per unit.
inline std::vector<TypedFact> extract_typed_facts(const std::vector<TextUnit>& units, const Lexicon& lx = Lexicon::builtin()) {
    std::vector<TypedFact> out;
    for (const auto& u : units) {
        std::set<std::string> seen;
        for (auto& c : detail::analyze(u.text, lx)) {
            if (!seen.insert(c.span).second) continue;
            out.push_back({c.span, detail::classify(c, lx), u.unit_id});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON-lines corpus input: {"doc_id": str, "text": str, "client": optional str}

inline std::vector<Document> parse_documents_jsonl(std::istream& in) {
    std::vector<Document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InputError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("doc_id") || !j["doc_id"].is_string() || !j.contains("text") || !j["text"].is_string())
            throw InputError("corpus line " + std::to_string(lineno) + ": expected string fields doc_id and text");
        Document d{j["doc_id"].get<std::string>(), j["text"].get<std::string>(), std::nullopt};
        if (j.contains("client") && j["client"].is_string()) d.client_hint = j["client"].get<std::string>();
        docs.push_back(std::move(d));
    }
    return docs;
}

inline std::vector<Document> read_documents(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus " + path.string());
    return parse_documents_jsonl(in);
}

} // namespace fdrag
