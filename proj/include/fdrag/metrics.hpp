#pragma once

// Answer scoring and per-path metric aggregation.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/inference.hpp"

namespace fdrag {

/// Lowercase, punctuation removed, articles a/an/the dropped, whitespace
/// collapsed.
inline std::string normalize_answer(std::string_view s) {
    const std::string lower = text::nfc_lower(s);
    std::string stripped;
    for (std::size_t i = 0; i < lower.size();) {
        const std::size_t start = i;
        const UChar32 c = text::next_cp(lower, i);
        if (text::is_punct(c)) continue;
        if (text::is_space(c)) stripped.push_back(' ');
        else stripped.append(lower, start, i - start);
    }
    std::string out;
    for (const auto& w : text::split_words(text::trim(stripped))) {
        if (w.empty() || w == "a" || w == "an" || w == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

inline std::vector<std::string> answer_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (auto& w : text::split_words(normalize_answer(s)))
        if (!w.empty()) out.push_back(std::move(w));
    return out;
}

/// Harmonic mean of token-multiset precision and recall.
inline double token_f1(std::string_view prediction, std::string_view gold) {
    const auto p = answer_tokens(prediction), g = answer_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : g) ++counts[t];
    int common = 0;
    for (const auto& t : p)
        if (auto it = counts.find(t); it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(p.size());
    const double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

/// 1 when either normalized answer is a substring of the other.
inline double accuracy(std::string_view prediction, std::string_view gold) {
    const auto p = normalize_answer(prediction), g = normalize_answer(gold);
    if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
    return p.find(g) != std::string::npos || g.find(p) != std::string::npos ? 1.0 : 0.0;
}

enum class QueryLabel { local, cross_silo };

inline std::string_view to_string(QueryLabel l) { return l == QueryLabel::local ? "local" : "cross_silo"; }
inline QueryLabel parse_query_label(std::string_view s) {
    if (s == "local") return QueryLabel::local;
    if (s == "cross_silo") return QueryLabel::cross_silo;
    throw InputError("unknown query label: " + std::string(s));
}

struct MetricsSlice {
    std::size_t n = 0;
    double f1 = 0.0;
    double acc = 0.0;
    double fast_coverage = 0.0;
    double fast_acc = 0.0;  // conditional on the fast path; 0 when no query took it
    double slow_acc = 0.0;
    double mean_latency = 0.0;
    double avg_llm_calls = 0.0;

    /// coverage * fast_acc + (1 - coverage) * slow_acc - acc
    double decomposition_gap() const { return fast_coverage * fast_acc + (1.0 - fast_coverage) * slow_acc - acc; }
};

inline void to_json(nlohmann::json& j, const MetricsSlice& m) {
    j = {{"n", m.n},
         {"f1", m.f1},
         {"acc", m.acc},
         {"fast_coverage", m.fast_coverage},
         {"fast_acc", m.fast_acc},
         {"slow_acc", m.slow_acc},
         {"mean_latency", m.mean_latency},
         {"avg_llm_calls", m.avg_llm_calls}};
}

struct MetricsReport {
    MetricsSlice all;
    MetricsSlice local;
    MetricsSlice cross_silo;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) { j = {{"all", r.all}, {"local", r.local}, {"cross_silo", r.cross_silo}}; }

namespace detail {

struct SliceAccumulator {
    std::size_t n = 0, fast = 0;
    double f1 = 0, acc = 0, fast_acc = 0, slow_acc = 0, latency = 0, calls = 0;

    void add(const RouteResult& r, double f, double a) {
        ++n;
        f1 += f;
        acc += a;
        latency += r.latency_s;
        calls += r.llm_calls;
        if (r.path == RoutePath::fast) {
            ++fast;
            fast_acc += a;
        } else {
            slow_acc += a;
        }
    }

    MetricsSlice finish() const {
        MetricsSlice m;
        m.n = n;
        if (n == 0) return m;
        const double dn = static_cast<double>(n);
        m.f1 = f1 / dn;
        m.fast_coverage = static_cast<double>(fast) / dn;
        m.fast_acc = fast ? fast_acc / static_cast<double>(fast) : 0.0;
        m.slow_acc = n > fast ? slow_acc / static_cast<double>(n - fast) : 0.0;
        m.acc = acc / dn;
        m.mean_latency = latency / dn;
        m.avg_llm_calls = calls / dn;
        return m;
    }
};

} // namespace detail

/// Scores results against the gold answers of `queries` (matched by id).
/// Queries without a gold answer are skipped. Queries absent from `labels`
/// count as local.
inline MetricsReport compute_metrics(const std::vector<RouteResult>& results, const std::vector<Query>& queries,
                                     const std::map<std::string, QueryLabel>& labels = {}) {
    std::map<std::string, const Query*> by_id;
    for (const auto& q : queries) by_id[q.query_id] = &q;
    detail::SliceAccumulator all, local, cross;
    for (const auto& r : results) {
        auto it = by_id.find(r.query_id);
        if (it == by_id.end() || !it->second->gold_answer) continue;
        const auto& gold = *it->second->gold_answer;
        const double f = token_f1(r.answer, gold), a = accuracy(r.answer, gold);
        all.add(r, f, a);
        auto lab = labels.find(r.query_id);
        (lab != labels.end() && lab->second == QueryLabel::cross_silo ? cross : local).add(r, f, a);
    }
    return {all.finish(), local.finish(), cross.finish()};
}

} // namespace fdrag
