#pragma once

// Randomized response over semantic candidate sets, applied to memory items
// before they leave a client.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/memory.hpp"

namespace fdrag {

inline constexpr double kEpsilonCap = 50.0;

struct LdpConfig {
    double epsilon = 1.0;
    int c = 5;
    std::set<FactType> sensitive_types{FactType::PERSON, FactType::ORG, FactType::LOC};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(epsilon > 0.0)) throw InputError("ldp epsilon must be > 0");
        if (c < 2) throw InputError("ldp candidate set size c must be >= 2");
    }
    double effective_epsilon() const { return std::min(epsilon, kEpsilonCap); }
};

inline void to_json(nlohmann::json& j, const LdpConfig& c) {
    std::vector<std::string> types;
    for (auto t : c.sensitive_types) types.emplace_back(to_string(t));
    j = {{"epsilon", c.epsilon}, {"c", c.c}, {"sensitive_types", types}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, LdpConfig& c) {
    c.epsilon = j.value("epsilon", c.epsilon);
    c.c = j.value("c", c.c);
    c.seed = j.value("seed", c.seed);
    if (j.contains("sensitive_types")) {
        c.sensitive_types.clear();
        for (const auto& t : j["sensitive_types"]) c.sensitive_types.insert(parse_fact_type(t.get<std::string>()));
    }
    c.validate();
}

/// P[keep] = e^eps / (e^eps + c - 1), evaluated without overflow.
inline double keep_probability(double epsilon, int c) {
    return 1.0 / (1.0 + static_cast<double>(c - 1) * std::exp(-std::min(epsilon, kEpsilonCap)));
}

/// Row i, column j: probability of reporting candidate j when the truth is i.
inline Eigen::MatrixXd mechanism_table(double epsilon, int c) {
    if (!(epsilon > 0.0) || c < 2) throw InputError("mechanism_table: need epsilon > 0 and c >= 2");
    const double keep = keep_probability(epsilon, c);
    const double shrink = std::exp(-std::min(epsilon, kEpsilonCap));
    const double other = shrink / (1.0 + static_cast<double>(c - 1) * shrink);
    Eigen::MatrixXd t = Eigen::MatrixXd::Constant(c, c, other);
    t.diagonal().setConstant(keep);
    return t;
}

/// max over (i, i', j) of P[j|i] / P[j|i'].
inline double max_likelihood_ratio(const Eigen::MatrixXd& table) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < table.cols(); ++j)
        for (Eigen::Index i = 0; i < table.rows(); ++i)
            for (Eigen::Index k = 0; k < table.rows(); ++k) worst = std::max(worst, table(i, j) / table(k, j));
    return worst;
}

// ---------------------------------------------------------------------------
// Vocabulary and candidates

/// Distinct fact spans by type, with their embeddings.
class TypedVocabulary {
public:
    TypedVocabulary() = default;

    TypedVocabulary(const std::map<FactType, std::set<std::string>>& entries, EmbeddingProvider& provider) {
        for (const auto& [type, spans] : entries) {
            if (spans.empty()) continue;
            auto& slot = by_type_[type];
            slot.spans.assign(spans.begin(), spans.end());
            slot.vectors = provider.embed_batch(slot.spans).values;
        }
    }

    /// Facts of every hyperedge, restricted to `types`.
    static TypedVocabulary from_graph(const Hypergraph& g, const std::set<FactType>& types, EmbeddingProvider& provider) {
        std::map<FactType, std::set<std::string>> entries;
        for (const auto& e : g.hyperedges)
            for (const auto& f : e.facts)
                if (types.contains(f.type)) entries[f.type].insert(f.span);
        return TypedVocabulary(entries, provider);
    }

    const std::vector<std::string>& spans(FactType t) const {
        static const std::vector<std::string> none;
        auto it = by_type_.find(t);
        return it == by_type_.end() ? none : it->second.spans;
    }

    /// Embedding matrix of spans(t), one row per entry.
    const Eigen::MatrixXd& vectors(FactType t) const {
        static const Eigen::MatrixXd none;
        auto it = by_type_.find(t);
        return it == by_type_.end() ? none : it->second.vectors;
    }

    std::size_t size(FactType t) const { return spans(t).size(); }

private:
    struct Slot {
        std::vector<std::string> spans;  // sorted
        Eigen::MatrixXd vectors;
    };
    std::map<FactType, Slot> by_type_;
};

struct CandidateSet {
    std::string original;
    std::vector<std::string> alternatives;

    std::size_t size() const { return alternatives.size() + 1; }
};

/// The c-1 same-type vocabulary entries nearest to `entity` by cosine,
/// ties broken lexicographically.
inline CandidateSet build_candidates(const std::string& entity, FactType type, const TypedVocabulary& vocab, int c,
                                     EmbeddingProvider& provider) {
    const auto& spans = vocab.spans(type);
    const auto& vecs = vocab.vectors(type);
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < spans.size(); ++i)
        if (spans[i] != entity) others.push_back(i);
    if (others.size() < static_cast<std::size_t>(c - 1))
        throw InputError("vocabulary for type " + std::string(to_string(type)) + " has " + std::to_string(others.size()) +
                         " alternatives to '" + entity + "', need " + std::to_string(c - 1));
    const Eigen::VectorXd q = provider.embed_one(entity);
    std::vector<std::pair<double, std::size_t>> scored;
    for (auto i : others) scored.emplace_back(cosine(q, vecs.row(static_cast<Eigen::Index>(i)).transpose()), i);
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return spans[a.second] < spans[b.second];
    });
    CandidateSet w{entity, {}};
    for (int k = 0; k < c - 1; ++k) w.alternatives.push_back(spans[scored[static_cast<std::size_t>(k)].second]);
    return w;
}

/// Keeps the original with probability e^eps/(e^eps+c-1), otherwise reports
/// a uniformly chosen alternative. Consumes exactly two draws.
inline std::string perturb(const CandidateSet& w, double epsilon, Rng& rng) {
    const double u = uniform_open(rng);
    const auto pick = uniform_index(rng, w.alternatives.size());
    if (u < keep_probability(epsilon, static_cast<int>(w.size()))) return w.original;
    return w.alternatives[pick];
}

// ---------------------------------------------------------------------------
// Anonymization

/// Replaces whole-token occurrences of any key of `subs` (normalized form) in
/// `s`. Leftmost-longest matching; replaced text is not rescanned. Leading
/// and trailing punctuation of the matched tokens is kept.
inline std::string substitute_spans(std::string_view s, const std::map<std::string, std::string>& subs) {
    if (subs.empty()) return std::string(s);
    const auto toks = text::tokenize(s);
    std::vector<std::string> norm;
    for (const auto& t : toks) norm.push_back(text::normalize_token(t.raw));
    std::size_t max_len = 1;
    for (const auto& [k, v] : subs) max_len = std::max(max_len, text::split_words(k).size());
    std::string out;
    std::size_t copied = 0;
    for (std::size_t i = 0; i < toks.size();) {
        const std::map<std::string, std::string>::const_iterator none = subs.end();
        auto hit = none;
        std::size_t hit_len = 0;
        std::string joined;
        for (std::size_t len = 1; len <= max_len && i + len <= toks.size(); ++len) {
            if (norm[i + len - 1].empty()) break;
            joined += (len > 1 ? " " : "") + norm[i + len - 1];
            if (auto it = subs.find(joined); it != subs.end()) hit = it, hit_len = len;
        }
        if (hit == none) {
            ++i;
            continue;
        }
        const auto& first = toks[i];
        const auto& last = toks[i + hit_len - 1];
        std::size_t lead = 0;
        for (std::size_t k = 0; k < first.raw.size();) {
            std::size_t j = k;
            if (!text::is_punct(text::next_cp(first.raw, j))) break;
            lead = k = j;
        }
        std::size_t trail = last.raw.size();
        while (trail > 0) {
            std::size_t k = trail - 1;
            while (k > 0 && (static_cast<unsigned char>(last.raw[k]) & 0xC0) == 0x80) --k;
            std::size_t j = k;
            if (!text::is_punct(text::next_cp(last.raw, j))) break;
            trail = k;
        }
        out.append(s.substr(copied, first.begin - copied));
        out.append(first.raw.substr(0, lead));
        out += hit->second;
        out.append(last.raw.substr(trail));
        copied = last.end;
        i += hit_len;
    }
    out.append(s.substr(copied));
    return out;
}

/// Opaque, stable stand-in for a client id.
inline std::string client_pseudonym(const std::string& client, std::uint64_t seed) {
    return "anon-" + sha256_hex(client + "#" + std::to_string(seed)).substr(0, 12);
}

/// One perturbed (item, span); kept in memory for auditing, never written.
struct Substitution {
    std::string item_id;  // id in the anonymized bank
    std::string original;
    std::string surrogate;
    FactType type = FactType::TERM;
};

struct LdpAudit {
    double epsilon = 0.0;
    int c = 0;
    std::size_t sensitive_spans = 0;
    std::size_t perturbed_spans = 0;
    std::size_t items = 0;
};

inline void to_json(nlohmann::json& j, const LdpAudit& a) {
    j = {{"epsilon", a.epsilon}, {"c", a.c}, {"sensitive_spans", a.sensitive_spans}, {"perturbed_spans", a.perturbed_spans}, {"items", a.items}};
}

struct AnonymizedBank {
    MemoryBank bank;
    LdpAudit audit;
    std::vector<Substitution> substitutions;
};

/// Perturbs every sensitive span of every item once and substitutes the draw
/// in question, answer, anchors and facts. Item ids and client fields carry a
/// pseudonym. Support ids are untouched.
inline AnonymizedBank anonymize(const MemoryBank& bank, const TypedVocabulary& vocab, const LdpConfig& cfg, EmbeddingProvider& provider,
                                int workers = 1) {
    cfg.validate();
    AnonymizedBank out;
    out.bank = bank;
    out.audit = {cfg.epsilon, cfg.c, 0, 0, bank.size()};
    std::vector<std::vector<Substitution>> per_item(bank.size());
    std::map<std::pair<std::string, FactType>, CandidateSet> candidate_cache;
    // Candidate sets are shared across items; build them up front so the
    // per-item pass is read-only.
    for (const auto& it : bank.items)
        for (const auto& f : it.facts)
            if (cfg.sensitive_types.contains(f.type) && !candidate_cache.contains({f.span, f.type}))
                candidate_cache.emplace(std::pair{f.span, f.type}, build_candidates(f.span, f.type, vocab, cfg.c, provider));
    parallel_for(bank.size(), workers, [&](std::size_t k) {
        auto& item = out.bank.items[k];
        std::map<std::string, FactType> spans;
        for (const auto& f : item.facts)
            if (cfg.sensitive_types.contains(f.type)) spans.emplace(f.span, f.type);
        Rng rng(derive_seed(cfg.seed, item.id));
        std::map<std::string, std::string> subs;
        for (const auto& [span, type] : spans) {
            const auto draw = perturb(candidate_cache.at({span, type}), cfg.effective_epsilon(), rng);
            per_item[k].push_back({"", span, draw, type});
            if (draw != span) subs[span] = draw;
        }
        item.question = substitute_spans(item.question, subs);
        item.answer = substitute_spans(item.answer, subs);
        AnchorSet anchors;
        for (const auto& a : item.anchors) anchors.insert(substitute_spans(a, subs));
        item.anchors = std::move(anchors);
        for (auto& f : item.facts) f.span = substitute_spans(f.span, subs);
        if (item.client) {
            const auto pseudo = client_pseudonym(*item.client, cfg.seed);
            const auto colon = item.id.find(':');
            item.id = pseudo + ":" + (colon == std::string::npos ? item.id : item.id.substr(colon + 1));
            item.client = pseudo;
        }
        for (auto& s : per_item[k]) s.item_id = item.id;
    });
    for (auto& subs : per_item) {
        out.audit.sensitive_spans += subs.size();
        for (auto& s : subs) {
            out.audit.perturbed_spans += s.original != s.surrogate;
            out.substitutions.push_back(std::move(s));
        }
    }
    embed_questions(out.bank, provider);
    return out;
}

inline std::filesystem::path audit_path(const std::filesystem::path& bank_path) {
    auto p = bank_path;
    p += ".ldp.json";
    return p;
}

/// Writes the anonymized bank and its audit sidecar.
inline void save_anonymized(const AnonymizedBank& a, const std::filesystem::path& path) {
    save_bank(a.bank, path);
    std::ofstream out(audit_path(path), std::ios::binary);
    if (!out) throw InputError("cannot write audit sidecar for " + path.string());
    out << nlohmann::json(a.audit).dump(2) << '\n';
}

} // namespace fdrag
