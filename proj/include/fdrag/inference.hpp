#pragma once

// Dual-path router: a memory lookup answers directly when the best match
// clears the threshold, otherwise retrieved items localize hyperedges whose
// evidence feeds one generator call.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/memory.hpp"

namespace fdrag {

struct RouteConfig {
    double delta = 0.8;
    double alpha = 0.7;
    int top_k = 5;

    void validate() const {
        if (!(delta >= 0.0) || !std::isfinite(delta)) throw InputError("route delta must be a finite value >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("route alpha must lie in [0, 1]");
        if (top_k < 1) throw InputError("route top_k must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const RouteConfig& c) { j = {{"delta", c.delta}, {"alpha", c.alpha}, {"top_k", c.top_k}}; }
inline void from_json(const nlohmann::json& j, RouteConfig& c) {
    c.delta = j.value("delta", c.delta);
    c.alpha = j.value("alpha", c.alpha);
    c.top_k = j.value("top_k", c.top_k);
    c.validate();
}

enum class RoutePath { fast, slow };
enum class RouteMode { dual, memorizer_only, cognizer_only };

inline std::string_view to_string(RoutePath p) { return p == RoutePath::fast ? "fast" : "slow"; }
inline std::string_view to_string(RouteMode m) {
    switch (m) {
    case RouteMode::dual: return "dual";
    case RouteMode::memorizer_only: return "memorizer_only";
    case RouteMode::cognizer_only: return "cognizer_only";
    }
    return "dual";
}
inline RouteMode parse_route_mode(std::string_view s) {
    if (s == "dual") return RouteMode::dual;
    if (s == "memorizer_only") return RouteMode::memorizer_only;
    if (s == "cognizer_only") return RouteMode::cognizer_only;
    throw InputError("unknown route mode: " + std::string(s));
}

struct Query {
    std::string query_id;
    std::string question;
    std::optional<std::string> gold_answer;
    std::optional<std::string> home_client;
    std::vector<std::string> gold_docs;
};

inline Query query_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("query_id") || !j["query_id"].is_string() || !j.contains("question") || !j["question"].is_string())
        throw InputError("query record needs string fields query_id and question");
    Query q{j["query_id"].get<std::string>(), j["question"].get<std::string>(), std::nullopt, std::nullopt, {}};
    if (j.contains("gold_answer") && j["gold_answer"].is_string()) q.gold_answer = j["gold_answer"].get<std::string>();
    if (j.contains("home_client") && j["home_client"].is_string()) q.home_client = j["home_client"].get<std::string>();
    if (j.contains("gold_docs")) q.gold_docs = j["gold_docs"].get<std::vector<std::string>>();
    return q;
}

inline std::vector<Query> read_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open query file " + path.string());
    std::vector<Query> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(query_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw InputError("query line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

struct RouteResult {
    std::string query_id;
    RoutePath path = RoutePath::slow;
    std::string answer;
    double best_score = 0.0;
    std::optional<std::string> matched_item;
    std::vector<std::string> retrieved_items;
    std::vector<std::string> localized_hyperedges;
    int llm_calls = 0;
    double latency_s = 0.0;
    std::optional<std::string> error;
};

inline nlohmann::json result_to_json(const RouteResult& r, bool with_latency = true) {
    nlohmann::json j{{"query_id", r.query_id},
                     {"path", std::string(to_string(r.path))},
                     {"answer", r.answer},
                     {"best_score", r.best_score},
                     {"matched_item", r.matched_item ? nlohmann::json(*r.matched_item) : nlohmann::json(nullptr)},
                     {"retrieved_items", r.retrieved_items},
                     {"localized_hyperedges", r.localized_hyperedges},
                     {"llm_calls", r.llm_calls}};
    if (with_latency) j["latency_s"] = r.latency_s;
    if (r.error) j["error"] = *r.error;
    return j;
}

inline RouteResult result_from_json(const nlohmann::json& j) {
    RouteResult r;
    r.query_id = j.at("query_id").get<std::string>();
    const auto path = j.at("path").get<std::string>();
    if (path != "fast" && path != "slow") throw InputError("result path must be fast or slow");
    r.path = path == "fast" ? RoutePath::fast : RoutePath::slow;
    r.answer = j.at("answer").get<std::string>();
    r.best_score = j.at("best_score").get<double>();
    if (j.contains("matched_item") && j["matched_item"].is_string()) r.matched_item = j["matched_item"].get<std::string>();
    r.retrieved_items = j.value("retrieved_items", std::vector<std::string>{});
    r.localized_hyperedges = j.value("localized_hyperedges", std::vector<std::string>{});
    r.llm_calls = j.value("llm_calls", 0);
    r.latency_s = j.value("latency_s", 0.0);
    if (j.contains("error") && j["error"].is_string()) r.error = j["error"].get<std::string>();
    return r;
}

inline void write_results(const std::vector<RouteResult>& results, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write results to " + path.string());
    for (const auto& r : results) out << result_to_json(r).dump() << '\n';
}

inline std::vector<RouteResult> read_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open result file " + path.string());
    std::vector<RouteResult> out;
    std::string line;
    while (std::getline(in, line))
        if (!text::trim(line).empty()) out.push_back(result_from_json(nlohmann::json::parse(line)));
    return out;
}

// ---------------------------------------------------------------------------
// Scoring

/// Dice overlap of two anchor sets; 0 when both are empty.
inline double cover(const AnchorSet& a, const AnchorSet& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& s : a) common += b.count(s);
    return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

inline double mix_score(double sim, double cov, double alpha) { return alpha * std::max(0.0, sim) + (1.0 - alpha) * cov; }

/// Query after embedding and anchor extraction.
struct PreparedQuery {
    Query query;
    Eigen::VectorXd embedding;
    AnchorSet anchors;
};

inline double score(const PreparedQuery& q, const QaMemoryItem& item, double alpha) {
    return mix_score(cosine(q.embedding, item.q_embedding), cover(q.anchors, item.anchors), alpha);
}

/// Scores of every bank item against the query, in bank order.
inline std::vector<double> score_all(const PreparedQuery& q, const MemoryBank& bank, double alpha) {
    std::vector<double> s(bank.size());
    if (bank.empty()) return s;
    if (q.embedding.size() != bank.embedding_dim)
        throw InputError("query embedding has dimension " + std::to_string(q.embedding.size()) + ", bank has " + std::to_string(bank.embedding_dim));
    const Eigen::VectorXd sims = bank.index * q.embedding;
    for (std::size_t i = 0; i < bank.size(); ++i)
        s[i] = mix_score(std::clamp(sims[static_cast<Eigen::Index>(i)], -1.0, 1.0), cover(q.anchors, bank.items[i].anchors), alpha);
    return s;
}

/// Bank positions ranked by score, ties broken by ascending item id.
inline std::vector<std::size_t> rank_items(const std::vector<double>& scores, const MemoryBank& bank) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return bank.items[a].id < bank.items[b].id;
    });
    return order;
}

struct Match {
    std::size_t position;
    double score;
};

/// Highest-scoring item; nullopt on an empty bank.
inline std::optional<Match> best_match(const std::vector<double>& scores, const MemoryBank& bank) {
    std::optional<Match> best;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!best || scores[i] > best->score || (scores[i] == best->score && bank.items[i].id < bank.items[best->position].id))
            best = Match{i, scores[i]};
    return best;
}

inline std::optional<Match> best_match(const PreparedQuery& q, const MemoryBank& bank, double alpha) {
    return best_match(score_all(q, bank, alpha), bank);
}

/// Support ids of the items in ranking order, deduplicated by first
/// appearance. Items owned by another client are skipped because their
/// hyperedges live on that client.
inline std::vector<std::string> localize(const std::vector<const QaMemoryItem*>& topk, const Hypergraph& graph,
                                         const std::optional<std::string>& local_client = std::nullopt) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto* it : topk) {
        if (it->client != local_client) continue;
        for (const auto& id : it->support_ids) {
            if (!graph.find(id)) throw InputError("memory item " + it->id + " references unknown hyperedge " + id);
            if (seen.insert(id).second) out.push_back(id);
        }
    }
    return out;
}

inline constexpr std::string_view kNoEvidenceAnswer = "insufficient evidence";

// ---------------------------------------------------------------------------
// Router

class Router {
public:
    Router(const MemoryBank& bank, const Hypergraph& graph, EmbeddingProvider& provider, LlmBackend& llm, RouteConfig cfg,
           std::optional<std::string> local_client = std::nullopt, const Lexicon& lx = Lexicon::builtin())
        : bank_(bank), graph_(graph), provider_(provider), llm_(llm), cfg_(cfg), local_client_(std::move(local_client)), lx_(lx) {
        cfg_.validate();
    }

    const RouteConfig& config() const { return cfg_; }
    const MemoryBank& bank() const { return bank_; }

    PreparedQuery prepare(const Query& q) const {
        return {q, provider_.embed_one(q.question), extract_anchors(q.question, lx_)};
    }

    /// Threshold used for `mode`; the forced modes pin it to an endpoint.
    double effective_delta(RouteMode mode) const {
        switch (mode) {
        case RouteMode::memorizer_only: return 0.0;
        case RouteMode::cognizer_only: return std::numeric_limits<double>::infinity();
        default: return cfg_.delta;
        }
    }

    RouteResult route(const Query& q, RouteMode mode = RouteMode::dual) const {
        const auto start = std::chrono::steady_clock::now();
        const auto pq = prepare(q);
        const auto scores = score_all(pq, bank_, cfg_.alpha);
        auto r = decide(pq, scores, effective_delta(mode));
        r.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

    std::vector<RouteResult> route_all(const std::vector<Query>& queries, RouteMode mode = RouteMode::dual, int workers = 1) const {
        std::vector<RouteResult> out(queries.size());
        parallel_for(queries.size(), workers, [&](std::size_t i) { out[i] = route(queries[i], mode); });
        return out;
    }

    /// Fast-path result from the best match. Requires a non-empty bank.
    RouteResult fast(const PreparedQuery& pq, const Match& m) const {
        RouteResult r;
        r.query_id = pq.query.query_id;
        r.path = RoutePath::fast;
        r.best_score = m.score;
        r.matched_item = bank_.items[m.position].id;
        r.answer = bank_.items[m.position].answer;
        return r;
    }

    /// Slow-path result: TopK retrieval, localization, one generator call.
    RouteResult slow(const PreparedQuery& pq, const std::vector<double>& scores) const {
        RouteResult r;
        r.query_id = pq.query.query_id;
        r.path = RoutePath::slow;
        const auto best = best_match(scores, bank_);
        r.best_score = best ? best->score : 0.0;
        if (best) r.matched_item = bank_.items[best->position].id;
        const auto ranked = rank_items(scores, bank_);
        std::vector<const QaMemoryItem*> topk;
        std::vector<QaPair> reference;
        for (std::size_t k = 0; k < ranked.size() && k < static_cast<std::size_t>(cfg_.top_k); ++k) {
            const auto& it = bank_.items[ranked[k]];
            topk.push_back(&it);
            reference.push_back({it.question, it.answer});
            r.retrieved_items.push_back(it.id);
        }
        r.localized_hyperedges = localize(topk, graph_, local_client_);
        std::vector<EvidenceUnit> evidence;
        for (const auto& id : r.localized_hyperedges) {
            const auto& e = graph_.at(id);
            evidence.push_back({e.id, e.contexts, e.facts});
        }
        GenRequest req;
        req.prompt = render_rag_prompt(pq.query.question, reference, evidence);
        req.tag = GenTag::rag_answer;
        req.max_tokens = 64;
        r.llm_calls = 1;
        try {
            r.answer = text::trim(llm_.generate(req).text);
        } catch (const Error& e) {
            r.error = e.what();
        }
        return r;
    }

    /// Applies the threshold to precomputed scores.
    RouteResult decide(const PreparedQuery& pq, const std::vector<double>& scores, double delta) const {
        const auto best = best_match(scores, bank_);
        if (best && best->score >= delta) return fast(pq, *best);
        return slow(pq, scores);
    }

private:
    const MemoryBank& bank_;
    const Hypergraph& graph_;
    EmbeddingProvider& provider_;
    LlmBackend& llm_;
    RouteConfig cfg_;
    std::optional<std::string> local_client_;
    const Lexicon& lx_;
};

} // namespace fdrag
