#pragma once

// Simulated multi-client deployment: corpus partitioning, per-client builds,
// anonymized exports through a JSON boundary, server-side fusion and
// evaluation rounds.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/metrics.hpp"
#include "fdrag/pipeline.hpp"
#include "fdrag/privacy.hpp"

namespace fdrag {

inline std::string client_name(int k) { return "c" + std::to_string(k); }

struct PartitionConfig {
    int clients = 5;
    double cross_silo_target = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (clients < 1) throw InputError("partition needs at least one client");
        if (!(cross_silo_target >= 0.0 && cross_silo_target <= 1.0)) throw InputError("cross_silo_target must lie in [0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const PartitionConfig& c) {
    j = {{"clients", c.clients}, {"cross_silo_target", c.cross_silo_target}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, PartitionConfig& c) {
    c.clients = j.value("clients", c.clients);
    c.cross_silo_target = j.value("cross_silo_target", c.cross_silo_target);
    c.seed = j.value("seed", c.seed);
    c.validate();
}

struct PartitionSpec {
    int clients = 0;
    std::uint64_t seed = 0;
    double target = 0.0;
    double achieved = 0.0;
    bool target_met = true;
    std::map<std::string, std::string> assignment;  // doc id -> client id
    std::map<std::string, std::string> home;        // query id -> client id
    std::map<std::string, QueryLabel> labels;

    std::vector<std::string> client_ids() const {
        std::vector<std::string> out;
        for (int k = 0; k < clients; ++k) out.push_back(client_name(k));
        return out;
    }

    std::vector<Document> slice(const std::vector<Document>& docs, const std::string& client) const {
        std::vector<Document> out;
        for (const auto& d : docs)
            if (assignment.at(d.doc_id) == client) out.push_back(d);
        return out;
    }
};

inline void to_json(nlohmann::json& j, const PartitionSpec& s) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [q, l] : s.labels) labels[q] = std::string(to_string(l));
    j = {{"clients", s.clients}, {"seed", s.seed},         {"target", s.target}, {"achieved", s.achieved}, {"target_met", s.target_met},
         {"assignment", s.assignment}, {"home", s.home}, {"labels", labels}};
}
inline void from_json(const nlohmann::json& j, PartitionSpec& s) {
    s.clients = j.at("clients").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.target = j.value("target", 0.0);
    s.achieved = j.value("achieved", 0.0);
    s.target_met = j.value("target_met", true);
    s.assignment = j.at("assignment").get<std::map<std::string, std::string>>();
    s.home = j.at("home").get<std::map<std::string, std::string>>();
    s.labels.clear();
    for (const auto& [q, l] : j.at("labels").items()) s.labels[q] = parse_query_label(l.get<std::string>());
}

namespace detail {

/// Size-balanced slots: every client ends with floor(D/K) or ceil(D/K) docs.
class BalancedSlots {
public:
    BalancedSlots(std::size_t docs, int clients)
        : size_(static_cast<std::size_t>(clients), 0), base_(docs / static_cast<std::size_t>(clients)),
          extra_(docs % static_cast<std::size_t>(clients)) {}

    bool can_take(int k) const {
        const auto s = size_[static_cast<std::size_t>(k)];
        return s < base_ || (s == base_ && ceil_used_ < extra_);
    }

    void take(int k) {
        auto& s = size_[static_cast<std::size_t>(k)];
        if (s == base_) ++ceil_used_;
        ++s;
    }

    /// Least-loaded client with room outside `avoid`, lowest index on ties;
    /// ignores `avoid` when every client with room is in it.
    int least_loaded(const std::set<int>& avoid = {}) const {
        int best = -1;
        for (int pass = 0; pass < 2 && best < 0; ++pass)
            for (int k = 0; k < static_cast<int>(size_.size()); ++k) {
                if (!can_take(k) || (pass == 0 && avoid.contains(k))) continue;
                if (best < 0 || size_[static_cast<std::size_t>(k)] < size_[static_cast<std::size_t>(best)]) best = k;
            }
        return best;
    }

private:
    std::vector<std::size_t> size_;
    std::size_t base_;
    std::size_t extra_;
    std::size_t ceil_used_ = 0;
};

inline std::vector<std::string> distinct_gold(const Query& q) {
    std::vector<std::string> out;
    for (const auto& d : q.gold_docs)
        if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
    return out;
}

} // namespace detail

/// Computes home clients and labels from an assignment.
inline void label_queries(PartitionSpec& spec, const std::vector<Query>& queries) {
    spec.home.clear();
    spec.labels.clear();
    std::size_t cross = 0;
    for (const auto& q : queries) {
        const std::string home = q.home_client ? *q.home_client : spec.assignment.at(q.gold_docs.front());
        bool local = true;
        for (const auto& d : q.gold_docs) local = local && spec.assignment.at(d) == home;
        spec.home[q.query_id] = home;
        spec.labels[q.query_id] = local ? QueryLabel::local : QueryLabel::cross_silo;
        cross += !local;
    }
    spec.achieved = queries.empty() ? 0.0 : static_cast<double>(cross) / static_cast<double>(queries.size());
    spec.target_met = std::abs(spec.achieved - spec.target) <= 0.05 + 1e-12;
}

/// Seeded greedy assignment. A number of multi-document queries matching the
/// target fraction are spread across clients first; the remaining queries
/// keep their documents together where capacity allows; leftover documents
/// fill the least-loaded clients. Documents carrying client hints are taken
/// as a fixed assignment instead.
inline PartitionSpec partition(const std::vector<Document>& docs, const std::vector<Query>& queries, const PartitionConfig& cfg) {
    cfg.validate();
    std::set<std::string> doc_ids;
    for (const auto& d : docs) doc_ids.insert(d.doc_id);
    for (const auto& q : queries) {
        if (q.gold_docs.empty()) throw InputError("query " + q.query_id + " lists no gold documents");
        for (const auto& d : q.gold_docs)
            if (!doc_ids.contains(d)) throw InputError("query " + q.query_id + " references unknown document " + d);
        if (q.home_client) {
            bool ok = false;
            for (int k = 0; k < cfg.clients; ++k) ok = ok || *q.home_client == client_name(k);
            if (!ok) throw InputError("query " + q.query_id + " has unknown home client " + *q.home_client);
        }
    }
    PartitionSpec spec;
    spec.clients = cfg.clients;
    spec.seed = cfg.seed;
    spec.target = cfg.cross_silo_target;
    std::size_t hinted = 0;
    for (const auto& d : docs) hinted += d.client_hint.has_value();
    if (hinted > 0) {
        if (hinted != docs.size()) throw InputError("client hints must be given for every document or none");
        for (const auto& d : docs) {
            bool ok = false;
            for (int k = 0; k < cfg.clients; ++k) ok = ok || *d.client_hint == client_name(k);
            if (!ok) throw InputError("document " + d.doc_id + " has unknown client hint " + *d.client_hint);
            spec.assignment[d.doc_id] = *d.client_hint;
        }
        label_queries(spec, queries);
        return spec;
    }
    Rng rng(derive_seed(cfg.seed, "partition"));
    detail::BalancedSlots slots(docs.size(), cfg.clients);
    std::map<std::string, int> where;
    const auto assign = [&](const std::string& doc, int k) {
        where[doc] = k;
        slots.take(k);
    };

    std::vector<const Query*> order;
    for (const auto& q : queries) order.push_back(&q);
    shuffle(order, rng);
    std::vector<const Query*> multi, rest;
    for (const auto* q : order) (detail::distinct_gold(*q).size() >= 2 ? multi : rest).push_back(q);
    const auto want = static_cast<std::size_t>(std::llround(cfg.cross_silo_target * static_cast<double>(queries.size())));
    const std::size_t n_cross = cfg.clients > 1 ? std::min(want, multi.size()) : 0;

    for (std::size_t i = 0; i < n_cross; ++i) {
        std::set<int> used;
        for (const auto& d : detail::distinct_gold(*multi[i]))
            if (where.contains(d)) used.insert(where[d]);
        for (const auto& d : detail::distinct_gold(*multi[i])) {
            if (where.contains(d)) continue;
            const int k = slots.least_loaded(used);
            assign(d, k);
            used.insert(k);
        }
    }
    std::vector<const Query*> keep_together(multi.begin() + static_cast<std::ptrdiff_t>(n_cross), multi.end());
    keep_together.insert(keep_together.end(), rest.begin(), rest.end());
    for (const auto* q : keep_together) {
        int target = -1;
        for (const auto& d : detail::distinct_gold(*q))
            if (where.contains(d)) {
                target = where[d];
                break;
            }
        for (const auto& d : detail::distinct_gold(*q)) {
            if (where.contains(d)) continue;
            if (target < 0 || !slots.can_take(target)) target = slots.least_loaded();
            assign(d, target);
        }
    }
    std::vector<std::string> leftover;
    for (const auto& d : docs)
        if (!where.contains(d.doc_id)) leftover.push_back(d.doc_id);
    shuffle(leftover, rng);
    for (const auto& d : leftover) assign(d, slots.least_loaded());

    for (const auto& [d, k] : where) spec.assignment[d] = client_name(k);
    label_queries(spec, queries);
    return spec;
}

// ---------------------------------------------------------------------------
// Clients

struct ClientState {
    std::string client_id;
    std::vector<Document> docs;
    Pipeline pipeline;
    MemoryBank fused;  // own bank plus foreign items after fusion
};

inline ClientState client_build(const std::string& client_id, std::vector<Document> docs, const TrainConfig& train, QaGenerator& gen,
                                EmbeddingProvider& provider, BankBuildOptions opt = {}) {
    if (docs.empty()) throw InputError("client " + client_id + " has no documents");
    opt.client = client_id;
    ClientState c;
    c.client_id = client_id;
    c.docs = std::move(docs);
    c.pipeline = build_pipeline(c.docs, train, gen, provider, opt);
    c.fused = c.pipeline.bank;
    return c;
}

/// Builds every client of `spec` concurrently.
inline std::vector<ClientState> build_clients(const std::vector<Document>& docs, const PartitionSpec& spec, const TrainConfig& train,
                                              QaGenerator& gen, EmbeddingProvider& provider, const BankBuildOptions& opt = {},
                                              int workers = 1) {
    const auto ids = spec.client_ids();
    std::vector<ClientState> out(ids.size());
    parallel_for(ids.size(), workers, [&](std::size_t k) { out[k] = client_build(ids[k], spec.slice(docs, ids[k]), train, gen, provider, opt); });
    return out;
}

// ---------------------------------------------------------------------------
// Export boundary

inline constexpr int kExportSchemaVersion = 1;

struct ExportOptions {
    std::optional<LdpConfig> ldp;  // absent: items leave unperturbed
    std::uint64_t seed = 0;        // pseudonym salt
};

/// Item with the client field replaced by a pseudonym; used when no
/// perturbation is requested.
inline MemoryBank pseudonymize(const MemoryBank& bank, std::uint64_t seed) {
    MemoryBank out = bank;
    for (auto& it : out.items) {
        if (!it.client) continue;
        const auto pseudo = client_pseudonym(*it.client, seed);
        const auto colon = it.id.find(':');
        it.id = pseudo + ":" + (colon == std::string::npos ? it.id : it.id.substr(colon + 1));
        it.client = pseudo;
    }
    out.reindex();
    return out;
}

struct ClientExport {
    std::string client_id;
    std::string payload;  // serialized JSON
    std::optional<LdpAudit> audit;
};

inline ClientExport make_export(const ClientState& c, const ExportOptions& opt, EmbeddingProvider& provider) {
    ClientExport ex;
    ex.client_id = c.client_id;
    const auto pseudo = client_pseudonym(c.client_id, opt.ldp ? opt.ldp->seed : opt.seed);
    MemoryBank shared;
    nlohmann::json ldp = nullptr;
    if (opt.ldp) {
        const auto& cfg = *opt.ldp;
        const auto vocab = TypedVocabulary::from_graph(c.pipeline.graph, cfg.sensitive_types, provider);
        // Item ids carry the client prefix, so per-item draws differ across clients.
        auto anon = anonymize(c.pipeline.bank, vocab, cfg, provider);
        shared = std::move(anon.bank);
        ex.audit = anon.audit;
        ldp = {{"epsilon", cfg.epsilon}, {"c", cfg.c}};
    } else {
        shared = pseudonymize(c.pipeline.bank, opt.seed);
    }
    auto j = bank_to_json(shared);
    j["schema_version"] = kExportSchemaVersion;
    j["client_pseudonym"] = pseudo;
    j["ldp"] = ldp;
    ex.payload = j.dump();
    return ex;
}

/// Parses and validates an upload; throws InputError on schema violations.
inline MemoryBank read_export(const std::string& payload, EmbeddingProvider& provider, std::string* pseudonym = nullptr) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(payload);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("export payload is not JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("schema_version", -1) != kExportSchemaVersion) throw InputError("export payload has wrong schema_version");
    if (!j.contains("client_pseudonym") || !j["client_pseudonym"].is_string()) throw InputError("export payload lacks client_pseudonym");
    if (!j.contains("ldp") || !(j["ldp"].is_null() || (j["ldp"].is_object() && j["ldp"].contains("epsilon") && j["ldp"].contains("c"))))
        throw InputError("export payload has malformed ldp block");
    const auto pseudo = j["client_pseudonym"].get<std::string>();
    MemoryBank bank;
    try {
        bank = bank_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("export payload items malformed: ") + e.what());
    }
    for (const auto& it : bank.items)
        if (it.client != pseudo) throw InputError("export item " + it.id + " is not attributed to the uploading client");
    embed_questions(bank, provider);
    if (pseudonym) *pseudonym = pseudo;
    return bank;
}

struct Upload {
    std::string pseudonym;
    MemoryBank bank;
};

struct GlobalBank {
    MemoryBank bank;
    std::vector<std::string> origin;  // uploader pseudonym per item
    std::size_t uploaded_items = 0;
};

/// Union of uploads in order; later exact duplicates of a normalized
/// (question, answer) pair are dropped.
inline GlobalBank fuse(const std::vector<Upload>& uploads, int embedding_dim) {
    GlobalBank g;
    g.bank.embedding_dim = embedding_dim;
    std::set<std::string> seen;
    std::set<std::string> ids;
    for (const auto& up : uploads)
        for (const auto& it : up.bank.items) {
            ++g.uploaded_items;
            const auto key = text::normalize_words(it.question) + '\x1f' + text::normalize_words(it.answer);
            if (!seen.insert(key).second || !ids.insert(it.id).second) continue;
            g.bank.items.push_back(it);
            g.origin.push_back(up.pseudonym);
        }
    g.bank.reindex();
    return g;
}

struct FederationResult {
    GlobalBank global;
    std::vector<ClientExport> exports;
    std::vector<std::string> rejected;  // "client: reason"
};

/// Exports every client, fuses the accepted uploads and installs each
/// client's fused view: its own bank plus global items uploaded by others.
inline FederationResult federate(std::vector<ClientState>& clients, const ExportOptions& opt, EmbeddingProvider& provider, int workers = 1) {
    FederationResult out;
    out.exports.resize(clients.size());
    parallel_for(clients.size(), workers, [&](std::size_t k) { out.exports[k] = make_export(clients[k], opt, provider); });
    std::vector<Upload> uploads;
    std::map<std::string, std::string> pseudonym_of;
    for (const auto& ex : out.exports) {
        try {
            Upload up;
            up.bank = read_export(ex.payload, provider, &up.pseudonym);
            pseudonym_of[ex.client_id] = up.pseudonym;
            uploads.push_back(std::move(up));
        } catch (const InputError& e) {
            out.rejected.push_back(ex.client_id + ": " + e.what());
        }
    }
    out.global = fuse(uploads, provider.dim());
    for (auto& c : clients) {
        c.fused = c.pipeline.bank;
        c.fused.embedding_dim = provider.dim();
        const auto own = pseudonym_of.find(c.client_id);
        for (std::size_t i = 0; i < out.global.bank.size(); ++i)
            if (own == pseudonym_of.end() || out.global.origin[i] != own->second) c.fused.items.push_back(out.global.bank.items[i]);
        c.fused.reindex();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data-locality check

struct Leak {
    std::string client_id;  // owner of the payload
    std::string doc_id;
    std::size_t offset = 0;
};

/// Every `window`-byte substring of every document that appears verbatim in
/// any payload.
inline std::vector<Leak> leak_check(const std::vector<ClientExport>& exports, const std::vector<Document>& docs, std::size_t window = 64) {
    std::vector<Leak> leaks;
    for (const auto& ex : exports) {
        std::unordered_set<std::string_view> grams;
        const std::string_view p = ex.payload;
        for (std::size_t i = 0; i + window <= p.size(); ++i) grams.insert(p.substr(i, window));
        for (const auto& d : docs) {
            const std::string_view t = d.text;
            for (std::size_t i = 0; i + window <= t.size(); ++i)
                if (grams.contains(t.substr(i, window))) {
                    leaks.push_back({ex.client_id, d.doc_id, i});
                    break;
                }
        }
    }
    return leaks;
}

// ---------------------------------------------------------------------------
// Evaluation round

struct RoundResult {
    std::vector<RouteResult> results;  // query order
    MetricsReport metrics;
};

/// Routes every query at its home client, against the fused view when
/// `use_fusion` is set and the local bank otherwise.
inline RoundResult run_round(const std::vector<ClientState>& clients, bool use_fusion, const std::vector<Query>& queries, const PartitionSpec& spec,
                             const RouteConfig& route, LlmBackend& llm, EmbeddingProvider& provider, int workers = 1) {
    std::map<std::string, std::unique_ptr<Router>> routers;
    for (const auto& c : clients)
        routers[c.client_id] = std::make_unique<Router>(use_fusion ? c.fused : c.pipeline.bank, c.pipeline.graph, provider, llm, route, c.client_id);
    RoundResult out;
    out.results.resize(queries.size());
    parallel_for(queries.size(), workers, [&](std::size_t i) {
        const auto& home = spec.home.at(queries[i].query_id);
        auto it = routers.find(home);
        if (it == routers.end()) throw InputError("query " + queries[i].query_id + " has no client " + home);
        out.results[i] = it->second->route(queries[i]);
    });
    out.metrics = compute_metrics(out.results, queries, spec.labels);
    return out;
}

} // namespace fdrag
