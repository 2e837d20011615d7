#pragma once

// Hyperedge-grounded QA memory: generators, cross-hyperedge composition,
// the memory bank and its on-disk format.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fdrag/embedding.hpp"
#include "fdrag/hypergraph.hpp"
#include "fdrag/llm.hpp"
#include "fdrag/parallel.hpp"
#include "fdrag/templates.hpp"

namespace fdrag {

struct QaMemoryItem {
    std::string id;
    std::string question;
    std::string answer;
    std::vector<std::string> support_ids;  // origin first
    std::string origin;
    std::optional<std::string> client;
    AnchorSet anchors;
    std::vector<TypedFact> facts;  // facts of the supporting hyperedges
    Eigen::VectorXd q_embedding;
};

class MemoryBank {
public:
    std::vector<QaMemoryItem> items;
    Eigen::MatrixXd index;  // row i = items[i].q_embedding
    int embedding_dim = 0;
    std::string provenance;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }

    const QaMemoryItem* find(std::string_view id) const {
        for (const auto& it : items)
            if (it.id == id) return &it;
        return nullptr;
    }

    /// Rebuilds `index` from the item embeddings and checks id uniqueness.
    void reindex() {
        std::set<std::string> ids;
        index.resize(static_cast<Eigen::Index>(items.size()), embedding_dim);
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!ids.insert(items[i].id).second) throw InputError("duplicate memory item id " + items[i].id);
            if (items[i].q_embedding.size() != embedding_dim) throw InputError("item " + items[i].id + " has wrong embedding size");
            index.row(static_cast<Eigen::Index>(i)) = items[i].q_embedding.transpose();
        }
    }

    std::size_t fact_level_count() const {
        return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return i.support_ids.size() == 1; }));
    }
    std::size_t multi_hop_count() const { return size() - fact_level_count(); }
};

// ---------------------------------------------------------------------------
// Generators

class QaGenerator {
public:
    virtual ~QaGenerator() = default;
    virtual std::vector<QaPair> generate(const GenerationInput& in) = 0;
    virtual std::string name() const = 0;
};

class TemplateGenerator final : public QaGenerator {
public:
    explicit TemplateGenerator(const TemplateTable& table = TemplateTable::builtin()) : table_(table) {}
    std::vector<QaPair> generate(const GenerationInput& in) override { return run_templates(table_, in); }
    std::string name() const override { return "template/v" + std::to_string(table_.version); }

private:
    const TemplateTable& table_;
};

/// Renders the QA synthesis prompt, makes one backend call and parses the
/// "Question:/Answer:" blocks, keeping at most the budget.
class LlmGenerator final : public QaGenerator {
public:
    explicit LlmGenerator(LlmBackend& backend) : backend_(backend) {}

    std::vector<QaPair> generate(const GenerationInput& in) override {
        GenRequest req;
        req.prompt = render_qa_prompt(in.facts, in.contexts, question_type_hint(in.kind, in.budget));
        req.tag = GenTag::qa_synthesis;
        ++stats.calls;
        const auto resp = backend_.generate(req);
        stats.output_tokens += static_cast<std::size_t>(resp.output_tokens);
        auto pairs = parse_qa_output(resp.text);
        if (static_cast<int>(pairs.size()) > in.budget) pairs.resize(static_cast<std::size_t>(std::max(0, in.budget)));
        return pairs;
    }

    std::string name() const override { return "llm"; }

    GenerationStats stats;

private:
    LlmBackend& backend_;
};

// ---------------------------------------------------------------------------
// Construction

struct BankBuildOptions {
    int per_edge_budget = 3;       // R_m
    double pair_cap_factor = 2.0;  // cross-edge pairs <= factor * |E|
    std::optional<std::string> client;
    std::size_t workers = 1;
};

inline void to_json(nlohmann::json& j, const BankBuildOptions& o) {
    j = {{"per_edge_budget", o.per_edge_budget}, {"pair_cap_factor", o.pair_cap_factor}};
    j["client"] = o.client ? nlohmann::json(*o.client) : nlohmann::json(nullptr);
}

struct BankBuildReport {
    std::size_t discarded_ungrounded = 0;
    std::size_t generator_failures = 0;
    std::size_t pairs_offered = 0;
    std::vector<std::string> warnings;
};

struct BuiltBank {
    MemoryBank bank;
    BankBuildReport report;
};

/// Normalized answer occurs as whole words in one of the contexts.
inline bool grounded(std::string_view answer, const std::vector<std::string>& contexts) {
    const std::string a = text::normalize_words(answer);
    if (a.empty()) return false;
    return std::any_of(contexts.begin(), contexts.end(), [&](const std::string& c) { return text::contains_words(text::normalize_words(c), a); });
}

inline std::vector<EdgeFact> edge_facts(const Hyperedge& e) {
    std::vector<EdgeFact> out;
    for (const auto& f : e.facts) out.push_back({f, e.id});
    return out;
}

namespace detail {

inline QaMemoryItem make_item(QaPair qa, const std::vector<const Hyperedge*>& support, const std::optional<std::string>& client) {
    QaMemoryItem item;
    item.question = std::move(qa.question);
    item.answer = std::move(qa.answer);
    item.client = client;
    item.origin = support.front()->id;
    std::set<std::pair<std::string, FactType>> seen;
    for (const auto* e : support) {
        item.support_ids.push_back(e->id);
        item.anchors.insert(e->anchors.begin(), e->anchors.end());
        for (const auto& f : e->facts)
            if (seen.emplace(f.span, f.type).second) item.facts.push_back({f.span, f.type, ""});
    }
    return item;
}

inline std::size_t shared_anchor_count(const Hyperedge& a, const Hyperedge& b) {
    std::size_t n = 0;
    for (const auto& x : a.anchors) n += b.anchors.contains(x);
    return n;
}

} // namespace detail

/// Items for one hyperedge: generator output over its facts and contexts,
/// minus answers not grounded in the contexts.
inline std::vector<QaMemoryItem> synthesize_for_hyperedge(const Hyperedge& e, QaGenerator& gen, int budget,
                                                          const std::optional<std::string>& client = std::nullopt,
                                                          std::size_t* discarded = nullptr) {
    if (e.contexts.empty()) throw InputError("hyperedge " + e.id + " has no contexts");
    std::vector<QaMemoryItem> out;
    for (auto& qa : gen.generate({GenerationKind::per_edge, edge_facts(e), e.contexts, budget})) {
        if (qa.question.empty() || !grounded(qa.answer, e.contexts)) {
            if (discarded) ++*discarded;
            continue;
        }
        out.push_back(detail::make_item(std::move(qa), {&e}, client));
    }
    return out;
}

/// Hyperedge pairs sharing at least one anchor, most shared anchors first,
/// then by (lower id, higher id); at most `cap` pairs.
inline std::vector<std::pair<const Hyperedge*, const Hyperedge*>> crossedge_pairs(const std::vector<Hyperedge>& edges, std::size_t cap) {
    struct Cand {
        std::size_t shared;
        const Hyperedge* a;
        const Hyperedge* b;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < edges.size(); ++i)
        for (std::size_t j = i + 1; j < edges.size(); ++j) {
            const auto n = detail::shared_anchor_count(edges[i], edges[j]);
            if (n == 0) continue;
            const bool ij = edges[i].id < edges[j].id;
            cands.push_back({n, ij ? &edges[i] : &edges[j], ij ? &edges[j] : &edges[i]});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.shared != y.shared) return x.shared > y.shared;
        if (x.a->id != y.a->id) return x.a->id < y.a->id;
        return x.b->id < y.b->id;
    });
    if (cands.size() > cap) cands.resize(cap);
    std::vector<std::pair<const Hyperedge*, const Hyperedge*>> out;
    for (const auto& c : cands) out.emplace_back(c.a, c.b);
    return out;
}

/// At most one bridge item per offered pair; support = both ids, origin = lower id.
inline std::vector<QaMemoryItem> compose_crossedge(const std::vector<Hyperedge>& edges, QaGenerator& gen, double pair_cap_factor = 2.0,
                                                   const std::optional<std::string>& client = std::nullopt, BankBuildReport* report = nullptr,
                                                   std::size_t workers = 1) {
    const auto cap = static_cast<std::size_t>(pair_cap_factor * static_cast<double>(edges.size()));
    const auto pairs = crossedge_pairs(edges, cap);
    if (report) report->pairs_offered += pairs.size();
    std::vector<std::vector<QaMemoryItem>> slots(pairs.size());
    std::vector<std::size_t> discarded(pairs.size(), 0), failed(pairs.size(), 0);
    parallel_for(pairs.size(), workers, [&](std::size_t k) {
        const auto [a, b] = pairs[k];
        GenerationInput in{GenerationKind::bridge, edge_facts(*a), a->contexts, 1};
        for (auto& f : edge_facts(*b)) in.facts.push_back(std::move(f));
        in.contexts.insert(in.contexts.end(), b->contexts.begin(), b->contexts.end());
        std::vector<QaPair> out;
        try {
            out = gen.generate(in);
        } catch (const Error&) {
            ++failed[k];
            return;
        }
        for (auto& qa : out) {
            if (slots[k].size() >= 1) break;
            if (qa.question.empty() || !grounded(qa.answer, in.contexts)) {
                ++discarded[k];
                continue;
            }
            slots[k].push_back(detail::make_item(std::move(qa), {a, b}, client));
        }
    });
    std::vector<QaMemoryItem> items;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (report) {
            report->discarded_ungrounded += discarded[k];
            report->generator_failures += failed[k];
            if (failed[k]) report->warnings.push_back("generator failed on pair " + pairs[k].first->id + "+" + pairs[k].second->id);
        }
        for (auto& it : slots[k]) items.push_back(std::move(it));
    }
    return items;
}

inline std::string item_id(const std::optional<std::string>& client, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "m%06zu", index);
    return client ? *client + ":" + buf : std::string(buf);
}

/// (Re)computes question embeddings for every item and rebuilds the index.
inline void embed_questions(MemoryBank& bank, EmbeddingProvider& provider) {
    bank.embedding_dim = provider.dim();
    if (!bank.items.empty()) {
        std::vector<std::string> qs;
        for (const auto& it : bank.items) qs.push_back(it.question);
        const auto m = provider.embed_batch(qs);
        for (std::size_t i = 0; i < bank.items.size(); ++i) bank.items[i].q_embedding = m.row(static_cast<Eigen::Index>(i));
    }
    bank.reindex();
}

/// Per-edge items in hyperedge order, then bridge items in pair order; ids
/// assigned after the merge.
inline BuiltBank build_bank(const Hypergraph& graph, QaGenerator& gen, EmbeddingProvider& provider, const BankBuildOptions& opt = {}) {
    BuiltBank out;
    auto& report = out.report;
    const auto& edges = graph.hyperedges;
    std::vector<std::vector<QaMemoryItem>> per_edge(edges.size());
    std::vector<std::size_t> discarded(edges.size(), 0), failed(edges.size(), 0);
    parallel_for(edges.size(), opt.workers, [&](std::size_t k) {
        try {
            per_edge[k] = synthesize_for_hyperedge(edges[k], gen, opt.per_edge_budget, opt.client, &discarded[k]);
        } catch (const Error&) {
            ++failed[k];
        }
    });
    std::vector<QaMemoryItem> items;
    for (std::size_t k = 0; k < edges.size(); ++k) {
        report.discarded_ungrounded += discarded[k];
        report.generator_failures += failed[k];
        if (failed[k]) report.warnings.push_back("generator failed on hyperedge " + edges[k].id + "; skipped");
        for (auto& it : per_edge[k]) items.push_back(std::move(it));
    }
    for (auto& it : compose_crossedge(edges, gen, opt.pair_cap_factor, opt.client, &report, opt.workers)) items.push_back(std::move(it));
    for (std::size_t i = 0; i < items.size(); ++i) items[i].id = item_id(opt.client, i + 1);

    out.bank.items = std::move(items);
    embed_questions(out.bank, provider);
    nlohmann::json prov{{"options", opt}, {"generator", gen.name()}, {"embedding_dim", provider.dim()}, {"graph", graph.config}};
    out.bank.provenance = sha256_hex(prov.dump());
    return out;
}

/// Every support id resolves and the answer is grounded in the support contexts.
inline bool traceable(const QaMemoryItem& item, const Hypergraph& graph) {
    std::vector<std::string> contexts;
    for (const auto& id : item.support_ids) {
        const auto* e = graph.find(id);
        if (!e) return false;
        contexts.insert(contexts.end(), e->contexts.begin(), e->contexts.end());
    }
    return std::find(item.support_ids.begin(), item.support_ids.end(), item.origin) != item.support_ids.end() &&
           grounded(item.answer, contexts);
}

// ---------------------------------------------------------------------------
// Persistence: JSON items plus a sibling binary embeddings file.
//
// Binary layout (little endian): "FDEMB001", u32 dim, u32 count, then per
// item u32 id length, id bytes, dim x f64.

inline nlohmann::json item_to_json(const QaMemoryItem& it) {
    nlohmann::json facts = nlohmann::json::array();
    for (const auto& f : it.facts) facts.push_back({f.span, std::string(to_string(f.type))});
    return {{"id", it.id},
            {"question", it.question},
            {"answer", it.answer},
            {"support", it.support_ids},
            {"origin", it.origin},
            {"client", it.client ? nlohmann::json(*it.client) : nlohmann::json(nullptr)},
            {"anchors", std::vector<std::string>(it.anchors.begin(), it.anchors.end())},
            {"facts", facts}};
}

inline QaMemoryItem item_from_json(const nlohmann::json& j) {
    QaMemoryItem it;
    it.id = j.at("id").get<std::string>();
    it.question = j.at("question").get<std::string>();
    it.answer = j.at("answer").get<std::string>();
    it.support_ids = j.at("support").get<std::vector<std::string>>();
    it.origin = j.at("origin").get<std::string>();
    if (j.contains("client") && !j["client"].is_null()) it.client = j["client"].get<std::string>();
    for (const auto& a : j.at("anchors")) it.anchors.insert(a.get<std::string>());
    if (j.contains("facts"))
        for (const auto& f : j["facts"]) it.facts.push_back({f.at(0).get<std::string>(), parse_fact_type(f.at(1).get<std::string>()), ""});
    if (it.id.empty() || it.question.empty() || it.answer.empty()) throw InputError("memory item with empty id, question or answer");
    if (it.support_ids.empty()) throw InputError("memory item " + it.id + " has no support");
    if (std::find(it.support_ids.begin(), it.support_ids.end(), it.origin) == it.support_ids.end())
        throw InputError("memory item " + it.id + " origin not in support");
    return it;
}

inline nlohmann::json bank_to_json(const MemoryBank& bank) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : bank.items) items.push_back(item_to_json(it));
    return {{"items", items}, {"embedding_dim", bank.embedding_dim}, {"provenance", bank.provenance}};
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    std::uint64_t take(int bytes) {
        if (pos + static_cast<std::size_t>(bytes) > buf.size()) throw InputError("truncated embeddings file");
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::string bytes(std::size_t n) {
        if (pos + n > buf.size()) throw InputError("truncated embeddings file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline constexpr std::string_view kEmbMagic = "FDEMB001";

} // namespace detail

inline std::string encode_embeddings(const MemoryBank& bank) {
    std::string out(detail::kEmbMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(bank.embedding_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(bank.items.size()));
    for (const auto& it : bank.items) {
        detail::put_u32(out, static_cast<std::uint32_t>(it.id.size()));
        out += it.id;
        for (Eigen::Index d = 0; d < it.q_embedding.size(); ++d) detail::put_f64(out, it.q_embedding[d]);
    }
    return out;
}

inline void decode_embeddings(const std::string& buf, MemoryBank& bank) {
    detail::Reader r{buf};
    if (r.bytes(detail::kEmbMagic.size()) != detail::kEmbMagic) throw InputError("not an embeddings file");
    const auto dim = static_cast<int>(r.take(4));
    const auto count = r.take(4);
    if (dim != bank.embedding_dim) throw InputError("embeddings file dimension does not match bank");
    std::map<std::string, Eigen::VectorXd> by_id;
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto id = r.bytes(static_cast<std::size_t>(r.take(4)));
        Eigen::VectorXd v(dim);
        for (int d = 0; d < dim; ++d) v[d] = std::bit_cast<double>(r.take(8));
        by_id[id] = std::move(v);
    }
    for (auto& it : bank.items) {
        auto f = by_id.find(it.id);
        if (f == by_id.end()) throw InputError("no embedding for memory item " + it.id);
        it.q_embedding = f->second;
    }
    bank.reindex();
}

inline std::filesystem::path embeddings_path(const std::filesystem::path& bank_path) {
    auto p = bank_path;
    p += ".emb";
    return p;
}

inline void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("cannot write " + path.string());
        out << bank_to_json(bank).dump(1) << '\n';
    }
    std::ofstream emb(embeddings_path(path), std::ios::binary);
    if (!emb) throw InputError("cannot write " + embeddings_path(path).string());
    emb << encode_embeddings(bank);
}

inline MemoryBank bank_from_json(const nlohmann::json& j) {
    MemoryBank bank;
    bank.embedding_dim = j.at("embedding_dim").get<int>();
    bank.provenance = j.value("provenance", "");
    for (const auto& ji : j.at("items")) bank.items.push_back(item_from_json(ji));
    return bank;
}

inline MemoryBank load_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    MemoryBank bank = bank_from_json(nlohmann::json::parse(in));
    std::ifstream emb(embeddings_path(path), std::ios::binary);
    if (!emb) throw InputError("cannot open " + embeddings_path(path).string());
    const std::string buf((std::istreambuf_iterator<char>(emb)), std::istreambuf_iterator<char>());
    decode_embeddings(buf, bank);
    return bank;
}

} // namespace fdrag
