#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fdrag/memory.hpp"

using namespace fdrag;

namespace {

Hyperedge edge_from(const std::string& id, const std::string& text, const std::string& doc = "d") {
    const auto seg = segment({{doc, text, std::nullopt}});
    Hyperedge e;
    e.id = id;
    e.granularity = id[0] == 'p' ? Granularity::paragraph : Granularity::sentence;
    for (const auto& u : seg.paragraphs) {
        e.members.push_back(u.unit_id);
        e.contexts.push_back(u.text);
    }
    e.facts = hyperedge_facts(seg.paragraphs, Lexicon::builtin());
    fill_anchors(e, Lexicon::builtin());
    e.prototype = Eigen::VectorXd::Zero(2);
    return e;
}

/// Generator returning a fixed list regardless of input.
class FixedGenerator final : public QaGenerator {
public:
    explicit FixedGenerator(std::vector<QaPair> out) : out_(std::move(out)) {}
    std::vector<QaPair> generate(const GenerationInput&) override { return out_; }
    std::string name() const override { return "fixed"; }

private:
    std::vector<QaPair> out_;
};

class FailingGenerator final : public QaGenerator {
public:
    std::vector<QaPair> generate(const GenerationInput&) override { throw TransportError("down", 5); }
    std::string name() const override { return "failing"; }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Hypergraph fixture_graph() {
    const auto seg = segment(read_documents(std::filesystem::path(FDRAG_FIXTURE_DIR) / "corpus.jsonl"));
    HashEmbedder emb(64, 0);
    std::vector<std::string> pt, st;
    for (const auto& u : seg.paragraphs) pt.push_back(u.text);
    for (const auto& u : seg.sentences) st.push_back(u.text);
    TrainConfig cfg;
    return build_hypergraph(seg, emb.embed_batch(pt), emb.embed_batch(st), cfg).graph;
}

} // namespace

TEST(Synthesize, TemplateSingleFact) {
    TemplateGenerator gen;
    const auto items = synthesize_for_hyperedge(edge_from("p0000", "They met at Acme Corp today."), gen, 3);
    bool found = false;
    for (const auto& it : items)
        if (it.question == "what organization is mentioned in this passage about acme corp?" && it.answer == "acme corp") {
            found = true;
            EXPECT_EQ(it.support_ids, (std::vector<std::string>{"p0000"}));
            EXPECT_EQ(it.origin, "p0000");
            EXPECT_TRUE(it.anchors.contains("acme corp"));
        }
    EXPECT_TRUE(found);
}

TEST(Synthesize, NoFactsNoItems) {
    TemplateGenerator gen;
    EXPECT_TRUE(synthesize_for_hyperedge(edge_from("p0000", "it was so."), gen, 3).empty());
}

TEST(Synthesize, GroundingFilterDropsAbsentAnswers) {
    FixedGenerator gen({{"q1?", "acme corp"}, {"q2?", "atlantis"}});
    std::size_t discarded = 0;
    const auto items = synthesize_for_hyperedge(edge_from("p0000", "They met at Acme Corp today."), gen, 3, std::nullopt, &discarded);
    ASSERT_EQ(items.size(), 1u);
    EXPECT_EQ(items[0].answer, "acme corp");
    EXPECT_EQ(discarded, 1u);
}

TEST(Synthesize, BudgetRespected) {
    TemplateGenerator gen;
    const auto items = synthesize_for_hyperedge(edge_from("p0000", "Marie Curie met Pierre Curie in Paris in 1894 at the Sorbonne."), gen, 2);
    EXPECT_EQ(items.size(), 2u);
}

TEST(CrossEdge, SharedAnchorYieldsOneBridge) {
    const std::vector<Hyperedge> edges{edge_from("s0001", "Marie Curie worked at Acme Corp."),
                                       edge_from("s0002", "Marie Curie was born in Warsaw.")};
    TemplateGenerator gen;
    const auto items = compose_crossedge(edges, gen);
    ASSERT_EQ(items.size(), 1u);
    EXPECT_EQ(items[0].support_ids, (std::vector<std::string>{"s0001", "s0002"}));
    EXPECT_EQ(items[0].origin, "s0001");
    EXPECT_EQ(items[0].question, "what location is linked to acme corp via the same person?");
    EXPECT_EQ(items[0].answer, "warsaw");
    EXPECT_TRUE(items[0].anchors.contains("warsaw") && items[0].anchors.contains("acme corp"));
}

TEST(CrossEdge, DisjointAnchorsNoPair) {
    const std::vector<Hyperedge> edges{edge_from("s0001", "Acme Corp opened."), edge_from("s0002", "Warsaw grew.")};
    EXPECT_TRUE(crossedge_pairs(edges, 10).empty());
}

TEST(CrossEdge, PairRankingAndCap) {
    const std::vector<Hyperedge> edges{edge_from("s0003", "Marie Curie and Pierre Curie met."), edge_from("s0001", "Marie Curie spoke."),
                                       edge_from("s0002", "Marie Curie and Pierre Curie wrote.")};
    const auto pairs = crossedge_pairs(edges, 2);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[0].first->id, "s0002");
    EXPECT_EQ(pairs[0].second->id, "s0003");
    EXPECT_EQ(pairs[1].first->id, "s0001");
    EXPECT_EQ(pairs[1].second->id, "s0002");
}

TEST(BuildBank, EmptyGraphEmptyBank) {
    TemplateGenerator gen;
    HashEmbedder emb(16, 0);
    const auto built = build_bank(Hypergraph{}, gen, emb);
    EXPECT_TRUE(built.bank.empty());
    EXPECT_EQ(built.bank.embedding_dim, 16);
}

TEST(BuildBank, GeneratorFailureSkipsWithWarning) {
    Hypergraph g;
    g.hyperedges.push_back(edge_from("p0000", "Acme Corp opened."));
    FailingGenerator gen;
    HashEmbedder emb(16, 0);
    const auto built = build_bank(g, gen, emb);
    EXPECT_TRUE(built.bank.empty());
    EXPECT_EQ(built.report.generator_failures, 1u);
    EXPECT_FALSE(built.report.warnings.empty());
}

TEST(BuildBank, FixtureAccountingAndTraceability) {
    const auto g = fixture_graph();
    TemplateGenerator gen;
    HashEmbedder emb(64, 0);
    const auto built = build_bank(g, gen, emb);
    const auto& bank = built.bank;
    ASSERT_FALSE(bank.empty());
    EXPECT_EQ(bank.fact_level_count() + bank.multi_hop_count(), bank.size());
    EXPECT_GT(bank.multi_hop_count(), 0u);
    EXPECT_EQ(bank.index.rows(), static_cast<Eigen::Index>(bank.size()));
    std::set<std::string> ids;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto& it = bank.items[i];
        EXPECT_TRUE(ids.insert(it.id).second);
        EXPECT_TRUE(traceable(it, g)) << it.id;
        EXPECT_NEAR(it.q_embedding.norm(), 1.0, 1e-6);
        EXPECT_EQ(bank.index.row(static_cast<Eigen::Index>(i)).transpose(), it.q_embedding);
        AnchorSet expect;
        for (const auto& s : it.support_ids) expect.insert(g.at(s).anchors.begin(), g.at(s).anchors.end());
        EXPECT_EQ(it.anchors, expect);
    }
}

TEST(BuildBank, ScriptedLlmMatchesTemplateGenerator) {
    const auto g = fixture_graph();
    TemplateGenerator tg;
    ScriptedBackend backend;
    LlmGenerator lg(backend);
    HashEmbedder emb(64, 0);
    BankBuildOptions opt;
    opt.workers = 4;
    const auto a = build_bank(g, tg, emb, opt).bank;
    const auto b = build_bank(g, lg, emb, opt).bank;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.items[i].question, b.items[i].question);
        EXPECT_EQ(a.items[i].answer, b.items[i].answer);
        EXPECT_EQ(a.items[i].support_ids, b.items[i].support_ids);
    }
    EXPECT_GT(lg.stats.calls.load(), 0u);
}

TEST(BuildBank, RebuildIsByteIdentical) {
    const auto g = fixture_graph();
    TemplateGenerator gen;
    HashEmbedder emb(64, 0);
    const auto dir = std::filesystem::temp_directory_path();
    save_bank(build_bank(g, gen, emb).bank, dir / "fdrag_bank_a.json");
    BankBuildOptions opt;
    opt.workers = 3;
    save_bank(build_bank(fixture_graph(), gen, emb, opt).bank, dir / "fdrag_bank_b.json");
    EXPECT_EQ(slurp(dir / "fdrag_bank_a.json"), slurp(dir / "fdrag_bank_b.json"));
    EXPECT_EQ(slurp(dir / "fdrag_bank_a.json.emb"), slurp(dir / "fdrag_bank_b.json.emb"));
}

TEST(BankFile, RoundTrip) {
    const auto g = fixture_graph();
    TemplateGenerator gen;
    HashEmbedder emb(64, 0);
    BankBuildOptions opt;
    opt.client = "c1";
    const auto bank = build_bank(g, gen, emb, opt).bank;
    const auto path = std::filesystem::temp_directory_path() / "fdrag_bank_rt.json";
    save_bank(bank, path);
    const auto loaded = load_bank(path);
    ASSERT_EQ(loaded.size(), bank.size());
    EXPECT_EQ(loaded.index, bank.index);
    EXPECT_EQ(loaded.items[0].client, std::optional<std::string>("c1"));
    EXPECT_EQ(loaded.items[0].id.rfind("c1:m", 0), 0u);
    EXPECT_EQ(loaded.items[0].facts, bank.items[0].facts);
    EXPECT_EQ(loaded.provenance, bank.provenance);
}

TEST(BankFile, RejectsBrokenItems) {
    nlohmann::json j{{"embedding_dim", 2},
                     {"items", {{{"id", "m1"}, {"question", "q"}, {"answer", "a"}, {"support", {"p1"}}, {"origin", "p2"}, {"anchors", nlohmann::json::array()}}}}};
    EXPECT_THROW(bank_from_json(j), InputError);
}
