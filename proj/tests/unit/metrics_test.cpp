#include <gtest/gtest.h>

#include "fdrag/metrics.hpp"

using namespace fdrag;

namespace {

RouteResult result(std::string id, RoutePath path, std::string answer, int calls = 0, double latency = 0.0) {
    RouteResult r;
    r.query_id = std::move(id);
    r.path = path;
    r.answer = std::move(answer);
    r.llm_calls = calls;
    r.latency_s = latency;
    return r;
}

Query query(std::string id, std::optional<std::string> gold) {
    Query q;
    q.query_id = std::move(id);
    q.question = "?";
    q.gold_answer = std::move(gold);
    return q;
}

} // namespace

TEST(Metrics, NormalizeAnswer) {
    EXPECT_EQ(normalize_answer("The  Nobel Prize!"), "nobel prize");
    EXPECT_EQ(normalize_answer("an apple, a pear"), "apple pear");
    EXPECT_EQ(normalize_answer("  "), "");
}

TEST(Metrics, TokenF1Examples) {
    // "the" is dropped: precision 2/2, recall 2/4
    EXPECT_NEAR(token_f1("the nobel prize", "nobel prize in 1903"), 2.0 / 3.0, 1e-12);
    // precision 2/3, recall 2/2
    EXPECT_NEAR(token_f1("nobel prize 1903", "nobel prize"), 0.8, 1e-12);
    EXPECT_DOUBLE_EQ(token_f1("paris", "paris"), 1.0);
    EXPECT_DOUBLE_EQ(token_f1("paris", "rome"), 0.0);
    EXPECT_DOUBLE_EQ(token_f1("", ""), 1.0);
    EXPECT_DOUBLE_EQ(token_f1("", "paris"), 0.0);
    EXPECT_NEAR(token_f1("a a b", "a b b"), 2.0 / 3.0, 1e-12);
}

TEST(Metrics, AccuracyContainment) {
    EXPECT_EQ(accuracy("paris, france", "paris"), 1.0);
    EXPECT_EQ(accuracy("Paris", "paris, france"), 1.0);
    EXPECT_EQ(accuracy("parisian", "paris"), 1.0);
    EXPECT_EQ(accuracy("rome", "paris"), 0.0);
    EXPECT_EQ(accuracy("insufficient evidence", "vienna"), 0.0);
}

TEST(Metrics, SlicesAndLabels) {
    const std::vector<Query> qs{query("q1", "paris"), query("q2", "rome"), query("q3", "vienna"), query("q4", std::nullopt)};
    const std::vector<RouteResult> rs{result("q1", RoutePath::fast, "paris", 0, 0.1), result("q2", RoutePath::slow, "milan", 1, 0.3),
                                      result("q3", RoutePath::slow, "vienna", 1, 0.5), result("q4", RoutePath::fast, "x")};
    const auto m = compute_metrics(rs, qs, {{"q3", QueryLabel::cross_silo}});
    EXPECT_EQ(m.all.n, 3u);
    EXPECT_NEAR(m.all.acc, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.all.fast_coverage, 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(m.all.fast_acc, 1.0);
    EXPECT_DOUBLE_EQ(m.all.slow_acc, 0.5);
    EXPECT_NEAR(m.all.mean_latency, 0.3, 1e-12);
    EXPECT_NEAR(m.all.avg_llm_calls, 2.0 / 3.0, 1e-12);
    EXPECT_EQ(m.local.n, 2u);
    EXPECT_EQ(m.cross_silo.n, 1u);
    EXPECT_DOUBLE_EQ(m.cross_silo.acc, 1.0);
    EXPECT_EQ(compute_metrics({}, qs).all.n, 0u);
}

TEST(Metrics, AccuracyDecomposesOverPaths) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Query> qs;
        std::vector<RouteResult> rs;
        const auto n = 1 + uniform_index(rng, 30);
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = "q" + std::to_string(i);
            qs.push_back(query(id, "gold"));
            const auto path = uniform_index(rng, 2) ? RoutePath::fast : RoutePath::slow;
            rs.push_back(result(id, path, uniform_index(rng, 3) ? "gold" : "wrong", path == RoutePath::slow));
        }
        const auto m = compute_metrics(rs, qs);
        EXPECT_NEAR(m.all.decomposition_gap(), 0.0, 1e-12);
    }
}

TEST(Metrics, LabelRoundTrip) {
    EXPECT_EQ(parse_query_label(to_string(QueryLabel::cross_silo)), QueryLabel::cross_silo);
    EXPECT_THROW(parse_query_label("remote"), InputError);
}
