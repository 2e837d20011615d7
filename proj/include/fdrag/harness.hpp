#pragma once

// Evaluation suite: threshold sweeps, convergence verification and the
// restoration-attack privacy audit.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/metrics.hpp"
#include "fdrag/privacy.hpp"
#include "fdrag/synthetic.hpp"

namespace fdrag {

namespace detail {

/// Shortest text that parses back to `v`.
inline std::string shortest(double v) {
    char buf[32];
    return {buf, std::to_chars(buf, buf + sizeof buf, v).ptr};
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.precision(17);
    return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Threshold sweep

struct SweepPoint {
    double delta = 0.0;
    double accuracy = 0.0;
    double mean_latency = 0.0;
    double fast_coverage = 0.0;
};

inline void to_json(nlohmann::json& j, const SweepPoint& p) {
    j = {{"delta", p.delta}, {"accuracy", p.accuracy}, {"mean_latency", p.mean_latency}, {"fast_coverage", p.fast_coverage}};
}

struct SweepResult {
    std::vector<SweepPoint> points;                  // ascending delta
    std::vector<std::vector<RouteResult>> results;   // per point, query order
    std::vector<MetricsReport> metrics;              // per point
};

inline std::vector<double> default_delta_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    g.push_back(1.01);
    return g;
}

/// Scores every query once, computes both the fast and slow answer once, and
/// applies each threshold of `grid` to the cached scores. Latency of a point
/// is scoring time plus the time of the path taken.
inline SweepResult sweep_delta(const Router& router, const std::vector<Query>& queries, std::vector<double> grid, int workers = 1) {
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    struct Cached {
        std::optional<Match> best;
        std::optional<RouteResult> fast;
        RouteResult slow;
        double score_s = 0, fast_s = 0, slow_s = 0;
    };
    std::vector<Cached> cache(queries.size());
    parallel_for(queries.size(), static_cast<std::size_t>(workers), [&](std::size_t i) {
        auto& c = cache[i];
        auto t0 = std::chrono::steady_clock::now();
        const auto pq = router.prepare(queries[i]);
        const auto scores = score_all(pq, router.bank(), router.config().alpha);
        c.best = best_match(scores, router.bank());
        c.score_s = detail::seconds_since(t0);
        if (c.best) {
            t0 = std::chrono::steady_clock::now();
            c.fast = router.fast(pq, *c.best);
            c.fast_s = detail::seconds_since(t0);
        }
        t0 = std::chrono::steady_clock::now();
        c.slow = router.slow(pq, scores);
        c.slow_s = detail::seconds_since(t0);
    });
    SweepResult out;
    for (double delta : grid) {
        std::vector<RouteResult> rs;
        for (const auto& c : cache) {
            const bool fast = c.best && c.best->score >= delta;
            RouteResult r = fast ? *c.fast : c.slow;
            r.latency_s = c.score_s + (fast ? c.fast_s : c.slow_s);
            rs.push_back(std::move(r));
        }
        const auto m = compute_metrics(rs, queries);
        double latency = 0.0, coverage = 0.0;
        for (const auto& r : rs) {
            latency += r.latency_s;
            coverage += r.path == RoutePath::fast;
        }
        const double n = rs.empty() ? 1.0 : static_cast<double>(rs.size());
        out.points.push_back({delta, m.all.acc, latency / n, coverage / n});
        out.results.push_back(std::move(rs));
        out.metrics.push_back(m);
    }
    return out;
}

inline void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "delta,accuracy,mean_latency,fast_coverage\n";
    for (const auto& p : points) out << detail::shortest(p.delta) << ',' << p.accuracy << ',' << p.mean_latency << ',' << p.fast_coverage << '\n';
}

/// Accuracy against mean latency, one labelled marker per threshold.
inline void write_sweep_svg(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
    constexpr double w = 640, h = 420, left = 70, right = 20, top = 20, bottom = 50;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& p : points) {
        lo = std::min(lo, p.mean_latency);
        hi = std::max(hi, p.mean_latency);
    }
    if (!(hi > lo)) {
        lo = points.empty() ? 0.0 : lo * 0.9;
        hi = points.empty() ? 1.0 : hi * 1.1 + 1e-9;
    }
    const auto sx = [&](double v) { return left + (v - lo) / (hi - lo) * (w - left - right); };
    const auto sy = [&](double v) { return top + (1.0 - v) * (h - top - bottom); };
    auto out = detail::open_out(path);
    out.precision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (w + left) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">mean latency (s)</text>\n";
    out << "<text x=\"16\" y=\"" << (h - bottom + top) / 2 << "\" transform=\"rotate(-90 16 " << (h - bottom + top) / 2
        << ")\" text-anchor=\"middle\">accuracy</text>\n";
    for (double v : {0.0, 0.5, 1.0})
        out << "<text x=\"" << left - 6 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
    out << "<text x=\"" << left << "\" y=\"" << h - bottom + 16 << "\">" << lo << "</text>\n";
    out << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"end\">" << hi << "</text>\n";
    std::string poly;
    for (const auto& p : points) poly += std::to_string(sx(p.mean_latency)) + "," + std::to_string(sy(p.accuracy)) + " ";
    out << "<polyline points=\"" << poly << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (const auto& p : points) {
        out << "<circle cx=\"" << sx(p.mean_latency) << "\" cy=\"" << sy(p.accuracy) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
        out << "<text x=\"" << sx(p.mean_latency) + 6 << "\" y=\"" << sy(p.accuracy) - 6 << "\">" << detail::shortest(p.delta) << "</text>\n";
    }
    out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Convergence verification

struct ConvergenceConfig {
    int seeds = 10;
    std::uint64_t base_seed = 0;
    int nodes = 40;  // per granularity
    int dim = 8;
    int clusters = 4;
    double spread = 0.5;
    int steps = 300;
    std::vector<int> horizons{50, 100, 200, 400};
    double slope_threshold = -0.8;
    int min_slope_passes = 8;
    double stabilization_tol = 0.05;
    TrainConfig train{};  // learning rate, line search, loss weights

    void validate() const {
        if (seeds < 1 || nodes < 2 || dim < 2 || clusters < 1 || steps < 1) throw InputError("convergence: invalid synthetic setup");
        if (horizons.size() < 2) throw InputError("convergence: need at least two horizons");
        for (int t : horizons)
            if (t < 1) throw InputError("convergence: horizons must be positive");
        if (min_slope_passes > seeds) throw InputError("convergence: min_slope_passes exceeds seeds");
    }
};

inline void from_json(const nlohmann::json& j, ConvergenceConfig& c) {
    c.seeds = j.value("seeds", c.seeds);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.nodes = j.value("nodes", c.nodes);
    c.dim = j.value("dim", c.dim);
    c.clusters = j.value("clusters", c.clusters);
    c.spread = j.value("spread", c.spread);
    c.steps = j.value("steps", c.steps);
    c.horizons = j.value("horizons", c.horizons);
    c.slope_threshold = j.value("slope_threshold", c.slope_threshold);
    c.min_slope_passes = j.value("min_slope_passes", c.min_slope_passes);
    c.stabilization_tol = j.value("stabilization_tol", c.stabilization_tol);
    if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
    c.validate();
}
inline void to_json(nlohmann::json& j, const ConvergenceConfig& c) {
    j = {{"seeds", c.seeds},
         {"base_seed", c.base_seed},
         {"nodes", c.nodes},
         {"dim", c.dim},
         {"clusters", c.clusters},
         {"spread", c.spread},
         {"steps", c.steps},
         {"horizons", c.horizons},
         {"slope_threshold", c.slope_threshold},
         {"min_slope_passes", c.min_slope_passes},
         {"stabilization_tol", c.stabilization_tol},
         {"train", c.train}};
}

struct HorizonCheck {
    int horizon = 0;
    double min_gm_sq = 0.0;
    double bound = 0.0;  // 2 * L_max * (loss_0 - loss_T) / T
    bool ok = false;
};

struct SeedConvergence {
    std::uint64_t seed = 0;
    int descent_violations = 0;
    int first_violation_step = -1;
    std::vector<HorizonCheck> horizons;
    double slope = 0.0;
    bool slope_ok = false;
    double stabilization = 0.0;  // |loss_T - loss_0.8T| / |loss_0|
    bool stable = false;
    TrainDiagnostics diagnostics;

    bool bound_ok() const {
        return std::all_of(horizons.begin(), horizons.end(), [](const auto& h) { return h.ok; });
    }
};

struct ConvergenceReport {
    ConvergenceConfig config;
    std::vector<SeedConvergence> seeds;

    int slope_passes() const {
        return static_cast<int>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.slope_ok; }));
    }

    /// One line per failed assertion, naming the seed and step.
    std::vector<std::string> failures() const {
        std::vector<std::string> out;
        for (const auto& s : seeds) {
            const auto tag = "seed " + std::to_string(s.seed) + ": ";
            if (s.descent_violations)
                out.push_back(tag + std::to_string(s.descent_violations) + " descent violations, first at step " + std::to_string(s.first_violation_step));
            for (const auto& h : s.horizons)
                if (!h.ok)
                    out.push_back(tag + "trace bound fails at T=" + std::to_string(h.horizon) + " (" + std::to_string(h.min_gm_sq) + " > " +
                                  std::to_string(h.bound) + ")");
            if (!s.stable) out.push_back(tag + "loss not stabilized (" + std::to_string(s.stabilization) + ")");
        }
        if (slope_passes() < config.min_slope_passes)
            out.push_back("slope check passed on " + std::to_string(slope_passes()) + " seeds, need " + std::to_string(config.min_slope_passes));
        return out;
    }

    bool passed() const { return failures().empty(); }
};

inline void to_json(nlohmann::json& j, const ConvergenceReport& r) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : r.seeds) {
        nlohmann::json hs = nlohmann::json::array();
        for (const auto& h : s.horizons) hs.push_back({{"T", h.horizon}, {"min_gm_sq", h.min_gm_sq}, {"bound", h.bound}, {"ok", h.ok}});
        seeds.push_back({{"seed", s.seed},
                         {"descent_violations", s.descent_violations},
                         {"horizons", hs},
                         {"slope", s.slope},
                         {"slope_ok", s.slope_ok},
                         {"stabilization", s.stabilization},
                         {"stable", s.stable}});
    }
    j = {{"config", r.config}, {"seeds", seeds}, {"slope_passes", r.slope_passes()}, {"failures", r.failures()}, {"passed", r.passed()}};
}

/// Least-squares slope of y against x.
inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return den > 0 ? num / den : 0.0;
}

/// Checks one recorded trace. The trace must be at least as long as the
/// largest horizon and `steps`.
inline SeedConvergence check_trace(const TrainDiagnostics& d, const ConvergenceConfig& cfg) {
    SeedConvergence s;
    // Rejected line-search steps keep the loss and fail this check as well.
    double prev = d.initial_loss;
    for (std::size_t k = 0; k < d.steps(); ++k) {
        const double g = d.gm_norm_trace[k];
        if (d.loss_trace[k] > prev - g * g / (2.0 * d.local_L_trace[k]) + 1e-12 * std::max(1.0, std::abs(prev))) {
            if (s.first_violation_step < 0) s.first_violation_step = static_cast<int>(k);
            ++s.descent_violations;
        }
        prev = d.loss_trace[k];
    }
    std::vector<double> lx, ly;
    for (int t : cfg.horizons) {
        const auto T = static_cast<std::size_t>(t);
        if (T > d.steps()) throw InputError("convergence: trace shorter than horizon " + std::to_string(t));
        HorizonCheck h;
        h.horizon = t;
        h.min_gm_sq = std::numeric_limits<double>::infinity();
        double l_max = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
            h.min_gm_sq = std::min(h.min_gm_sq, d.gm_norm_trace[k] * d.gm_norm_trace[k]);
            l_max = std::max(l_max, d.local_L_trace[k]);
        }
        h.bound = 2.0 * l_max * (d.initial_loss - d.loss_trace[T - 1]) / static_cast<double>(t);
        h.ok = h.min_gm_sq <= h.bound;
        s.horizons.push_back(h);
        lx.push_back(std::log(static_cast<double>(t)));
        ly.push_back(std::log(std::max(h.min_gm_sq, std::numeric_limits<double>::min())));
    }
    s.slope = regression_slope(lx, ly);
    s.slope_ok = s.slope <= cfg.slope_threshold;
    const auto T = static_cast<std::size_t>(cfg.steps);
    const auto early = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(cfg.steps)));
    s.stabilization = std::abs(d.loss_trace[T - 1] - d.loss_trace[early - 1]) / std::max(std::abs(d.initial_loss), 1e-300);
    s.stable = s.stabilization < cfg.stabilization_tol;
    return s;
}

/// Trains on seeded synthetic corpora and checks every trace. Writes one
/// CSV trace per seed into `trace_dir` when given.
inline ConvergenceReport verify_convergence(const ConvergenceConfig& cfg, const std::optional<std::filesystem::path>& trace_dir = std::nullopt,
                                            int workers = 1) {
    cfg.validate();
    ConvergenceReport report;
    report.config = cfg;
    report.seeds.resize(static_cast<std::size_t>(cfg.seeds));
    const int length = std::max(cfg.steps, *std::max_element(cfg.horizons.begin(), cfg.horizons.end()));
    parallel_for(report.seeds.size(), static_cast<std::size_t>(workers), [&](std::size_t i) {
        const std::uint64_t seed = cfg.base_seed + i;
        const auto p = gaussian_blobs(cfg.nodes, cfg.dim, cfg.clusters, cfg.spread, derive_seed(seed, "convergence/paragraph"));
        const auto s = gaussian_blobs(cfg.nodes, cfg.dim, cfg.clusters, cfg.spread, derive_seed(seed, "convergence/sentence"));
        TrainConfig train = cfg.train;
        train.steps = length;
        train.seed = derive_seed(seed, "convergence/init");
        train.restarts = 1;
        auto d = train_incidence(p.x, s.x, train).diagnostics;
        auto checked = check_trace(d, cfg);
        checked.seed = seed;
        checked.diagnostics = std::move(d);
        report.seeds[i] = std::move(checked);
    });
    if (trace_dir)
        for (const auto& s : report.seeds) s.diagnostics.write_csv(*trace_dir / ("trace_seed" + std::to_string(s.seed) + ".csv"));
    return report;
}

// ---------------------------------------------------------------------------
// Privacy audit

struct PrivacyAuditConfig {
    std::vector<double> epsilons{0.1, 0.5, 1.0, 2.0};
    int repeats = 5;
    LdpConfig ldp{};  // c, sensitive types and base seed; epsilon is swept

    void validate() const {
        if (epsilons.empty()) throw InputError("privacy audit needs at least one epsilon");
        if (repeats < 1) throw InputError("privacy audit repeats must be >= 1");
        ldp.validate();
    }
};

inline void from_json(const nlohmann::json& j, PrivacyAuditConfig& c) {
    c.epsilons = j.value("epsilons", c.epsilons);
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("ldp")) c.ldp = j["ldp"].get<LdpConfig>();
    c.validate();
}
inline void to_json(nlohmann::json& j, const PrivacyAuditConfig& c) {
    j = {{"epsilons", c.epsilons}, {"repeats", c.repeats}, {"ldp", c.ldp}};
}

struct AttackOutcome {
    std::size_t attacked = 0;
    std::size_t restored = 0;
    double rest_at_1() const { return attacked ? static_cast<double>(restored) / static_cast<double>(attacked) : 0.0; }
};

/// Nearest-neighbour restoration attack. For every substitution whose
/// original span occurs in the original item's question or answer, the
/// attacker embeds the released field (question, else answer) that carries
/// the surrogate and guesses the same-type vocabulary entry with the highest
/// cosine to it, lexicographically first on ties.
inline AttackOutcome restoration_attack(const MemoryBank& original, const MemoryBank& released, const std::vector<Substitution>& subs,
                                        const TypedVocabulary& vocab, EmbeddingProvider& provider) {
    if (original.size() != released.size()) throw InputError("restoration attack: banks differ in size");
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < released.size(); ++i) position[released.items[i].id] = i;
    std::map<std::string, Eigen::VectorXd> window_cache;
    AttackOutcome out;
    for (const auto& s : subs) {
        const auto pos = position.find(s.item_id);
        if (pos == position.end()) throw InputError("restoration attack: unknown item " + s.item_id);
        const auto& orig = original.items[pos->second];
        const auto& rel = released.items[pos->second];
        const auto words = [](const std::string& f) { return text::normalize_words(f); };
        if (!text::contains_words(words(orig.question), s.original) && !text::contains_words(words(orig.answer), s.original)) continue;
        const std::string* window = nullptr;
        if (text::contains_words(words(rel.question), s.surrogate)) window = &rel.question;
        else if (text::contains_words(words(rel.answer), s.surrogate)) window = &rel.answer;
        if (!window) continue;
        const auto& spans = vocab.spans(s.type);
        if (spans.empty()) continue;
        auto it = window_cache.find(*window);
        if (it == window_cache.end()) it = window_cache.emplace(*window, provider.embed_one(*window)).first;
        const Eigen::VectorXd sims = vocab.vectors(s.type) * it->second;
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < sims.size(); ++k)
            if (sims(k) > sims(best)) best = k;
        ++out.attacked;
        out.restored += spans[static_cast<std::size_t>(best)] == s.original;
    }
    return out;
}

struct PrivacyAuditRow {
    std::optional<double> epsilon;  // absent: no protection
    double rest_at_1 = 0.0;
    double downstream_acc = 0.0;
    double perturbed_fraction = 0.0;
    double attacked = 0.0;  // mean per repeat
};

inline void to_json(nlohmann::json& j, const PrivacyAuditRow& r) {
    j = {{"epsilon", r.epsilon ? nlohmann::json(*r.epsilon) : nlohmann::json(nullptr)},
         {"rest_at_1", r.rest_at_1},
         {"downstream_acc", r.downstream_acc},
         {"perturbed_fraction", r.perturbed_fraction},
         {"attacked", r.attacked}};
}

struct PrivacyAuditReport {
    PrivacyAuditConfig config;
    PrivacyAuditRow control;
    std::vector<PrivacyAuditRow> rows;  // ascending epsilon

    void write_csv(const std::filesystem::path& path) const {
        auto out = detail::open_out(path);
        out << "epsilon,rest_at_1,downstream_acc,perturbed_fraction,attacked\n";
        const auto line = [&](const PrivacyAuditRow& r) {
            if (r.epsilon) out << detail::shortest(*r.epsilon);
            else out << "none";
            out << ',' << r.rest_at_1 << ',' << r.downstream_acc << ',' << r.perturbed_fraction << ',' << r.attacked << '\n';
        };
        for (const auto& r : rows) line(r);
        line(control);
    }
};

inline void to_json(nlohmann::json& j, const PrivacyAuditReport& r) { j = {{"config", r.config}, {"rows", r.rows}, {"control", r.control}}; }

/// Memorizer-only accuracy of `queries` against `bank`.
inline double memorizer_accuracy(const MemoryBank& bank, const Hypergraph& graph, const std::vector<Query>& queries, EmbeddingProvider& provider,
                                 LlmBackend& llm, const RouteConfig& route, int workers) {
    const Router router(bank, graph, provider, llm, route);
    return compute_metrics(router.route_all(queries, RouteMode::memorizer_only, workers), queries).all.acc;
}

/// For each epsilon and repeat, anonymizes `bank` against the vocabulary of
/// `graph`, runs the restoration attack and measures memorizer-only accuracy
/// of `queries` on the released bank. Repeat r uses the same seed for every
/// epsilon, so keep events are nested in epsilon within a repeat.
inline PrivacyAuditReport privacy_audit(const MemoryBank& bank, const Hypergraph& graph, const std::vector<Query>& queries,
                                        const PrivacyAuditConfig& cfg, EmbeddingProvider& provider, LlmBackend& llm,
                                        const RouteConfig& route = {}, int workers = 1) {
    cfg.validate();
    PrivacyAuditReport report;
    report.config = cfg;
    const auto vocab = TypedVocabulary::from_graph(graph, cfg.ldp.sensitive_types, provider);

    std::vector<Substitution> identity;
    for (const auto& it : bank.items) {
        std::set<std::string> seen;
        for (const auto& f : it.facts)
            if (cfg.ldp.sensitive_types.contains(f.type) && seen.insert(f.span).second) identity.push_back({it.id, f.span, f.span, f.type});
    }
    const auto ceiling = restoration_attack(bank, bank, identity, vocab, provider);
    report.control = {std::nullopt, ceiling.rest_at_1(), memorizer_accuracy(bank, graph, queries, provider, llm, route, workers), 0.0,
                      static_cast<double>(ceiling.attacked)};

    auto epsilons = cfg.epsilons;
    std::sort(epsilons.begin(), epsilons.end());
    for (double eps : epsilons) {
        PrivacyAuditRow row;
        row.epsilon = eps;
        for (int r = 0; r < cfg.repeats; ++r) {
            auto ldp = cfg.ldp;
            ldp.epsilon = eps;
            ldp.seed = derive_seed(cfg.ldp.seed, "audit/repeat/" + std::to_string(r));
            const auto anon = anonymize(bank, vocab, ldp, provider, workers);
            const auto attack = restoration_attack(bank, anon.bank, anon.substitutions, vocab, provider);
            row.rest_at_1 += attack.rest_at_1();
            row.attacked += static_cast<double>(attack.attacked);
            row.downstream_acc += memorizer_accuracy(anon.bank, graph, queries, provider, llm, route, workers);
            row.perturbed_fraction += anon.audit.sensitive_spans
                                          ? static_cast<double>(anon.audit.perturbed_spans) / static_cast<double>(anon.audit.sensitive_spans)
                                          : 0.0;
        }
        const double n = cfg.repeats;
        row.rest_at_1 /= n;
        row.attacked /= n;
        row.downstream_acc /= n;
        row.perturbed_fraction /= n;
        report.rows.push_back(row);
    }
    return report;
}

} // namespace fdrag
