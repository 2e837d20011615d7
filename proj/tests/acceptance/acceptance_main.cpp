// Acceptance suite: one PASS/FAIL line per criterion; exit status is the
// number of failed criteria (capped at 1).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fdrag/app.hpp"
#include "fdrag/simplex.hpp"
#include "../support/oracles.hpp"

using namespace fdrag;

namespace {

const std::filesystem::path kFixtures = FDRAG_FIXTURE_DIR;
const std::string kCli = FDRAG_CLI_PATH;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fdrag_acceptance_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

RunConfig fixture_config(const std::filesystem::path& config, const std::filesystem::path& out) {
    return load_config(config, {"output_dir=" + nlohmann::json(out.string()).dump()});
}

// 1 -------------------------------------------------------------------------
Outcome simplex_projection() {
    Rng rng(20240601);
    double worst = 0.0, projection_s = 0.0;
    int kkt_failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(uniform_index(rng, 5));
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = 2.0 * standard_normal(rng);
        const auto t0 = Clock::now();
        const Eigen::VectorXd x = project_to_simplex(v);
        projection_s += since(t0);
        worst = std::max(worst, (x - oracle::grid_project(v)).norm());
        kkt_failures += !oracle::simplex_kkt(v, x);
    }
    return {worst <= 1e-3 && kkt_failures == 0 && projection_s < 5.0,
            "max L2 gap to grid oracle " + fmt(worst) + ", KKT failures " + std::to_string(kkt_failures) + ", projection time " +
                fmt(projection_s) + " s"};
}

// 2 -------------------------------------------------------------------------
Outcome descent_lemma() {
    const auto t0 = Clock::now();
    ConvergenceConfig cfg;
    cfg.horizons = {50, 100, 200, 300};
    int violations = 0, reported = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = gaussian_blobs(40, 8, 4, cfg.spread, derive_seed(seed, "convergence/paragraph"));
        const auto s = gaussian_blobs(40, 8, 4, cfg.spread, derive_seed(seed, "convergence/sentence"));
        TrainConfig train;
        train.steps = 300;
        train.seed = derive_seed(seed, "convergence/init");
        const auto d = train_incidence(p.x, s.x, train).diagnostics;
        reported += d.descent_violations;
        double prev = d.initial_loss;
        for (std::size_t k = 0; k < d.steps(); ++k) {
            const double g = d.gm_norm_trace[k];
            const double need = g * g / (2.0 * d.local_L_trace[k]);
            violations += d.loss_trace[k] > prev - need + 1e-12 * std::abs(prev);
            prev = d.loss_trace[k];
        }
    }
    const double secs = since(t0);
    return {violations == 0 && reported == 0 && secs < 60.0,
            "violations " + std::to_string(violations) + " (trainer-reported " + std::to_string(reported) + ") over 10 seeds x 300 steps, " +
                fmt(secs) + " s"};
}

// 3 -------------------------------------------------------------------------
Outcome trace_bound_and_slope() {
    const auto report = verify_convergence({}, std::nullopt, 4);
    int bound_failures = 0, slope_passes = 0;
    std::string slopes;
    for (const auto& s : report.seeds) {
        const auto& d = s.diagnostics;
        std::vector<double> lx, ly;
        for (int t : {50, 100, 200, 400}) {
            double min_sq = INFINITY, l_max = 0.0;
            for (int k = 0; k < t; ++k) {
                min_sq = std::min(min_sq, d.gm_norm_trace[static_cast<std::size_t>(k)] * d.gm_norm_trace[static_cast<std::size_t>(k)]);
                l_max = std::max(l_max, d.local_L_trace[static_cast<std::size_t>(k)]);
            }
            bound_failures += min_sq > 2.0 * l_max * (d.initial_loss - d.loss_trace[static_cast<std::size_t>(t - 1)]) / t;
            lx.push_back(std::log(t));
            ly.push_back(std::log(min_sq));
        }
        const double slope = oracle::ols_slope(lx, ly);
        slope_passes += slope <= -0.8;
        slopes += (slopes.empty() ? "" : ",") + fmt(slope, 3);
    }
    return {bound_failures == 0 && slope_passes >= 8,
            "bound failures " + std::to_string(bound_failures) + ", slope <= -0.8 on " + std::to_string(slope_passes) + "/10 seeds [" + slopes + "]"};
}

// 4 -------------------------------------------------------------------------
Outcome gradient_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(derive_seed(seed, "acceptance/gradient"));
        const auto unit_rows = [&](int n, int d) {
            Eigen::MatrixXd x(n, d);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) x(i, j) = standard_normal(rng);
                x.row(i).normalize();
            }
            return x;
        };
        const auto interior = [&](int n, int m) {
            Eigen::MatrixXd h(n, m);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < m; ++j) h(i, j) = 0.2 + uniform_open(rng);
                h.row(i) /= h.row(i).sum();
            }
            return h;
        };
        const auto xp = unit_rows(10, 6), xs = unit_rows(14, 6);
        IncidencePair h{interior(10, 3), interior(14, 4)};
        const TrainConfig cfg;
        const auto g = grad_total(h, xp, xs, cfg);
        for (int k = 0; k < 20; ++k) {
            const bool para = uniform_index(rng, 2) == 0;
            const auto& mat = para ? h.paragraph : h.sentence;
            const auto r = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(mat.rows())));
            const auto c = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(mat.cols())));
            const auto f = [&](const Eigen::MatrixXd& m) {
                IncidencePair moved = h;
                (para ? moved.paragraph : moved.sentence) = m;
                return objective(moved, xp, xs, cfg).total;
            };
            const double fd = oracle::central_difference(f, mat, r, c);
            const double an = (para ? g.paragraph : g.sentence)(r, c);
            worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-8));
        }
    }
    return {worst < 1e-4, "max relative error " + fmt(worst) + " over 5 seeds x 20 coordinates"};
}

// 5 -------------------------------------------------------------------------
Outcome cluster_recovery() {
    int perfect = 0;
    std::string aris;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto blobs = gaussian_blobs(30, 8, 3, 0.1, 500 + seed);
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.learning_rate = 50.0;
        cfg.restarts = 5;
        cfg.edges_paragraph = cfg.edges_sentence = 3;
        const auto r = train_incidence(blobs.x, blobs.x, cfg);
        double worst = 1.0;
        for (const auto* h : {&r.incidence.paragraph, &r.incidence.sentence}) {
            const auto sp = sparsify(*h, cfg.mu);
            std::vector<int> found(30, -1);
            for (std::size_t k = 0; k < sp.members.size(); ++k)
                for (auto n : sp.members[k]) found[static_cast<std::size_t>(n)] = static_cast<int>(k);
            worst = std::min(worst, adjusted_rand_index(found, blobs.labels));
        }
        perfect += worst == 1.0;
        aris += (aris.empty() ? "" : ",") + fmt(worst, 3);
    }
    return {perfect == 10, "ARI 1.0 on " + std::to_string(perfect) + "/10 seeds [" + aris + "]"};
}

// 6 -------------------------------------------------------------------------
Outcome ldp_exactness() {
    double worst_ratio = 0.0, worst_mc = 0.0, worst_mc_rel = 0.0;
    for (double eps : {0.1, 0.5, 1.0, 2.0})
        for (int c : {2, 5, 10}) {
            const auto t = mechanism_table(eps, c);
            double ratio = 0.0;
            for (Eigen::Index j = 0; j < t.cols(); ++j)
                for (Eigen::Index a = 0; a < t.rows(); ++a)
                    for (Eigen::Index b = 0; b < t.rows(); ++b) ratio = std::max(ratio, t(a, j) / t(b, j));
            worst_ratio = std::max(worst_ratio, std::abs(ratio - std::exp(eps)));

            CandidateSet w{"x", {}};
            for (int k = 1; k < c; ++k) w.alternatives.push_back("alt" + std::to_string(k));
            Rng rng(derive_seed(99, "acceptance/ldp/" + fmt(eps) + "/" + std::to_string(c)));
            int kept = 0;
            for (int i = 0; i < 100000; ++i) kept += perturb(w, eps, rng) == "x";
            const double expect = std::exp(eps) / (std::exp(eps) + c - 1);
            const double gap = std::abs(kept / 100000.0 - expect);
            worst_mc = std::max(worst_mc, gap);
            worst_mc_rel = std::max(worst_mc_rel, gap / expect);
        }
    return {worst_ratio <= 1e-9 && worst_mc <= 0.01,
            "max |ratio - e^eps| " + fmt(worst_ratio) + ", max keep-frequency gap " + fmt(worst_mc) + " (" + fmt(100 * worst_mc_rel, 3) +
                "% relative)"};
}

// 7 -------------------------------------------------------------------------
Outcome routing_endpoints() {
    const auto cfg = fixture_config(kFixtures / "config.json", scratch("routing"));
    auto rt = make_runtime(cfg);
    const auto docs = read_documents(cfg.corpus);
    const auto queries = read_queries(cfg.queries);
    const auto p = build_pipeline(docs, cfg.train, *rt.generator, *rt.provider, cfg.memory);
    const Router router(p.bank, p.graph, *rt.provider, *rt.llm, cfg.route);
    const auto sweep = sweep_delta(router, queries, cfg.sweep_grid, cfg.workers);
    const auto strip = [](MetricsReport m) {
        for (auto* s : {&m.all, &m.local, &m.cross_silo}) s->mean_latency = 0.0;
        return nlohmann::json(m).dump();
    };
    const auto mem = compute_metrics(router.route_all(queries, RouteMode::memorizer_only), queries);
    const auto cog = compute_metrics(router.route_all(queries, RouteMode::cognizer_only), queries);
    const auto& first = sweep.points.front();
    const auto& last = sweep.points.back();
    bool monotone = true;
    for (std::size_t k = 1; k < sweep.points.size(); ++k) monotone = monotone && sweep.points[k].fast_coverage <= sweep.points[k - 1].fast_coverage;
    const bool ok = first.delta == 0.0 && last.delta == 1.01 && first.fast_coverage == 1.0 && last.fast_coverage == 0.0 &&
                    strip(sweep.metrics.front()) == strip(mem) && strip(sweep.metrics.back()) == strip(cog) && monotone;
    return {ok, "coverage " + fmt(first.fast_coverage) + " at delta 0 (ACC " + fmt(first.accuracy) + " vs memorizer-only " + fmt(mem.all.acc) +
                    "), " + fmt(last.fast_coverage) + " at 1.01 (ACC " + fmt(last.accuracy) + " vs cognizer-only " + fmt(cog.all.acc) +
                    "), monotone " + (monotone ? "yes" : "no")};
}

// 8 -------------------------------------------------------------------------
Outcome federation_fixture() {
    const auto cfg = fixture_config(kFixtures / "federation" / "config.json", scratch("federation"));
    auto rt = make_runtime(cfg);
    const auto s = cmd_federate(cfg, rt);
    const bool ok = s.fused.cross_silo.n > 0 && s.fused.cross_silo.acc > s.local_only.cross_silo.acc && s.leaks == 0 && s.rejected == 0;
    return {ok, "cross-silo ACC with fusion " + fmt(s.fused.cross_silo.acc) + " vs without " + fmt(s.local_only.cross_silo.acc) + " (n=" +
                    std::to_string(s.fused.cross_silo.n) + "), leaked 64-char windows " + std::to_string(s.leaks)};
}

// 9 -------------------------------------------------------------------------
Outcome privacy_trend() {
    const auto cfg = fixture_config(kFixtures / "config.json", scratch("privacy"));
    auto rt = make_runtime(cfg);
    cmd_build(cfg, rt);
    auto audit_cfg = cfg;
    audit_cfg.privacy_audit.epsilons = {0.1, 0.5, 1.0, 2.0};
    const auto r = cmd_privacy_audit(audit_cfg, rt);
    bool monotone = true;
    std::string rest;
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        if (k > 0) monotone = monotone && r.rows[k].rest_at_1 >= r.rows[k - 1].rest_at_1;
        rest += (rest.empty() ? "" : ", ") + fmt(*r.rows[k].epsilon) + ":" + fmt(r.rows[k].rest_at_1, 3);
    }
    const bool acc_ok = r.rows.back().downstream_acc >= r.rows.front().downstream_acc;
    return {monotone && acc_ok && r.rows.size() == 4,
            "Rest@1 by epsilon [" + rest + "], downstream ACC " + fmt(r.rows.front().downstream_acc, 3) + " at 0.1 vs " +
                fmt(r.rows.back().downstream_acc, 3) + " at 2.0"};
}

// 10 ------------------------------------------------------------------------

nlohmann::json strip_latency(nlohmann::json j) {
    if (j.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (auto& [k, v] : j.items())
            if (k != "latency_s" && k != "mean_latency") out[k] = strip_latency(v);
        return out;
    }
    if (j.is_array())
        for (auto& v : j) v = strip_latency(v);
    return j;
}

/// File content with latency fields removed: JSON keys for .json/.jsonl,
/// the mean_latency column for .csv.
std::string comparable(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string out, line;
    const auto ext = p.extension().string();
    const bool jsonl = ext == ".jsonl";
    if (ext == ".json" && !p.string().ends_with(".emb")) {
        const std::string all{std::istreambuf_iterator<char>(in), {}};
        return strip_latency(nlohmann::json::parse(all)).dump();
    }
    int drop = -1;
    bool header = true;
    while (std::getline(in, line)) {
        if (jsonl) {
            out += strip_latency(nlohmann::json::parse(line)).dump() + '\n';
            continue;
        }
        if (ext == ".csv") {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (header) {
                for (std::size_t i = 0; i < cells.size(); ++i)
                    if (cells[i] == "mean_latency") drop = static_cast<int>(i);
                header = false;
            }
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (static_cast<int>(i) != drop) out += cells[i] + ',';
            out += '\n';
            continue;
        }
        out += line + '\n';
    }
    return out;
}

int run_cli(const std::string& prefix, const std::string& args) {
    const int status = std::system((prefix + kCli + " " + args + " >/dev/null").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
    const bool isolated = std::system("unshare -n true >/dev/null 2>&1") == 0;
    const std::string prefix = isolated ? "unshare -n " : "";
    std::vector<std::filesystem::path> dirs{scratch("e2e_a"), scratch("e2e_b")};
    double worst_s = 0.0;
    std::string codes;
    for (const auto& dir : dirs) {
        const auto common = " -c " + (kFixtures / "config.json").string() + " -o " + dir.string();
        const auto t0 = Clock::now();
        for (const char* cmd : {"build", "query", "federate", "sweep-delta"}) {
            const int code = run_cli(prefix, cmd + common);
            if (code != 0) codes += std::string(cmd) + "=" + std::to_string(code) + " ";
        }
        worst_s = std::max(worst_s, since(t0));
    }
    std::size_t compared = 0;
    std::vector<std::string> differing;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dirs[0])) {
        if (!entry.is_regular_file() || entry.path().extension() == ".svg") continue;
        const auto rel = std::filesystem::relative(entry.path(), dirs[0]);
        const auto other = dirs[1] / rel;
        ++compared;
        if (!std::filesystem::exists(other) || comparable(entry.path()) != comparable(other)) differing.push_back(rel.string());
    }
    std::string diff;
    for (const auto& d : differing) diff += " " + d;
    return {codes.empty() && worst_s < 120.0 && differing.empty() && compared >= 10,
            std::string(isolated ? "network namespace isolated" : "network isolation unavailable") + ", slowest run " + fmt(worst_s) + " s, " +
                std::to_string(compared) + " files compared, " + std::to_string(differing.size()) + " differ" + diff +
                (codes.empty() ? "" : ", non-zero exits: " + codes)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"simplex projection matches grid oracle", simplex_projection},
        {"descent lemma holds under line search", descent_lemma},
        {"trace bound and 1/T slope", trace_bound_and_slope},
        {"analytic gradient matches finite differences", gradient_check},
        {"three-blob cluster recovery", cluster_recovery},
        {"LDP ratio and keep frequency", ldp_exactness},
        {"routing threshold endpoints", routing_endpoints},
        {"federation fixture fusion and leak check", federation_fixture},
        {"privacy audit trend", privacy_trend},
        {"hermetic end-to-end reproducibility", end_to_end},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "AC" << i + 1 << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": " << o.detail << " ["
                  << fmt(since(t0), 3) << " s]" << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << '/' << criteria.size() << " acceptance criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
