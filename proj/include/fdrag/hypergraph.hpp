#pragma once

// Semantic hypergraph learning.
//
// For each granularity a soft incidence matrix H (N nodes x M hyperedges,
// rows on the probability simplex) is learned by projected gradient descent
// on
//
//   L_total = sum_t  lambda * L_intra^t + (1 - lambda) * L_inter^t
//
// with membership-weighted prototypes e_m = sum_n H_nm x_n / sum_n H_nm.
// Training uses the soft weights throughout; the binary incidence only
// appears after sparsification at threshold mu. All Euclidean norms are
// smoothed as sqrt(|.|^2 + eps_s) so the objective is differentiable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fdrag/corpus.hpp"
#include "fdrag/embedding.hpp"
#include "fdrag/error.hpp"
#include "fdrag/rng.hpp"
#include "fdrag/simplex.hpp"

namespace fdrag {

/// Added to every column mass so empty columns do not divide by zero.
inline constexpr double kMassEpsilon = 1e-12;

struct TrainConfig {
    double learning_rate = 0.05;
    int steps = 300;
    double lambda = 0.6;
    double margin = 1.0;     // gamma in the inter-hyperedge hinge
    double mu = 0.5;         // sparsification threshold
    double smoothing = 1e-8; // eps_s
    std::optional<int> edges_paragraph;  // default ceil(N/4)
    std::optional<int> edges_sentence;
    std::uint64_t seed = 0;
    bool line_search = true;
    int max_halvings = 30;
    int max_edges = 4096;
    int restarts = 1;  // independent initializations; the lowest final loss wins

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
        if (!(mu > 0.0 && mu <= 1.0)) throw InputError("mu must lie in (0, 1]");
        if (!(margin > 0.0)) throw InputError("margin must be > 0");
        if (steps < 1) throw InputError("steps must be >= 1");
        if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
        if (!(smoothing > 0.0)) throw InputError("smoothing must be > 0");
        if (restarts < 1) throw InputError("restarts must be >= 1");
    }

    static int default_edges(Eigen::Index n) { return static_cast<int>((n + 3) / 4); }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"steps", c.steps},   {"lambda", c.lambda},
         {"margin", c.margin},               {"mu", c.mu},         {"smoothing", c.smoothing},
         {"seed", c.seed},                   {"line_search", c.line_search}, {"max_halvings", c.max_halvings},
         {"max_edges", c.max_edges}, {"restarts", c.restarts}};
    if (c.edges_paragraph) j["edges_paragraph"] = *c.edges_paragraph;
    if (c.edges_sentence) j["edges_sentence"] = *c.edges_sentence;
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.lambda = j.value("lambda", c.lambda);
    c.margin = j.value("margin", c.margin);
    c.mu = j.value("mu", c.mu);
    c.smoothing = j.value("smoothing", c.smoothing);
    c.seed = j.value("seed", c.seed);
    c.line_search = j.value("line_search", c.line_search);
    c.max_halvings = j.value("max_halvings", c.max_halvings);
    c.max_edges = j.value("max_edges", c.max_edges);
    c.restarts = j.value("restarts", c.restarts);
    if (j.contains("edges_paragraph") && !j["edges_paragraph"].is_null()) c.edges_paragraph = j["edges_paragraph"].get<int>();
    if (j.contains("edges_sentence") && !j["edges_sentence"].is_null()) c.edges_sentence = j["edges_sentence"].get<int>();
}

struct SoftIncidence {
    Granularity granularity = Granularity::paragraph;
    Eigen::MatrixXd H;
};

/// Positive uniform entries, each row divided by its sum.
inline Eigen::MatrixXd init_soft_incidence(Eigen::Index n, Eigen::Index m, Rng& rng, int max_edges = 4096) {
    if (n < 1 || m < 1) throw InputError("init_soft_incidence: N and M must be >= 1");
    if (m > max_edges) throw InputError("init_soft_incidence: M=" + std::to_string(m) + " exceeds cap " + std::to_string(max_edges));
    Eigen::MatrixXd h(n, m);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < m; ++c) h(r, c) = uniform_open(rng);
        h.row(r) /= h.row(r).sum();
    }
    return h;
}

inline Eigen::MatrixXd init_soft_incidence(Eigen::Index n, Eigen::Index m, std::uint64_t seed, int max_edges = 4096) {
    Rng rng(seed);
    return init_soft_incidence(n, m, rng, max_edges);
}

/// Prototype rows e_m = (sum_n H_nm x_n) / (sum_n H_nm + 1e-12); M x D.
inline Eigen::MatrixXd prototypes(const Eigen::Ref<const Eigen::MatrixXd>& h, const Eigen::Ref<const Eigen::MatrixXd>& x) {
    if (h.rows() != x.rows()) throw InputError("prototypes: incidence and embeddings disagree on node count");
    const Eigen::VectorXd mass = h.colwise().sum().transpose().array() + kMassEpsilon;
    Eigen::MatrixXd p = h.transpose() * x;
    p.array().colwise() /= mass.array();
    return p;
}

inline double smoothed_norm(const Eigen::Ref<const Eigen::VectorXd>& v, double eps) { return std::sqrt(v.squaredNorm() + eps); }

/// (1/M) sum_m [sum_n H_nm d(x_n, e_m)] / [sum_n H_nm + 1e-12]
inline double loss_intra(const Eigen::Ref<const Eigen::MatrixXd>& h, const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::MatrixXd>& protos, double eps) {
    const Eigen::Index m = h.cols();
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        double num = 0.0, mass = kMassEpsilon;
        for (Eigen::Index n = 0; n < h.rows(); ++n) {
            num += h(n, j) * smoothed_norm((x.row(n) - protos.row(j)).transpose(), eps);
            mass += h(n, j);
        }
        total += num / mass;
    }
    return total / static_cast<double>(m);
}

/// Cosine between prototypes, computed on smoothed-norm unit copies.
inline double prototype_cosine(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b, double eps) {
    return a.dot(b) / (smoothed_norm(a, eps) * smoothed_norm(b, eps));
}

/// (1/M^2) sum_{i,j} [rho_ij d_ij + (1 - rho_ij) max(gamma - d_ij, 0)], diagonal included.
inline double loss_inter(const Eigen::Ref<const Eigen::MatrixXd>& protos, double gamma, double eps) {
    const Eigen::Index m = protos.rows();
    if (m < 1) throw InputError("loss_inter: no prototypes");
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const double d = smoothed_norm((protos.row(i) - protos.row(j)).transpose(), eps);
            const double rho = prototype_cosine(protos.row(i).transpose(), protos.row(j).transpose(), eps);
            total += rho * d + (1.0 - rho) * std::max(gamma - d, 0.0);
        }
    }
    return total / static_cast<double>(m * m);
}

struct GranularityLoss {
    double intra = 0.0;
    double inter = 0.0;
};

/// sum_t (lambda * intra_t + (1 - lambda) * inter_t)
inline double loss_total(const std::vector<GranularityLoss>& parts, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
    double total = 0.0;
    for (const auto& p : parts) total += lambda * p.intra + (1.0 - lambda) * p.inter;
    return total;
}

namespace detail {

struct Evaluation {
    GranularityLoss parts;
    double weighted = 0.0;
    Eigen::MatrixXd grad;  // empty unless requested
};

/// Value and (optionally) the exact gradient of lambda*L_intra + (1-lambda)*L_inter
/// for one granularity, differentiating through the prototypes.
inline Evaluation evaluate(const Eigen::Ref<const Eigen::MatrixXd>& h, const Eigen::Ref<const Eigen::MatrixXd>& x,
                           const TrainConfig& cfg, bool with_grad) {
    const Eigen::Index n_nodes = h.rows(), m = h.cols(), dim = x.cols();
    const double eps = cfg.smoothing;
    const double w_intra = cfg.lambda, w_inter = 1.0 - cfg.lambda;
    const double md = static_cast<double>(m);

    const Eigen::VectorXd mass = h.colwise().sum().transpose().array() + kMassEpsilon;
    Eigen::MatrixXd protos = h.transpose() * x;
    protos.array().colwise() /= mass.array();

    Evaluation ev;
    Eigen::MatrixXd dist(n_nodes, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index n = 0; n < n_nodes; ++n) dist(n, j) = std::sqrt((x.row(n) - protos.row(j)).squaredNorm() + eps);
    const Eigen::VectorXd weighted_dist = (h.array() * dist.array()).colwise().sum().transpose();
    ev.parts.intra = (weighted_dist.array() / mass.array()).sum() / md;

    Eigen::MatrixXd grad_protos;
    if (with_grad) {
        ev.grad = Eigen::MatrixXd::Zero(n_nodes, m);
        grad_protos = Eigen::MatrixXd::Zero(m, dim);
        for (Eigen::Index j = 0; j < m; ++j) {
            const double s = mass[j];
            for (Eigen::Index n = 0; n < n_nodes; ++n) {
                ev.grad(n, j) += w_intra / md * (dist(n, j) / s - weighted_dist[j] / (s * s));
                grad_protos.row(j) += (w_intra / (md * s)) * h(n, j) / dist(n, j) * (protos.row(j) - x.row(n));
            }
        }
    }

    Eigen::VectorXd pnorm(m);
    for (Eigen::Index i = 0; i < m; ++i) pnorm[i] = std::sqrt(protos.row(i).squaredNorm() + eps);
    double inter = 0.0;
    const double scale = w_inter / (md * md);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::RowVectorXd diff = protos.row(i) - protos.row(j);
            const double d = std::sqrt(diff.squaredNorm() + eps);
            const double rho = protos.row(i).dot(protos.row(j)) / (pnorm[i] * pnorm[j]);
            const double hinge = std::max(cfg.margin - d, 0.0);
            inter += rho * d + (1.0 - rho) * hinge;
            if (!with_grad) continue;
            const double df_dd = rho - (cfg.margin > d ? (1.0 - rho) : 0.0);
            const double df_drho = d - hinge;
            const double inv = 1.0 / (pnorm[i] * pnorm[j]);
            grad_protos.row(i) += scale * (df_dd / d * diff +
                                           df_drho * (protos.row(j) * inv - rho * protos.row(i) / (pnorm[i] * pnorm[i])));
            grad_protos.row(j) += scale * (-df_dd / d * diff +
                                           df_drho * (protos.row(i) * inv - rho * protos.row(j) / (pnorm[j] * pnorm[j])));
        }
    }
    ev.parts.inter = inter / (md * md);
    ev.weighted = w_intra * ev.parts.intra + w_inter * ev.parts.inter;

    if (with_grad) {
        // d e_m / d H_nm = (x_n - e_m) / s_m
        const Eigen::MatrixXd xg = x * grad_protos.transpose();                        // N x M: x_n . g_m
        const Eigen::VectorXd eg = (protos.array() * grad_protos.array()).rowwise().sum();  // e_m . g_m
        for (Eigen::Index j = 0; j < m; ++j)
            ev.grad.col(j) += ((xg.col(j).array() - eg[j]) / mass[j]).matrix();
    }
    return ev;
}

} // namespace detail

/// Joint state of the two granularities.
struct IncidencePair {
    Eigen::MatrixXd paragraph;
    Eigen::MatrixXd sentence;
};

struct ObjectiveValue {
    double total = 0.0;
    GranularityLoss paragraph;
    GranularityLoss sentence;
};

inline ObjectiveValue objective(const IncidencePair& h, const Eigen::MatrixXd& xp, const Eigen::MatrixXd& xs, const TrainConfig& cfg) {
    const auto p = detail::evaluate(h.paragraph, xp, cfg, false);
    const auto s = detail::evaluate(h.sentence, xs, cfg, false);
    return {p.weighted + s.weighted, p.parts, s.parts};
}

/// Exact gradient of loss_total with respect to every entry of both incidences.
inline IncidencePair grad_total(const IncidencePair& h, const Eigen::MatrixXd& xp, const Eigen::MatrixXd& xs, const TrainConfig& cfg) {
    if (!(cfg.smoothing > 0.0)) throw InputError("grad_total requires smoothing > 0");
    return {detail::evaluate(h.paragraph, xp, cfg, true).grad, detail::evaluate(h.sentence, xs, cfg, true).grad};
}

struct PgdStep {
    Eigen::MatrixXd next;
    double gm_norm = 0.0;  // Frobenius norm of (H - next) / eta
};

/// next = rowwise Proj(H - eta * grad); G = (H - next) / eta.
inline PgdStep pgd_step(const Eigen::Ref<const Eigen::MatrixXd>& h, const Eigen::Ref<const Eigen::MatrixXd>& grad, double eta) {
    if (!(eta > 0.0)) throw InputError("pgd_step: eta must be > 0");
    PgdStep out;
    out.next = project_rows_to_simplex(h - eta * grad);
    out.gm_norm = ((h - out.next) / eta).norm();
    return out;
}

struct TrainDiagnostics {
    double initial_loss = 0.0;
    std::vector<double> loss_trace;     // loss after step k
    std::vector<double> gm_norm_trace;  // ||G_k||
    std::vector<double> local_L_trace;  // smoothness estimate at step k
    std::vector<double> eta_trace;      // accepted step size
    int descent_violations = 0;

    std::size_t steps() const { return loss_trace.size(); }

    void write_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw InputError("cannot write " + path.string());
        out << "step,loss,gm_norm,local_L,eta\n";
        out.precision(17);
        for (std::size_t k = 0; k < loss_trace.size(); ++k)
            out << k << ',' << loss_trace[k] << ',' << gm_norm_trace[k] << ',' << local_L_trace[k] << ',' << eta_trace[k] << '\n';
    }
};

struct TrainResult {
    IncidencePair incidence;
    TrainDiagnostics diagnostics;
};

namespace detail {

inline TrainResult train_once(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& xs, const TrainConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const int mp = cfg.edges_paragraph.value_or(TrainConfig::default_edges(xp.rows()));
    const int ms = cfg.edges_sentence.value_or(TrainConfig::default_edges(xs.rows()));
    TrainResult res;
    res.incidence.paragraph = init_soft_incidence(xp.rows(), mp, rng, cfg.max_edges);
    res.incidence.sentence = init_soft_incidence(xs.rows(), ms, rng, cfg.max_edges);
    auto& h = res.incidence;
    auto& diag = res.diagnostics;

    auto check = [](double v, int step) {
        if (!std::isfinite(v)) throw NumericError("non-finite loss at step " + std::to_string(step));
    };

    double loss = objective(h, xp, xs, cfg).total;
    check(loss, 0);
    diag.initial_loss = loss;
    IncidencePair grad = grad_total(h, xp, xs, cfg);

    for (int k = 0; k < cfg.steps; ++k) {
        double eta = cfg.learning_rate;
        IncidencePair next;
        double gm_sq = 0.0, next_loss = loss;
        bool accepted = false;
        const int trials = cfg.line_search ? cfg.max_halvings + 1 : 1;
        for (int t = 0; t < trials; ++t) {
            auto sp = pgd_step(h.paragraph, grad.paragraph, eta);
            auto ss = pgd_step(h.sentence, grad.sentence, eta);
            next = {std::move(sp.next), std::move(ss.next)};
            gm_sq = sp.gm_norm * sp.gm_norm + ss.gm_norm * ss.gm_norm;
            next_loss = objective(next, xp, xs, cfg).total;
            check(next_loss, k + 1);
            if (next_loss <= loss - 0.5 * eta * gm_sq) {
                accepted = true;
                break;
            }
            if (t + 1 < trials) eta *= 0.5;
        }
        if (!accepted) ++diag.descent_violations;

        if (cfg.line_search && !accepted) {
            diag.loss_trace.push_back(loss);
            diag.gm_norm_trace.push_back(std::sqrt(gm_sq));
            diag.local_L_trace.push_back(1.0 / eta);
            diag.eta_trace.push_back(eta);
            continue;
        }
        IncidencePair next_grad = grad_total(next, xp, xs, cfg);
        double local_l = 1.0 / eta;
        if (!cfg.line_search) {
            const double dh = std::sqrt((next.paragraph - h.paragraph).squaredNorm() + (next.sentence - h.sentence).squaredNorm());
            const double dg = std::sqrt((next_grad.paragraph - grad.paragraph).squaredNorm() +
                                        (next_grad.sentence - grad.sentence).squaredNorm());
            local_l = dh > 0.0 ? dg / dh : 0.0;
        }
        diag.loss_trace.push_back(next_loss);
        diag.gm_norm_trace.push_back(std::sqrt(gm_sq));
        diag.local_L_trace.push_back(local_l);
        diag.eta_trace.push_back(eta);
        h = std::move(next);
        grad = std::move(next_grad);
        loss = next_loss;
    }
    return res;
}

} // namespace detail

/// Joint projected gradient descent over both granularities.
///
/// With line search on, each step starts from the configured learning rate
/// and halves (at most max_halvings times) until
///   L(next) <= L(H) - (eta/2) ||G||^2,
/// recording L_hat = 1/eta. If no step size qualifies the iterate stays put
/// and the step counts as a descent violation. With line search off the fixed
/// learning rate is used and L_hat is the secant estimate
/// ||grad_{k+1} - grad_k|| / ||H_{k+1} - H_k||.
///
/// Runs `restarts` independent trainings (the first from `seed`, the rest from
/// derived seeds) and keeps the one with the lowest final loss, earliest on ties.
inline TrainResult train_incidence(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& xs, const TrainConfig& cfg) {
    cfg.validate();
    if (xp.rows() < 1 || xs.rows() < 1) throw InputError("train: both granularities need at least one node");
    TrainResult best = detail::train_once(xp, xs, cfg, cfg.seed);
    for (int r = 1; r < cfg.restarts; ++r) {
        auto run = detail::train_once(xp, xs, cfg, derive_seed(cfg.seed, "restart/" + std::to_string(r)));
        if (run.diagnostics.loss_trace.back() < best.diagnostics.loss_trace.back()) best = std::move(run);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Sparsification and hyperedge materialization

struct SparseIncidence {
    Eigen::MatrixXd binary;                      // N x M' over kept columns
    std::vector<Eigen::Index> kept_columns;      // original column of each kept hyperedge
    std::vector<std::vector<Eigen::Index>> members;  // node indices per kept hyperedge
};

/// H_nm = 1 iff soft_nm >= mu; a row with no such entry keeps its argmax
/// (lowest column on ties). Empty columns are dropped and the rest compacted.
inline SparseIncidence sparsify(const Eigen::Ref<const Eigen::MatrixXd>& soft, double mu) {
    if (!(mu > 0.0 && mu <= 1.0)) throw InputError("mu must lie in (0, 1]");
    const Eigen::Index n = soft.rows(), m = soft.cols();
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, m);
    for (Eigen::Index r = 0; r < n; ++r) {
        bool any = false;
        Eigen::Index best = 0;
        for (Eigen::Index c = 0; c < m; ++c) {
            if (soft(r, c) >= mu) {
                full(r, c) = 1.0;
                any = true;
            }
            if (soft(r, c) > soft(r, best)) best = c;
        }
        if (!any) full(r, best) = 1.0;
    }
    SparseIncidence out;
    for (Eigen::Index c = 0; c < m; ++c)
        if (full.col(c).sum() > 0.0) out.kept_columns.push_back(c);
    out.binary.resize(n, static_cast<Eigen::Index>(out.kept_columns.size()));
    for (std::size_t k = 0; k < out.kept_columns.size(); ++k) {
        out.binary.col(static_cast<Eigen::Index>(k)) = full.col(out.kept_columns[k]);
        std::vector<Eigen::Index> mem;
        for (Eigen::Index r = 0; r < n; ++r)
            if (full(r, out.kept_columns[k]) > 0.0) mem.push_back(r);
        out.members.push_back(std::move(mem));
    }
    return out;
}

struct Hyperedge {
    std::string id;
    Granularity granularity = Granularity::paragraph;
    std::vector<std::string> members;  // unit ids
    Eigen::VectorXd prototype;
    std::vector<std::string> contexts;
    std::vector<TypedFact> facts;
    AnchorSet anchors;
};

inline std::string hyperedge_id(Granularity g, std::size_t index) {
    std::string digits = std::to_string(index);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return (g == Granularity::paragraph ? "p" : "s") + digits;
}

/// Unions facts of the member units, deduplicated by (span, type) in unit order.
inline std::vector<TypedFact> hyperedge_facts(const std::vector<TextUnit>& members, const Lexicon& lx) {
    std::vector<TypedFact> out;
    std::set<std::pair<std::string, FactType>> seen;
    for (auto& f : extract_typed_facts(members, lx))
        if (seen.emplace(f.span, f.type).second) out.push_back(std::move(f));
    return out;
}

inline void fill_anchors(Hyperedge& e, const Lexicon& lx) {
    e.anchors.clear();
    for (const auto& c : e.contexts) {
        auto a = extract_anchors(c, lx);
        e.anchors.insert(a.begin(), a.end());
    }
}

inline std::vector<Hyperedge> materialize(Granularity g, const std::vector<TextUnit>& units, const Eigen::MatrixXd& x,
                                          const SparseIncidence& sparse, const Lexicon& lx) {
    const Eigen::MatrixXd protos = prototypes(sparse.binary, x);
    std::vector<Hyperedge> out;
    for (std::size_t k = 0; k < sparse.members.size(); ++k) {
        Hyperedge e;
        e.id = hyperedge_id(g, k);
        e.granularity = g;
        e.prototype = protos.row(static_cast<Eigen::Index>(k)).transpose();
        std::vector<TextUnit> mem;
        for (auto r : sparse.members[k]) {
            const auto& u = units[static_cast<std::size_t>(r)];
            e.members.push_back(u.unit_id);
            e.contexts.push_back(u.text);
            mem.push_back(u);
        }
        e.facts = hyperedge_facts(mem, lx);
        fill_anchors(e, lx);
        out.push_back(std::move(e));
    }
    return out;
}

struct Hypergraph {
    std::vector<Hyperedge> hyperedges;  // paragraph edges then sentence edges
    TrainConfig config;
    std::string diagnostics_path;

    const Hyperedge* find(std::string_view id) const {
        for (const auto& e : hyperedges)
            if (e.id == id) return &e;
        return nullptr;
    }

    const Hyperedge& at(std::string_view id) const {
        if (const auto* e = find(id)) return *e;
        throw InputError("unknown hyperedge id: " + std::string(id));
    }
};

struct BuiltHypergraph {
    Hypergraph graph;
    TrainDiagnostics diagnostics;
};

/// Trains both incidences on the segmented corpus, sparsifies at mu and
/// materializes E = E^p u E^s.
inline BuiltHypergraph build_hypergraph(const Segmentation& seg, const EmbeddingMatrix& xp, const EmbeddingMatrix& xs,
                                        const TrainConfig& cfg, const Lexicon& lx = Lexicon::builtin()) {
    if (static_cast<std::size_t>(xp.rows()) != seg.paragraphs.size() || static_cast<std::size_t>(xs.rows()) != seg.sentences.size())
        throw InputError("build_hypergraph: embedding rows do not match unit counts");
    auto trained = train_incidence(xp.values, xs.values, cfg);
    BuiltHypergraph out;
    out.graph.config = cfg;
    out.diagnostics = std::move(trained.diagnostics);
    auto ep = materialize(Granularity::paragraph, seg.paragraphs, xp.values, sparsify(trained.incidence.paragraph, cfg.mu), lx);
    auto es = materialize(Granularity::sentence, seg.sentences, xs.values, sparsify(trained.incidence.sentence, cfg.mu), lx);
    out.graph.hyperedges = std::move(ep);
    for (auto& e : es) out.graph.hyperedges.push_back(std::move(e));
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json hypergraph_to_json(const Hypergraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.hyperedges) {
        nlohmann::json facts = nlohmann::json::array();
        for (const auto& f : e.facts) facts.push_back({f.span, std::string(to_string(f.type)), f.source_unit_id});
        edges.push_back({{"id", e.id},
                         {"granularity", std::string(to_string(e.granularity))},
                         {"members", e.members},
                         {"prototype", std::vector<double>(e.prototype.data(), e.prototype.data() + e.prototype.size())},
                         {"contexts", e.contexts},
                         {"facts", facts}});
    }
    return {{"hyperedges", edges}, {"config", g.config}, {"diagnostics_path", g.diagnostics_path}};
}

inline Hypergraph hypergraph_from_json(const nlohmann::json& j, const Lexicon& lx = Lexicon::builtin()) {
    Hypergraph g;
    g.config = j.value("config", nlohmann::json::object()).get<TrainConfig>();
    g.diagnostics_path = j.value("diagnostics_path", "");
    for (const auto& je : j.at("hyperedges")) {
        Hyperedge e;
        e.id = je.at("id").get<std::string>();
        e.granularity = parse_granularity(je.at("granularity").get<std::string>());
        e.members = je.at("members").get<std::vector<std::string>>();
        const auto proto = je.at("prototype").get<std::vector<double>>();
        e.prototype = Eigen::Map<const Eigen::VectorXd>(proto.data(), static_cast<Eigen::Index>(proto.size()));
        e.contexts = je.at("contexts").get<std::vector<std::string>>();
        for (const auto& jf : je.at("facts")) {
            TypedFact f{jf.at(0).get<std::string>(), parse_fact_type(jf.at(1).get<std::string>()), ""};
            if (jf.size() > 2) f.source_unit_id = jf.at(2).get<std::string>();
            e.facts.push_back(std::move(f));
        }
        if (e.members.empty()) throw InputError("hyperedge " + e.id + " has no members");
        fill_anchors(e, lx);
        g.hyperedges.push_back(std::move(e));
    }
    return g;
}

inline void save_hypergraph(const Hypergraph& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << hypergraph_to_json(g).dump(1) << '\n';
}

inline Hypergraph load_hypergraph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return hypergraph_from_json(nlohmann::json::parse(in));
}

} // namespace fdrag
