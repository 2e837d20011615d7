#pragma once

// Run configuration and the batch commands behind the command-line tool.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/federation.hpp"
#include "fdrag/harness.hpp"

namespace fdrag {

/// Configuration file problems: missing file, unparsable JSON, bad override.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct LlmSettings {
    std::string backend = "scripted";  // scripted | http
    std::string table;                 // scripted: optional response table
    HttpLlmConfig http{};
};

struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::filesystem::path output_dir = "fdrag-out";
    EmbeddingProviderConfig embedding{};
    LlmSettings llm{};
    std::string generator = "llm";  // llm | template
    TrainConfig train{};
    BankBuildOptions memory{};
    RouteConfig route{};
    std::optional<LdpConfig> ldp;
    PartitionConfig partition{};
    std::vector<double> sweep_grid = default_delta_grid();
    bool sweep_plot = true;
    ConvergenceConfig convergence{};
    PrivacyAuditConfig privacy_audit{};
    int workers = 1;
};

namespace detail {

inline nlohmann::json parse_override_value(const std::string& raw) {
    try {
        return nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        return raw;
    }
}

inline ProviderKind parse_provider_kind(const std::string& s) {
    if (s == "hash") return ProviderKind::hash;
    if (s == "file") return ProviderKind::file;
    if (s == "http") return ProviderKind::http;
    throw ConfigError("unknown embedding kind: " + s);
}

inline http::RetryPolicy parse_retry(const nlohmann::json& j, http::RetryPolicy r) {
    r.max_attempts = j.value("max_attempts", r.max_attempts);
    r.base_delay_s = j.value("base_delay_s", r.base_delay_s);
    r.factor = j.value("factor", r.factor);
    r.timeout_s = j.value("timeout_s", r.timeout_s);
    return r;
}

} // namespace detail

/// Applies "a.b.c=value" to `j`. The value is parsed as JSON when possible
/// and taken as a string otherwise; intermediate objects are created.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("empty key segment in override: " + assignment);
        if (!node->is_object()) *node = nlohmann::json::object();
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = detail::parse_override_value(assignment.substr(eq + 1));
}

/// Builds a RunConfig from parsed JSON. Relative input paths resolve
/// against `base_dir`; the output directory is taken as given.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    const auto resolve = [&](const std::string& p) { return p.empty() ? std::filesystem::path{} : (base_dir / p).lexically_normal(); };
    RunConfig c;
    try {
        c.corpus = resolve(j.value("corpus", ""));
        c.queries = resolve(j.value("queries", ""));
        c.output_dir = j.value("output_dir", c.output_dir.string());
        c.workers = j.value("workers", c.workers);
        c.generator = j.value("generator", c.generator);
        if (c.generator != "llm" && c.generator != "template") throw ConfigError("generator must be llm or template");
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            c.embedding.kind = detail::parse_provider_kind(e.value("kind", "hash"));
            c.embedding.dim = e.value("dim", c.embedding.dim);
            c.embedding.seed = e.value("seed", c.embedding.seed);
            if (e.contains("cache_path")) c.embedding.cache_path = resolve(e["cache_path"].get<std::string>()).string();
            c.embedding.endpoint = e.value("endpoint", c.embedding.endpoint);
            c.embedding.model = e.value("model", c.embedding.model);
            c.embedding.api_key_env = e.value("api_key_env", c.embedding.api_key_env);
            if (e.contains("retry")) c.embedding.retry = detail::parse_retry(e["retry"], c.embedding.retry);
        }
        if (j.contains("llm")) {
            const auto& l = j["llm"];
            c.llm.backend = l.value("backend", c.llm.backend);
            if (c.llm.backend != "scripted" && c.llm.backend != "http") throw ConfigError("llm.backend must be scripted or http");
            if (l.contains("table")) c.llm.table = resolve(l["table"].get<std::string>()).string();
            c.llm.http.endpoint = l.value("endpoint", c.llm.http.endpoint);
            c.llm.http.model = l.value("model", c.llm.http.model);
            c.llm.http.api_key_env = l.value("api_key_env", c.llm.http.api_key_env);
            c.llm.http.max_in_flight = l.value("max_in_flight", c.llm.http.max_in_flight);
            if (l.contains("retry")) c.llm.http.retry = detail::parse_retry(l["retry"], c.llm.http.retry);
        }
        if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
        c.train.validate();
        if (j.contains("memory")) {
            c.memory.per_edge_budget = j["memory"].value("per_edge_budget", c.memory.per_edge_budget);
            c.memory.pair_cap_factor = j["memory"].value("pair_cap_factor", c.memory.pair_cap_factor);
        }
        if (j.contains("route")) c.route = j["route"].get<RouteConfig>();
        c.route.validate();
        if (j.contains("ldp") && !j["ldp"].is_null()) c.ldp = j["ldp"].get<LdpConfig>();
        if (j.contains("partition")) c.partition = j["partition"].get<PartitionConfig>();
        if (j.contains("sweep")) {
            c.sweep_grid = j["sweep"].value("grid", c.sweep_grid);
            c.sweep_plot = j["sweep"].value("plot", c.sweep_plot);
        }
        if (j.contains("convergence")) c.convergence = j["convergence"].get<ConvergenceConfig>();
        if (j.contains("privacy_audit")) c.privacy_audit = j["privacy_audit"].get<PrivacyAuditConfig>();
        c.embedding.validate();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    } catch (const InputError& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    c.memory.workers = static_cast<std::size_t>(c.workers);
    return c;
}

/// Reads `path` (JSON), applies overrides in order and builds the config.
/// Without a path the defaults apply and inputs resolve against the
/// current directory.
inline RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {}) {
    nlohmann::json j = nlohmann::json::object();
    std::filesystem::path base = std::filesystem::current_path();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file " + path->string());
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + path->string() + " is not valid JSON: " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
        base = std::filesystem::absolute(*path).parent_path();
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Runtime

struct Runtime {
    std::unique_ptr<EmbeddingProvider> provider;
    std::unique_ptr<LlmBackend> llm;
    std::unique_ptr<QaGenerator> generator;
};

inline Runtime make_runtime(const RunConfig& cfg) {
    Runtime rt;
    rt.provider = make_provider(cfg.embedding);
    if (cfg.llm.backend == "http") {
        rt.llm = std::make_unique<HttpBackend>(cfg.llm.http);
    } else {
        auto scripted = std::make_unique<ScriptedBackend>();
        if (!cfg.llm.table.empty()) scripted->load_table(cfg.llm.table);
        rt.llm = std::move(scripted);
    }
    if (cfg.generator == "template") rt.generator = std::make_unique<TemplateGenerator>();
    else rt.generator = std::make_unique<LlmGenerator>(*rt.llm);
    return rt;
}

namespace detail {

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

inline void write_jsonl(const std::vector<RouteResult>& results, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (const auto& r : results) out << result_to_json(r).dump() << '\n';
}

inline void require_input(const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config does not name a ") + what + " file");
    if (!std::filesystem::exists(p)) throw InputError(std::string(what) + " file not found: " + p.string());
}

} // namespace detail

inline std::filesystem::path graph_path(const RunConfig& cfg) { return cfg.output_dir / "hypergraph.json"; }
inline std::filesystem::path bank_path(const RunConfig& cfg) { return cfg.output_dir / "bank.json"; }

struct BuildSummary {
    std::size_t documents = 0, hyperedges = 0, items = 0, multi_hop = 0;
    int descent_violations = 0;
};

/// Corpus to hypergraph and memory bank; writes hypergraph.json, bank.json
/// (with its embedding sidecar), diagnostics.csv and build_report.json.
inline BuildSummary cmd_build(const RunConfig& cfg, Runtime& rt) {
    detail::require_input(cfg.corpus, "corpus");
    const auto docs = read_documents(cfg.corpus);
    auto p = build_pipeline(docs, cfg.train, *rt.generator, *rt.provider, cfg.memory);
    std::filesystem::create_directories(cfg.output_dir);
    p.graph.diagnostics_path = "diagnostics.csv";
    save_hypergraph(p.graph, graph_path(cfg));
    p.diagnostics.write_csv(cfg.output_dir / "diagnostics.csv");
    save_bank(p.bank, bank_path(cfg));
    BuildSummary s{docs.size(), p.graph.hyperedges.size(), p.bank.size(), p.bank.multi_hop_count(), p.diagnostics.descent_violations};
    detail::write_json({{"documents", s.documents},
                        {"hyperedges", s.hyperedges},
                        {"items", s.items},
                        {"multi_hop_items", s.multi_hop},
                        {"fact_level_items", p.bank.fact_level_count()},
                        {"descent_violations", s.descent_violations},
                        {"discarded_ungrounded", p.report.discarded_ungrounded},
                        {"generator_failures", p.report.generator_failures},
                        {"pairs_offered", p.report.pairs_offered},
                        {"warnings", p.report.warnings}},
                       cfg.output_dir / "build_report.json");
    return s;
}

struct BuiltArtifacts {
    Hypergraph graph;
    MemoryBank bank;
};

inline BuiltArtifacts load_artifacts(const RunConfig& cfg) {
    if (!std::filesystem::exists(bank_path(cfg)) || !std::filesystem::exists(graph_path(cfg)))
        throw InputError("no built bank in " + cfg.output_dir.string() + "; run build first");
    return {load_hypergraph(graph_path(cfg)), load_bank(bank_path(cfg))};
}

/// Routes the query file against the built bank; writes results.jsonl and
/// metrics.json.
inline MetricsReport cmd_query(const RunConfig& cfg, Runtime& rt, RouteMode mode = RouteMode::dual) {
    detail::require_input(cfg.queries, "queries");
    const auto art = load_artifacts(cfg);
    const auto queries = read_queries(cfg.queries);
    const Router router(art.bank, art.graph, *rt.provider, *rt.llm, cfg.route);
    const auto results = router.route_all(queries, mode, cfg.workers);
    const auto metrics = compute_metrics(results, queries);
    detail::write_jsonl(results, cfg.output_dir / "results.jsonl");
    detail::write_json({{"mode", std::string(to_string(mode))}, {"route", cfg.route}, {"metrics", metrics}}, cfg.output_dir / "metrics.json");
    return metrics;
}

struct FederateSummary {
    MetricsReport fused;
    MetricsReport local_only;
    std::size_t leaks = 0;
    std::size_t rejected = 0;
    PartitionSpec partition;
};

/// Partition, per-client builds, export and fusion, then one evaluation
/// round with and one without fusion. Everything lands in
/// <output_dir>/federation.
inline FederateSummary cmd_federate(const RunConfig& cfg, Runtime& rt) {
    detail::require_input(cfg.corpus, "corpus");
    detail::require_input(cfg.queries, "queries");
    const auto docs = read_documents(cfg.corpus);
    const auto queries = read_queries(cfg.queries);
    const auto dir = cfg.output_dir / "federation";
    FederateSummary s;
    s.partition = partition(docs, queries, cfg.partition);
    auto opt = cfg.memory;
    opt.workers = 1;
    auto clients = build_clients(docs, s.partition, cfg.train, *rt.generator, *rt.provider, opt, cfg.workers);
    const auto fr = federate(clients, {cfg.ldp, cfg.partition.seed}, *rt.provider, cfg.workers);
    const auto leaks = leak_check(fr.exports, docs);
    const auto local = run_round(clients, false, queries, s.partition, cfg.route, *rt.llm, *rt.provider, cfg.workers);
    const auto fused = run_round(clients, true, queries, s.partition, cfg.route, *rt.llm, *rt.provider, cfg.workers);
    s.fused = fused.metrics;
    s.local_only = local.metrics;
    s.leaks = leaks.size();
    s.rejected = fr.rejected.size();

    detail::write_json(s.partition, dir / "partition.json");
    for (const auto& ex : fr.exports) {
        auto out = detail::open_out(dir / "exports" / (ex.client_id + ".json"));
        out << ex.payload << '\n';
        if (ex.audit) detail::write_json(*ex.audit, dir / "exports" / (ex.client_id + ".ldp.json"));
    }
    detail::write_jsonl(fused.results, dir / "results_fused.jsonl");
    detail::write_jsonl(local.results, dir / "results_local.jsonl");
    nlohmann::json leak_list = nlohmann::json::array();
    for (const auto& l : leaks) leak_list.push_back({{"client", l.client_id}, {"doc_id", l.doc_id}, {"offset", l.offset}});
    nlohmann::json clients_j = nlohmann::json::array();
    for (const auto& c : clients)
        clients_j.push_back({{"client", c.client_id},
                             {"documents", c.docs.size()},
                             {"hyperedges", c.pipeline.graph.hyperedges.size()},
                             {"local_items", c.pipeline.bank.size()},
                             {"fused_items", c.fused.size()}});
    detail::write_json({{"fused", s.fused},
                        {"local_only", s.local_only},
                        {"global_items", fr.global.bank.size()},
                        {"uploaded_items", fr.global.uploaded_items},
                        {"clients", clients_j},
                        {"rejected", fr.rejected},
                        {"leaks", leak_list},
                        {"cross_silo_target", s.partition.target},
                        {"cross_silo_achieved", s.partition.achieved},
                        {"target_met", s.partition.target_met}},
                       dir / "metrics.json");
    return s;
}

/// Threshold sweep over the built bank; writes sweep.csv and, when enabled,
/// sweep.svg.
inline SweepResult cmd_sweep(const RunConfig& cfg, Runtime& rt) {
    detail::require_input(cfg.queries, "queries");
    const auto art = load_artifacts(cfg);
    const auto queries = read_queries(cfg.queries);
    const Router router(art.bank, art.graph, *rt.provider, *rt.llm, cfg.route);
    auto sweep = sweep_delta(router, queries, cfg.sweep_grid, cfg.workers);
    write_sweep_csv(sweep.points, cfg.output_dir / "sweep.csv");
    if (cfg.sweep_plot) write_sweep_svg(sweep.points, cfg.output_dir / "sweep.svg");
    return sweep;
}

inline ConvergenceReport cmd_verify_convergence(const RunConfig& cfg) {
    const auto dir = cfg.output_dir / "convergence";
    std::filesystem::create_directories(dir);
    auto report = verify_convergence(cfg.convergence, dir, cfg.workers);
    detail::write_json(report, dir / "report.json");
    return report;
}

inline PrivacyAuditReport cmd_privacy_audit(const RunConfig& cfg, Runtime& rt) {
    detail::require_input(cfg.queries, "queries");
    const auto art = load_artifacts(cfg);
    const auto queries = read_queries(cfg.queries);
    auto report = privacy_audit(art.bank, art.graph, queries, cfg.privacy_audit, *rt.provider, *rt.llm, cfg.route, cfg.workers);
    report.write_csv(cfg.output_dir / "privacy_audit.csv");
    detail::write_json(report, cfg.output_dir / "privacy_audit.json");
    return report;
}

/// Metrics from a result file. Labels come from a partition file when given.
inline MetricsReport cmd_report(const std::filesystem::path& results, const std::filesystem::path& queries,
                                const std::optional<std::filesystem::path>& partition_file = std::nullopt) {
    std::map<std::string, QueryLabel> labels;
    if (partition_file) {
        std::ifstream in(*partition_file);
        if (!in) throw InputError("cannot open " + partition_file->string());
        labels = nlohmann::json::parse(in).get<PartitionSpec>().labels;
    }
    return compute_metrics(read_results(results), read_queries(queries), labels);
}

} // namespace fdrag
