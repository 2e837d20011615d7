// Batch command-line front end.
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 usage or
// configuration error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdrag/app.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hypergraph memory construction, dual-path query routing and federated memory fusion"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int workers = 0;
    const auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("-c,--config", config_path, "JSON config file");
        if (config_required) opt->required();
        sub->add_option("--set", overrides, "Override a config key, e.g. --set route.delta=0.75")->allow_extra_args(false);
        sub->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
        sub->add_option("-j,--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    };

    auto* build = app.add_subcommand("build", "Corpus to hypergraph and QA memory bank");
    add_common(build, true);

    std::string mode = "dual";
    auto* query = app.add_subcommand("query", "Route the query file against the built bank");
    add_common(query, true);
    query->add_option("--mode", mode, "dual, memorizer_only or cognizer_only")->check(CLI::IsMember({"dual", "memorizer_only", "cognizer_only"}));

    auto* fed = app.add_subcommand("federate", "Partition, per-client builds, fusion and an evaluation round");
    add_common(fed, true);

    auto* sweep = app.add_subcommand("sweep-delta", "Accuracy, latency and fast-path coverage over a threshold grid");
    add_common(sweep, true);

    auto* conv = app.add_subcommand("verify-convergence", "Optimizer diagnostics on seeded synthetic corpora");
    add_common(conv, false);

    auto* audit = app.add_subcommand("privacy-audit", "Restoration attack and downstream accuracy over an epsilon grid");
    add_common(audit, true);

    std::string results_file, queries_file, partition_file;
    auto* report = app.add_subcommand("report", "Metrics from a result file");
    report->add_option("--results", results_file, "Result JSONL")->required();
    report->add_option("--queries", queries_file, "Query JSONL with gold answers")->required();
    report->add_option("--partition", partition_file, "Partition file for local/cross-silo labels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (report->parsed()) {
            print(nlohmann::json(fdrag::cmd_report(results_file, queries_file,
                                                   partition_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(partition_file))));
            return kOk;
        }
        if (!out_dir.empty()) overrides.push_back("output_dir=" + nlohmann::json(out_dir).dump());
        if (workers > 0) overrides.push_back("workers=" + std::to_string(workers));
        const auto cfg = fdrag::load_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path), overrides);

        if (conv->parsed()) {
            const auto r = fdrag::cmd_verify_convergence(cfg);
            for (const auto& f : r.failures()) std::cerr << "convergence check failed: " << f << '\n';
            print({{"passed", r.passed()}, {"slope_passes", r.slope_passes()}, {"seeds", r.seeds.size()}});
            return r.passed() ? kOk : kFailed;
        }
        auto rt = fdrag::make_runtime(cfg);
        if (build->parsed()) {
            const auto s = fdrag::cmd_build(cfg, rt);
            print({{"documents", s.documents}, {"hyperedges", s.hyperedges}, {"items", s.items}, {"multi_hop_items", s.multi_hop},
                   {"output_dir", cfg.output_dir.string()}});
        } else if (query->parsed()) {
            print(nlohmann::json(fdrag::cmd_query(cfg, rt, fdrag::parse_route_mode(mode))));
        } else if (fed->parsed()) {
            const auto s = fdrag::cmd_federate(cfg, rt);
            print({{"fused", s.fused}, {"local_only", s.local_only}, {"leaks", s.leaks}, {"rejected", s.rejected},
                   {"cross_silo_achieved", s.partition.achieved}});
            if (s.leaks > 0) {
                std::cerr << "leak check failed: raw document text found in an export payload\n";
                return kFailed;
            }
        } else if (sweep->parsed()) {
            print(nlohmann::json(fdrag::cmd_sweep(cfg, rt).points));
        } else if (audit->parsed()) {
            print(nlohmann::json(fdrag::cmd_privacy_audit(cfg, rt)));
        }
        return kOk;
    } catch (const fdrag::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
}
