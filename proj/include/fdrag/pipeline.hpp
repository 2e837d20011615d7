#pragma once

// Documents to hypergraph and memory bank in one call.

#include <string>
#include <vector>

#include "fdrag/memory.hpp"

namespace fdrag {

struct Pipeline {
    Segmentation segmentation;
    Hypergraph graph;
    TrainDiagnostics diagnostics;
    MemoryBank bank;
    BankBuildReport report;
};

inline std::vector<std::string> unit_texts(const std::vector<TextUnit>& units) {
    std::vector<std::string> out;
    out.reserve(units.size());
    for (const auto& u : units) out.push_back(u.text);
    return out;
}

inline Pipeline build_pipeline(const std::vector<Document>& docs, const TrainConfig& train, QaGenerator& gen, EmbeddingProvider& provider,
                               const BankBuildOptions& opt = {}, const Lexicon& lx = Lexicon::builtin()) {
    Pipeline p;
    p.segmentation = segment(docs, lx);
    if (p.segmentation.sentences.empty()) throw InputError("corpus has no sentences");
    auto built = build_hypergraph(p.segmentation, provider.embed_batch(unit_texts(p.segmentation.paragraphs)),
                                  provider.embed_batch(unit_texts(p.segmentation.sentences)), train, lx);
    p.graph = std::move(built.graph);
    p.diagnostics = std::move(built.diagnostics);
    auto bank = build_bank(p.graph, gen, provider, opt);
    p.bank = std::move(bank.bank);
    p.report = std::move(bank.report);
    return p;
}

} // namespace fdrag
