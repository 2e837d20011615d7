#pragma once

// Deterministic question templates over typed facts. Used directly by the
// template generator and, through prompt parsing, by the scripted LLM backend.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/corpus.hpp"
#include "fdrag/error.hpp"

namespace fdrag {

struct QaPair {
    std::string question;
    std::string answer;
    bool operator==(const QaPair&) const = default;
};

/// A fact tagged with the hyperedge whose contexts it came from.
struct EdgeFact {
    TypedFact fact;
    std::string edge_id;
    bool operator==(const EdgeFact&) const = default;
};

enum class GenerationKind { per_edge, bridge };

struct GenerationInput {
    GenerationKind kind = GenerationKind::per_edge;
    std::vector<EdgeFact> facts;
    std::vector<std::string> contexts;
    int budget = 3;
};

struct QuestionTemplate {
    std::string question;
    std::string answer;
};

struct TemplateTable {
    int version = 0;
    std::map<FactType, std::string> type_nouns;
    std::set<FactType> subject_types;
    std::set<FactType> answer_types;  // objects of relation and bridge questions
    std::set<FactType> bridge_types;  // shared spans that may join two edges
    std::map<std::string, QuestionTemplate> templates;
    std::vector<std::string> per_edge_order;

    const std::string& noun(FactType t) const {
        auto it = type_nouns.find(t);
        if (it == type_nouns.end()) throw InputError("template table has no noun for " + std::string(to_string(t)));
        return it->second;
    }

    const QuestionTemplate& get(const std::string& name) const {
        auto it = templates.find(name);
        if (it == templates.end()) throw InputError("template table has no template '" + name + "'");
        return it->second;
    }

    static TemplateTable parse(const nlohmann::json& j) {
        TemplateTable t;
        t.version = j.at("version").get<int>();
        for (const auto& [k, v] : j.at("type_nouns").items()) t.type_nouns[parse_fact_type(k)] = v.get<std::string>();
        const auto types = [&](const char* key) {
            std::set<FactType> out;
            if (!j.contains(key)) {
                for (const auto& [k, v] : t.type_nouns) out.insert(k);
                return out;
            }
            for (const auto& s : j.at(key)) out.insert(parse_fact_type(s.get<std::string>()));
            return out;
        };
        t.subject_types = types("subject_types");
        t.answer_types = types("answer_types");
        t.bridge_types = types("bridge_types");
        for (const auto& [k, v] : j.at("templates").items())
            t.templates[k] = {v.at("question").get<std::string>(), v.at("answer").get<std::string>()};
        t.per_edge_order = j.at("per_edge_order").get<std::vector<std::string>>();
        for (const auto& name : t.per_edge_order) t.get(name);
        t.get("bridge");
        return t;
    }

    static TemplateTable load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open template table " + path.string());
        return parse(nlohmann::json::parse(in));
    }

    static const TemplateTable& builtin() {
        static const TemplateTable table = load(std::filesystem::path(FDRAG_DATA_DIR) / "templates.json");
        return table;
    }
};

/// Replaces every {key} in `pattern`; unknown keys are an error.
inline std::string fill_slots(std::string_view pattern, const std::map<std::string, std::string>& slots) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size();) {
        if (pattern[i] == '{') {
            const auto close = pattern.find('}', i);
            if (close == std::string_view::npos) throw InputError("unterminated slot in template");
            const std::string key(pattern.substr(i + 1, close - i - 1));
            auto it = slots.find(key);
            if (it == slots.end()) throw InputError("template slot {" + key + "} has no value");
            out += it->second;
            i = close + 1;
        } else {
            out.push_back(pattern[i++]);
        }
    }
    return out;
}

namespace detail {

inline void push_unique(std::vector<QaPair>& out, std::set<std::string>& seen, QaPair p) {
    if (seen.insert(p.question).second) out.push_back(std::move(p));
}

inline std::vector<QaPair> per_edge_templates(const TemplateTable& table, const GenerationInput& in) {
    std::vector<QaPair> out;
    std::set<std::string> seen;
    for (const auto& name : table.per_edge_order) {
        const auto& tpl = table.get(name);
        if (name == "relation") {
            // ordered pairs of distinct facts from the same unit, in fact order
            for (std::size_t i = 0; i < in.facts.size(); ++i) {
                const auto& a = in.facts[i].fact;
                if (!table.subject_types.contains(a.type)) continue;
                for (std::size_t j = 0; j < in.facts.size(); ++j) {
                    const auto& b = in.facts[j].fact;
                    if (i == j || b.span == a.span || b.source_unit_id != a.source_unit_id || !table.answer_types.contains(b.type)) continue;
                    const std::map<std::string, std::string> slots{
                        {"subject", a.span}, {"object", b.span}, {"object_noun", table.noun(b.type)}};
                    push_unique(out, seen, {fill_slots(tpl.question, slots), fill_slots(tpl.answer, slots)});
                }
            }
        } else {
            for (const auto& ef : in.facts) {
                const std::map<std::string, std::string> slots{{"span", ef.fact.span}, {"type_noun", table.noun(ef.fact.type)}};
                push_unique(out, seen, {fill_slots(tpl.question, slots), fill_slots(tpl.answer, slots)});
            }
        }
    }
    return out;
}

/// Facts of the two edges: spans present in both are bridges; a subject from
/// one side and an object from the other form a two-hop question. The lower
/// edge supplies the subject first, then the reverse direction is tried.
inline std::vector<QaPair> bridge_templates(const TemplateTable& table, const GenerationInput& in) {
    std::vector<std::string> edges;
    for (const auto& ef : in.facts)
        if (std::find(edges.begin(), edges.end(), ef.edge_id) == edges.end()) edges.push_back(ef.edge_id);
    std::sort(edges.begin(), edges.end());
    if (edges.size() != 2) return {};
    std::map<std::string, std::vector<const TypedFact*>> by_edge;
    std::map<std::string, std::set<std::string>> spans;
    for (const auto& ef : in.facts) {
        auto& list = by_edge[ef.edge_id];
        if (std::none_of(list.begin(), list.end(), [&](const TypedFact* f) { return f->span == ef.fact.span; })) list.push_back(&ef.fact);
        spans[ef.edge_id].insert(ef.fact.span);
    }
    std::vector<const TypedFact*> shared;
    for (const auto* f : by_edge[edges[0]])
        if (spans[edges[1]].contains(f->span) && table.bridge_types.contains(f->type)) shared.push_back(f);
    std::sort(shared.begin(), shared.end(), [](const TypedFact* a, const TypedFact* b) { return a->span < b->span; });
    const auto& tpl = table.get("bridge");
    std::vector<QaPair> out;
    std::set<std::string> seen;
    for (int dir = 0; dir < 2; ++dir) {
        const auto& from = edges[dir];
        const auto& to = edges[1 - dir];
        for (const auto* s : shared) {
            for (const auto* a : by_edge[from]) {
                if (spans[to].contains(a->span) || !table.subject_types.contains(a->type)) continue;
                for (const auto* b : by_edge[to]) {
                    if (spans[from].contains(b->span) || b->span == a->span || !table.answer_types.contains(b->type)) continue;
                    const std::map<std::string, std::string> slots{{"subject", a->span},
                                                                   {"object", b->span},
                                                                   {"object_noun", table.noun(b->type)},
                                                                   {"bridge_noun", table.noun(s->type)}};
                    push_unique(out, seen, {fill_slots(tpl.question, slots), fill_slots(tpl.answer, slots)});
                }
            }
        }
    }
    return out;
}

} // namespace detail

/// Template output for one generation request, truncated to the budget.
inline std::vector<QaPair> run_templates(const TemplateTable& table, const GenerationInput& in) {
    auto out = in.kind == GenerationKind::bridge ? detail::bridge_templates(table, in) : detail::per_edge_templates(table, in);
    if (static_cast<int>(out.size()) > in.budget) out.resize(static_cast<std::size_t>(std::max(in.budget, 0)));
    return out;
}

/// Fact type a question asks for, judged from its wording; nullopt when open.
inline std::optional<FactType> expected_answer_type(std::string_view question, const TemplateTable& table = TemplateTable::builtin()) {
    const std::string q = " " + text::normalize_words(question) + " ";
    for (const auto& [type, noun] : table.type_nouns)
        if (q.find(" what " + noun + " ") != std::string::npos || q.find(" which " + noun + " ") != std::string::npos) return type;
    static const std::vector<std::pair<std::string, FactType>> wh{
        {" who ", FactType::PERSON}, {" whom ", FactType::PERSON}, {" where ", FactType::LOC},
        {" when ", FactType::DATE},  {" what year ", FactType::DATE}, {" how many ", FactType::NUMBER},
        {" how much ", FactType::NUMBER}, {" which company ", FactType::ORG}, {" what company ", FactType::ORG}};
    for (const auto& [cue, type] : wh)
        if (q.find(cue) != std::string::npos) return type;
    return std::nullopt;
}

} // namespace fdrag
