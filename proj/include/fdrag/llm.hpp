#pragma once

// Text generation: the two prompt templates, a deterministic scripted
// backend for hermetic runs and an OpenAI-style chat-completion client.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdrag/embedding.hpp"
#include "fdrag/error.hpp"
#include "fdrag/http.hpp"
#include "fdrag/templates.hpp"

namespace fdrag {

enum class GenTag { qa_synthesis, rag_answer };

inline std::string_view to_string(GenTag t) { return t == GenTag::qa_synthesis ? "qa_synthesis" : "rag_answer"; }

inline GenTag parse_gen_tag(std::string_view s) {
    if (s == "qa_synthesis") return GenTag::qa_synthesis;
    if (s == "rag_answer") return GenTag::rag_answer;
    throw InputError("unknown generation tag: " + std::string(s));
}

struct GenRequest {
    std::string prompt;
    int max_tokens = 512;
    double temperature = 0.0;
    std::vector<std::string> stop;
    GenTag tag = GenTag::rag_answer;

    void validate() const {
        if (prompt.empty()) throw InputError("generation request has an empty prompt");
        if (!(temperature >= 0.0)) throw InputError("temperature must be >= 0");
    }
};

struct GenResponse {
    std::string text;
    int prompt_tokens = 0;
    int output_tokens = 0;
    double latency_s = 0.0;
    int attempts = 1;
};

// ---------------------------------------------------------------------------
// Prompts

inline constexpr std::string_view kQaPromptTemplate =
    "Prompt Template:\n"
    "Role:\n"
    "You are an advanced information system responsible for generating retrieval-oriented QA memory questions grounded in "
    "the provided atomic facts and original text.\n"
    "\n"
    "Task:\n"
    "Your task is to generate complex questions based on extracted atomic facts and the original text. The questions should be "
    "answerable using only the provided information and, when appropriate, require multi-fact integration (e.g., comparison, "
    "aggregation, or multi-hop reasoning) to support downstream retrieval and evidence-grounded answering.\n"
    "\n"
    "Requirements:\n"
    "Questions must strictly rely on the extracted atomic facts and original text, without introducing any external information.\n"
    "Prefer questions that are specific, unambiguous, and informative for retrieval (avoid overly generic prompts).\n"
    "Encourage compositional reasoning when supported by the facts (e.g., Set / Comparison / Aggregation / Multi-hop / "
    "Post-processing Heavy / False Premise).\n"
    "Answers must accurately reflect the original content and refer to specific expressions in the text or atomic facts "
    "whenever possible.\n"
    "Language must be clear and logically rigorous, avoiding ambiguity.\n"
    "\n"
    "Output Format (Follow this format strictly):\n"
    "Example:\n"
    "{example}\n"
    "\n"
    "Now, based on the following atomic facts and original paragraph, generate a complex question and its corresponding answer:\n"
    "Question Type:\n"
    "{type}\n"
    "Extracted Facts:\n"
    "{extracted_facts}\n"
    "Original Text:\n"
    "{text}\n";

inline constexpr std::string_view kRagPromptTemplate =
    "Prompt Template:\n"
    "Role:\n"
    "You are now an intelligent assistant tasked with answering the final question based on the provided reference "
    "question-answer pairs and context documents. Follow these rules strictly: Only output the final answer, without any "
    "explanation or additional content.\n"
    "\n"
    "Reference Q&A Pairs: {context}\n"
    "Context Document: {document}\n"
    "Question: {question}\n"
    "Answer:";

inline constexpr std::string_view kQaExample =
    "Question: what location is associated with marie curie?\n"
    "Answer: paris";

/// The {type} slot: kind of question plus how many pairs are wanted.
inline std::string question_type_hint(GenerationKind kind, int budget) {
    return std::string(kind == GenerationKind::bridge ? "Multi-hop" : "Fact / Relation") + " (up to " + std::to_string(budget) +
           " question-answer pairs)";
}

/// One line per fact: "- span (TYPE) [edge_id unit_id]".
inline std::string render_fact_lines(const std::vector<EdgeFact>& facts) {
    std::string out;
    for (const auto& ef : facts) {
        if (!out.empty()) out += '\n';
        out += "- " + ef.fact.span + " (" + std::string(to_string(ef.fact.type)) + ") [" + ef.edge_id + " " + ef.fact.source_unit_id + "]";
    }
    return out;
}

inline std::string render_qa_prompt(const std::vector<EdgeFact>& facts, const std::vector<std::string>& contexts,
                                    const std::string& question_type) {
    if (contexts.empty()) throw InputError("render_qa_prompt: no contexts");
    std::string text;
    for (const auto& c : contexts) {
        if (!text.empty()) text += "\n\n";
        text += c;
    }
    return fill_slots(kQaPromptTemplate, {{"example", std::string(kQaExample)},
                                          {"type", question_type},
                                          {"extracted_facts", render_fact_lines(facts)},
                                          {"text", text}});
}

/// Evidence unit z_e: the hyperedge's contexts and typed facts.
struct EvidenceUnit {
    std::string edge_id;
    std::vector<std::string> contexts;
    std::vector<TypedFact> facts;
};

inline std::string render_rag_prompt(const std::string& question, const std::vector<QaPair>& reference_qa,
                                     const std::vector<EvidenceUnit>& evidence) {
    std::string context;
    for (std::size_t i = 0; i < reference_qa.size(); ++i)
        context += "\n(" + std::to_string(i + 1) + ") Q: " + reference_qa[i].question + " A: " + reference_qa[i].answer;
    std::string document;
    for (const auto& z : evidence) {
        document += "\n[" + z.edge_id + "]";
        for (const auto& c : z.contexts) document += "\n" + c;
        document += "\nFacts:";
        for (const auto& f : z.facts) document += "\n- " + f.span + " (" + std::string(to_string(f.type)) + ")";
    }
    return fill_slots(kRagPromptTemplate, {{"context", context}, {"document", document}, {"question", question}});
}

/// Splits "Question: ...\nAnswer: ..." blocks out of generated text.
inline std::vector<QaPair> parse_qa_output(std::string_view out) {
    std::vector<QaPair> pairs;
    std::optional<std::string> pending;
    std::istringstream in{std::string(out)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = text::trim(line);
        if (t.rfind("Question:", 0) == 0) {
            pending = text::trim(t.substr(9));
        } else if (t.rfind("Answer:", 0) == 0 && pending) {
            pairs.push_back({*pending, text::trim(t.substr(7))});
            pending.reset();
        }
    }
    return pairs;
}

inline std::string render_qa_output(const std::vector<QaPair>& pairs) {
    std::string out;
    for (const auto& p : pairs) {
        if (!out.empty()) out += '\n';
        out += "Question: " + p.question + "\nAnswer: " + p.answer;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompt parsing for the scripted backend

namespace detail {

inline std::string section(std::string_view prompt, std::string_view header, std::string_view next_header) {
    const auto b = prompt.find(header);
    if (b == std::string_view::npos) return {};
    const auto start = b + header.size();
    const auto e = next_header.empty() ? std::string_view::npos : prompt.find(next_header, start);
    return std::string(prompt.substr(start, e == std::string_view::npos ? std::string_view::npos : e - start));
}

/// Parses "- span (TYPE) [edge unit]" or "- span (TYPE)".
inline std::optional<EdgeFact> parse_fact_line(std::string_view line) {
    if (line.rfind("- ", 0) != 0) return std::nullopt;
    line.remove_prefix(2);
    EdgeFact ef;
    if (!line.empty() && line.back() == ']') {
        const auto open = line.rfind(" [");
        if (open == std::string_view::npos) return std::nullopt;
        const std::string_view tag = line.substr(open + 2, line.size() - open - 3);
        const auto sp = tag.find(' ');
        ef.edge_id = std::string(tag.substr(0, sp));
        if (sp != std::string_view::npos) ef.fact.source_unit_id = std::string(tag.substr(sp + 1));
        line = line.substr(0, open);
    }
    if (line.empty() || line.back() != ')') return std::nullopt;
    const auto open = line.rfind(" (");
    if (open == std::string_view::npos) return std::nullopt;
    try {
        ef.fact.type = parse_fact_type(line.substr(open + 2, line.size() - open - 3));
    } catch (const InputError&) {
        return std::nullopt;
    }
    ef.fact.span = std::string(line.substr(0, open));
    return ef;
}

inline std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string l;
    while (std::getline(in, l)) out.push_back(l);
    return out;
}

inline GenerationInput parse_qa_prompt(std::string_view prompt) {
    GenerationInput in;
    const std::string type = text::trim(section(prompt, "Question Type:\n", "\nExtracted Facts:\n"));
    in.kind = type.rfind("Multi-hop", 0) == 0 ? GenerationKind::bridge : GenerationKind::per_edge;
    std::smatch m;
    static const std::regex budget_re(R"(up to (\d+))");
    in.budget = std::regex_search(type, m, budget_re) ? std::stoi(m[1].str()) : 1;
    for (const auto& l : lines_of(section(prompt, "Extracted Facts:\n", "\nOriginal Text:\n")))
        if (auto ef = parse_fact_line(l)) in.facts.push_back(std::move(*ef));
    in.contexts.push_back(section(prompt, "Original Text:\n", ""));
    return in;
}

/// Reads an answer out of a RAG prompt. Context lines are ranked by how many
/// question anchors they contain; the first fact of the expected type found in
/// the best line wins. Facts already named in the question are skipped. Falls
/// back to the first unmentioned fact of the right type, then of any type.
inline std::string scripted_rag_answer(std::string_view prompt, const TemplateTable& table) {
    const auto qpos = prompt.rfind("\nQuestion: ");
    const auto apos = prompt.rfind("\nAnswer:");
    const std::string question =
        qpos == std::string_view::npos || apos < qpos ? std::string() : text::trim(prompt.substr(qpos + 11, apos - qpos - 11));
    const std::string qnorm = text::normalize_words(question);
    const auto want = expected_answer_type(question, table);
    const auto anchors = extract_anchors(question);
    std::vector<TypedFact> facts;
    std::vector<std::pair<std::size_t, std::string>> context_lines;  // (anchor hits, normalized line)
    const auto doc_pos = prompt.find("Context Document:");
    const std::string_view body = prompt.substr(0, qpos == std::string_view::npos ? prompt.size() : qpos);
    for (const auto& l : lines_of(std::string(body))) {
        if (auto ef = parse_fact_line(l)) {
            facts.push_back(ef->fact);
            continue;
        }
        if (doc_pos == std::string_view::npos || l.empty() || l == "Facts:" || l.front() == '[' || l.rfind("Context Document:", 0) == 0)
            continue;
        const std::string norm = text::normalize_words(l);
        std::size_t hits = 0;
        for (const auto& a : anchors) hits += text::contains_words(norm, text::normalize_words(a)) ? 1 : 0;
        if (hits > 0) context_lines.emplace_back(hits, norm);
    }
    const auto usable = [&](const TypedFact& f) { return !text::contains_words(qnorm, text::normalize_words(f.span)); };
    std::stable_sort(context_lines.begin(), context_lines.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [hits, line] : context_lines)
        for (const auto& f : facts)
            if ((!want || f.type == *want) && usable(f) && text::contains_words(line, text::normalize_words(f.span))) return f.span;
    const TypedFact* fallback = nullptr;
    for (const auto& f : facts) {
        if (!usable(f)) continue;
        if (!want || f.type == *want) return f.span;
        if (!fallback) fallback = &f;
    }
    return fallback ? fallback->span : "insufficient evidence";
}

inline int whitespace_tokens(std::string_view s) { return static_cast<int>(text::split_words(s).size()); }

} // namespace detail

// ---------------------------------------------------------------------------
// Backends

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual GenResponse generate(const GenRequest& req) = 0;
};

/// Table lookup keyed by "tag:sha256(prompt)", then a default rule:
/// qa_synthesis runs the template engine on the parsed prompt; rag_answer
/// picks an answer-bearing fact from the evidence. Never fails on valid input.
class ScriptedBackend final : public LlmBackend {
public:
    explicit ScriptedBackend(const TemplateTable& table = TemplateTable::builtin()) : table_(table) {}

    static std::string key(GenTag tag, std::string_view prompt) { return std::string(to_string(tag)) + ":" + sha256_hex(prompt); }

    void add(GenTag tag, std::string_view prompt, std::string response) { responses_[key(tag, prompt)] = std::move(response); }

    /// JSON object {"<tag>:<sha256>": "response", ...}.
    void load_table(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open scripted response table " + path.string());
        for (const auto& [k, v] : nlohmann::json::parse(in).items()) responses_[k] = v.get<std::string>();
    }

    GenResponse generate(const GenRequest& req) override {
        req.validate();
        const auto start = std::chrono::steady_clock::now();
        GenResponse r;
        if (auto it = responses_.find(key(req.tag, req.prompt)); it != responses_.end()) {
            r.text = it->second;
        } else if (req.tag == GenTag::qa_synthesis) {
            r.text = render_qa_output(run_templates(table_, detail::parse_qa_prompt(req.prompt)));
        } else {
            r.text = detail::scripted_rag_answer(req.prompt, table_);
        }
        r.prompt_tokens = detail::whitespace_tokens(req.prompt);
        r.output_tokens = detail::whitespace_tokens(r.text);
        r.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

private:
    const TemplateTable& table_;
    std::map<std::string, std::string> responses_;
};

struct HttpLlmConfig {
    std::string endpoint;
    std::string model;
    std::string api_key_env = "FDRAG_LLM_API_KEY";
    http::RetryPolicy retry{};
    int max_in_flight = 4;

    /// Endpoint and model from FDRAG_LLM_ENDPOINT / FDRAG_LLM_MODEL.
    static HttpLlmConfig from_env() {
        HttpLlmConfig c;
        if (const char* e = std::getenv("FDRAG_LLM_ENDPOINT")) c.endpoint = e;
        if (const char* m = std::getenv("FDRAG_LLM_MODEL")) c.model = m;
        if (c.endpoint.empty()) throw InputError("FDRAG_LLM_ENDPOINT is not set");
        return c;
    }
};

/// OpenAI-style chat completions with retry and a cap on concurrent requests.
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpLlmConfig cfg) : cfg_(std::move(cfg)), slots_(std::clamp<std::ptrdiff_t>(cfg_.max_in_flight, 1, kMaxInFlight)) {
        if (cfg_.max_in_flight < 1 || cfg_.max_in_flight > kMaxInFlight) throw InputError("max_in_flight must lie in [1, 64]");
        if (cfg_.endpoint.empty()) throw InputError("HTTP LLM backend needs an endpoint");
    }

    GenResponse generate(const GenRequest& req) override {
        req.validate();
        nlohmann::json payload{{"model", cfg_.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
                               {"max_tokens", req.max_tokens},
                               {"temperature", req.temperature}};
        if (!req.stop.empty()) payload["stop"] = req.stop;
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) headers.emplace("Authorization", std::string("Bearer ") + key);

        const auto start = std::chrono::steady_clock::now();
        slots_.acquire();
        http::JsonResponse resp;
        try {
            resp = http::post_json(cfg_.endpoint, payload, headers, cfg_.retry);
        } catch (...) {
            slots_.release();
            throw;
        }
        slots_.release();
        GenResponse r;
        r.attempts = resp.attempts;
        try {
            r.text = resp.body.at("choices").at(0).at("message").at("content").get<std::string>();
            if (resp.body.contains("usage")) {
                r.prompt_tokens = resp.body["usage"].value("prompt_tokens", 0);
                r.output_tokens = resp.body["usage"].value("completion_tokens", 0);
            }
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed chat completion: ") + e.what(), resp.attempts);
        }
        r.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

private:
    static constexpr std::ptrdiff_t kMaxInFlight = 64;
    HttpLlmConfig cfg_;
    std::counting_semaphore<kMaxInFlight> slots_;
};

/// Thread-safe counter of generate invocations and output tokens.
struct GenerationStats {
    std::atomic<std::size_t> calls{0};
    std::atomic<std::size_t> output_tokens{0};
    std::atomic<std::size_t> failures{0};
};

} // namespace fdrag
