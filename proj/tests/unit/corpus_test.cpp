#include <gtest/gtest.h>

#include "fdrag/corpus.hpp"

using namespace fdrag;

namespace {

bool has_fact(const std::vector<TypedFact>& facts, const std::string& span, FactType t) {
    for (const auto& f : facts)
        if (f.span == span && f.type == t) return true;
    return false;
}

std::vector<TextUnit> units_of(const std::string& text) {
    return segment({{"d", text, std::nullopt}}).sentences;
}

} // namespace

TEST(Segment, BlankLineSplitsParagraphs) {
    auto seg = segment({{"doc", "A.\n\nB.", std::nullopt}});
    ASSERT_EQ(seg.paragraphs.size(), 2u);
    ASSERT_EQ(seg.sentences.size(), 2u);
    EXPECT_EQ(seg.paragraphs[0].text, "A.");
    EXPECT_EQ(seg.paragraphs[1].text, "B.");
}

TEST(Segment, AbbreviationGuardHolds) {
    auto seg = segment({{"doc", "Dr. Smith ran. He won.", std::nullopt}});
    ASSERT_EQ(seg.paragraphs.size(), 1u);
    ASSERT_EQ(seg.sentences.size(), 2u);
    EXPECT_EQ(seg.sentences[0].text, "Dr. Smith ran.");
    EXPECT_EQ(seg.sentences[1].text, "He won.");
}

TEST(Segment, NoSplitBeforeLowercase) {
    auto seg = segment({{"doc", "It cost 3. and more. Then 4 followed.", std::nullopt}});
    ASSERT_EQ(seg.sentences.size(), 2u);
    EXPECT_EQ(seg.sentences[1].text, "Then 4 followed.");
}

TEST(Segment, SplitsBeforeDigitAndAfterQuestionMark) {
    auto seg = segment({{"doc", "Why? 1903 was the year! U.S. Steel grew. e.g. nothing", std::nullopt}});
    ASSERT_EQ(seg.sentences.size(), 3u);
    EXPECT_EQ(seg.sentences[0].text, "Why?");
    EXPECT_EQ(seg.sentences[1].text, "1903 was the year!");
    EXPECT_EQ(seg.sentences[2].text, "U.S. Steel grew. e.g. nothing");
}

TEST(Segment, EmptyDocumentRejectedWithId) {
    try {
        segment({{"ok", "Fine.", std::nullopt}, {"blank-7", "  \n\t ", std::nullopt}});
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("blank-7"), std::string::npos);
    }
    EXPECT_THROW(segment({{"x", "", std::nullopt}}), InputError);
    EXPECT_THROW(segment({}), InputError);
}

TEST(Segment, DuplicateIdRejected) {
    EXPECT_THROW(segment({{"a", "One.", std::nullopt}, {"a", "Two.", std::nullopt}}), InputError);
}

TEST(Segment, ParagraphsPartitionEachDocument) {
    const std::vector<Document> docs = {
        {"d1", "\n  First para. Still first.\n\n\n Second one!\n  \nThird? Yes.\n", std::nullopt},
        {"d2", "Only.", std::nullopt},
        {"d3", "Line one\nline two of same para.\n\nNext.", std::nullopt},
    };
    auto seg = segment(docs);
    for (const auto& d : docs) {
        std::string rebuilt;
        std::size_t expect_pos = 0, cursor = 0;
        for (const auto& p : seg.paragraphs) {
            if (p.doc_id != d.doc_id) continue;
            EXPECT_EQ(p.position, expect_pos++);
            EXPECT_EQ(p.begin, cursor);
            cursor = p.end;
            rebuilt += d.text.substr(p.begin, p.end - p.begin);
            EXPECT_EQ(text::trim(d.text.substr(p.begin, p.end - p.begin)), p.text);
        }
        EXPECT_EQ(rebuilt, d.text);
        std::size_t sp = 0;
        for (const auto& s : seg.sentences) {
            if (s.doc_id != d.doc_id) continue;
            EXPECT_EQ(s.position, sp++);
            EXPECT_EQ(d.text.substr(s.begin, s.end - s.begin), s.text);
            int containing = 0;
            for (const auto& p : seg.paragraphs)
                if (p.doc_id == d.doc_id && p.begin <= s.begin && s.end <= p.end) ++containing;
            EXPECT_EQ(containing, 1) << s.text;
        }
    }
    EXPECT_EQ(seg.paragraphs.size(), 6u);
}

TEST(Anchors, EmptyTextGivesEmptySet) { EXPECT_TRUE(extract_anchors("").empty()); }

TEST(Anchors, NamedEntityExample) {
    auto a = extract_anchors("Marie Curie won the Nobel Prize in 1903");
    EXPECT_TRUE(a.contains("marie curie"));
    EXPECT_TRUE(a.contains("nobel prize"));
    EXPECT_TRUE(a.contains("1903"));
    EXPECT_FALSE(a.contains("won"));
    EXPECT_FALSE(a.contains("prize"));  // inside a capitalized run
}

TEST(Anchors, SentenceInitialSingleCapitalIsNotARun) {
    auto a = extract_anchors("Scientists measured radium. He agreed.");
    EXPECT_TRUE(a.contains("scientists"));  // content word rule
    EXPECT_TRUE(a.contains("radium"));
    EXPECT_TRUE(a.contains("measured"));
    EXPECT_FALSE(a.contains("he"));
}

TEST(Anchors, PunctuationBreaksRuns) {
    auto a = extract_anchors("She visited Paris, France and Rome.");
    EXPECT_TRUE(a.contains("paris"));
    EXPECT_TRUE(a.contains("france"));
    EXPECT_TRUE(a.contains("rome"));
    EXPECT_FALSE(a.contains("paris france"));
}

TEST(Anchors, Deterministic) {
    const std::string s = "The U.S. Steel Corp hired Dr. Ada Lovelace in March 1843 for 2,500 dollars.";
    EXPECT_EQ(extract_anchors(s), extract_anchors(s));
    auto a = extract_anchors(s);
    EXPECT_TRUE(a.contains("u.s steel corp"));
    EXPECT_TRUE(a.contains("ada lovelace"));
    EXPECT_TRUE(a.contains("march"));
    EXPECT_TRUE(a.contains("1843"));
    EXPECT_TRUE(a.contains("2,500"));
    EXPECT_TRUE(a.contains("dollars"));
}

TEST(Anchors, AllMembersNormalized) {
    auto a = extract_anchors("\"Quoted  Name\" met  ÉMILE Zola's friend (Paris).");
    for (const auto& s : a) EXPECT_EQ(text::normalize(s), s);
}

TEST(Facts, OrgSuffix) {
    auto facts = extract_typed_facts(units_of("He joined Acme Corp last year."));
    EXPECT_TRUE(has_fact(facts, "acme corp", FactType::ORG));
}

TEST(Facts, YearIsDate) {
    auto facts = extract_typed_facts(units_of("It happened in 1903."));
    EXPECT_TRUE(has_fact(facts, "1903", FactType::DATE));
}

TEST(Facts, NoAnchorsNoFacts) {
    auto facts = extract_typed_facts(units_of("it is so."));
    EXPECT_TRUE(facts.empty());
}

TEST(Facts, TypingRules) {
    auto facts = extract_typed_facts(units_of(
        "Yesterday Dr. Smith and Marie Curie met in Warsaw with John Smith Jr. on June 5 at Oxford University about 42 samples of polonium."));
    EXPECT_TRUE(has_fact(facts, "smith", FactType::PERSON));
    EXPECT_TRUE(has_fact(facts, "marie curie", FactType::PERSON));
    EXPECT_TRUE(has_fact(facts, "warsaw", FactType::LOC));
    EXPECT_TRUE(has_fact(facts, "john smith jr", FactType::PERSON));
    EXPECT_TRUE(has_fact(facts, "june", FactType::DATE));
    EXPECT_TRUE(has_fact(facts, "oxford university", FactType::ORG));
    EXPECT_TRUE(has_fact(facts, "42", FactType::NUMBER));
    EXPECT_TRUE(has_fact(facts, "polonium", FactType::TERM));
    EXPECT_TRUE(has_fact(facts, "samples", FactType::TERM));
}

TEST(Facts, EverySpanIsAnAnchorOfItsUnit) {
    auto seg = segment({{"d", "Marie Curie moved to Paris in 1891. She studied at the Sorbonne University.\n\n"
                              "Pierre Curie and Marie Curie shared the 1903 Nobel Prize with Henri Becquerel.",
                         std::nullopt}});
    for (const auto* units : {&seg.paragraphs, &seg.sentences}) {
        auto facts = extract_typed_facts(*units);
        EXPECT_FALSE(facts.empty());
        for (const auto& f : facts) {
            auto it = std::find_if(units->begin(), units->end(), [&](const TextUnit& u) { return u.unit_id == f.source_unit_id; });
            ASSERT_NE(it, units->end());
            EXPECT_TRUE(extract_anchors(it->text).contains(f.span)) << f.span;
            EXPECT_FALSE(f.span.empty());
        }
    }
}

TEST(CorpusJsonl, ParsesAndValidates) {
    std::istringstream in(R"({"doc_id": "a", "text": "Hello there.", "client": "c1"}
{"doc_id": "b", "text": "More."}

)");
    auto docs = parse_documents_jsonl(in);
    ASSERT_EQ(docs.size(), 2u);
    EXPECT_EQ(docs[0].client_hint.value(), "c1");
    EXPECT_FALSE(docs[1].client_hint.has_value());
    std::istringstream bad(R"({"doc_id": 3, "text": "x"})");
    EXPECT_THROW(parse_documents_jsonl(bad), InputError);
}
