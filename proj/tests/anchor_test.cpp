// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/anchor.hpp"
#include "memoe/rng.hpp"
#include "memoe/transformer.hpp"
#include "world.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

namespace memoe {
namespace {

using testing::ScratchDir;

Gazetteer make_gazetteer(const std::vector<std::pair<std::string, std::string>>& entries) {
    Gazetteer g;
    for (const auto& [surface, id] : entries) g.add(surface, id);
    return g;
}

// Leftmost match with alternatives ordered longest first, run by the regex
// engine over the space-joined text. Word offsets come from counting spaces.
std::vector<EntitySpan> regex_oracle(const std::vector<std::string>& words,
                                     std::vector<std::pair<std::string, std::string>> entries) {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return std::count(a.first.begin(), a.first.end(), ' ') > std::count(b.first.begin(), b.first.end(), ' ');
    });
    std::string alt;
    for (const auto& [surface, id] : entries) alt += (alt.empty() ? "" : "|") + ("(" + surface + ")");
    const std::regex re("(?:^| )(?:" + alt + ")(?= |$)");
    const std::string text = join_words(words);
    std::vector<EntitySpan> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        std::size_t group = 1;
        while (!m[group].matched) ++group;
        const auto begin = static_cast<std::size_t>(m.position(group));
        const std::size_t start = static_cast<std::size_t>(std::count(text.begin(), text.begin() + begin, ' '));
        const std::size_t len = 1 + static_cast<std::size_t>(std::count(m[group].first, m[group].second, ' '));
        out.push_back({start, start + len, entries[group - 1].second});
    }
    return out;
}

TEST(GazetteerTest, LookupIsCaseFolded) {
    const Gazetteer g = make_gazetteer({{"United States", "usa"}});
    const std::vector<std::string> words{"united", "states"};
    ASSERT_NE(g.lookup(words), nullptr);
    EXPECT_EQ(*g.lookup(words), "usa");
    EXPECT_EQ(extract_entities("UNITED States", g), (std::vector<EntitySpan>{{0, 2, "usa"}}));
    EXPECT_EQ(g.longest_entry_len(), 2u);
}

TEST(GazetteerTest, RejectsEmptyAndConflictingSurfaces) {
    Gazetteer g;
    EXPECT_THROW(g.add("   ", "x"), std::invalid_argument);
    g.add("paris", "paris");
    EXPECT_NO_THROW(g.add("Paris", "paris"));
    EXPECT_THROW(g.add("paris", "texas"), std::invalid_argument);
}

TEST(GazetteerTest, TsvRoundTrip) {
    ScratchDir dir("gazetteer");
    const Gazetteer g = make_gazetteer({{"new york", "nyc"}, {"york", "york"}, {"the big apple", "nyc"}});
    g.save(dir.path() / "g.tsv");
    const Gazetteer loaded = Gazetteer::load(dir.path() / "g.tsv");
    EXPECT_EQ(loaded.entries(), g.entries());
    EXPECT_EQ(loaded.longest_entry_len(), 3u);
}

TEST(ExtractEntitiesTest, QuestionWithTwoAnchors) {
    const Gazetteer g = make_gazetteer({{"president", "president"}, {"united states", "usa"}});
    const auto spans = extract_entities("Who is the president of the United States?", g);
    EXPECT_EQ(spans, (std::vector<EntitySpan>{{3, 4, "president"}, {6, 8, "usa"}}));
}

TEST(ExtractEntitiesTest, EmptyTextHasNoSpans) {
    const Gazetteer g = make_gazetteer({{"york", "york"}});
    EXPECT_TRUE(extract_entities("", g).empty());
    EXPECT_TRUE(extract_entities("nothing to see", g).empty());
}

TEST(ExtractEntitiesTest, LongestMatchWins) {
    const Gazetteer g = make_gazetteer({{"york", "york"}, {"new york", "nyc"}});
    EXPECT_EQ(extract_entities("i moved to new york", g), (std::vector<EntitySpan>{{3, 5, "nyc"}}));
    EXPECT_EQ(extract_entities("york and new york", g),
              (std::vector<EntitySpan>{{0, 1, "york"}, {2, 4, "nyc"}}));
}

// Every text of up to 6 words over a 4-word alphabet against a 5-entry
// gazetteer with nested and overlapping entries.
TEST(ExtractEntitiesTest, MatchesRegexOracleExhaustively) {
    const std::vector<std::pair<std::string, std::string>> entries{
        {"a", "e1"}, {"a b", "e2"}, {"a b c", "e3"}, {"b c", "e4"}, {"c", "e5"}};
    const Gazetteer g = make_gazetteer(entries);
    const std::vector<std::string> alphabet{"a", "b", "c", "x"};
    std::size_t texts = 0;
    for (std::size_t len = 0; len <= 6; ++len) {
        std::size_t combos = 1;
        for (std::size_t i = 0; i < len; ++i) combos *= alphabet.size();
        for (std::size_t code = 0; code < combos; ++code) {
            std::vector<std::string> words;
            for (std::size_t c = code, i = 0; i < len; ++i, c /= alphabet.size()) words.push_back(alphabet[c % alphabet.size()]);
            const auto got = extract_entities(std::span<const std::string>(words), g);
            ASSERT_EQ(got, regex_oracle(words, entries)) << join_words(words);
            for (std::size_t i = 1; i < got.size(); ++i) ASSERT_LE(got[i - 1].end, got[i].start);
            ++texts;
        }
    }
    EXPECT_EQ(texts, 5461u);
}

TEST(ExtractEntitiesTest, InsertionOrderDoesNotMatter) {
    std::vector<std::pair<std::string, std::string>> entries{
        {"a", "e1"}, {"a b", "e2"}, {"a b c", "e3"}, {"b c", "e4"}, {"c", "e5"}, {"x a", "e6"}};
    const Gazetteer ref = make_gazetteer(entries);
    Rng rng = substream(21, "shuffle");
    std::uniform_int_distribution<int> pick(0, 3);
    const std::vector<std::string> alphabet{"a", "b", "c", "x"};
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(entries.begin(), entries.end(), rng);
        const Gazetteer g = make_gazetteer(entries);
        for (int t = 0; t < 20; ++t) {
            std::vector<std::string> words(10);
            for (auto& w : words) w = alphabet[static_cast<std::size_t>(pick(rng))];
            const std::span<const std::string> view(words);
            EXPECT_EQ(extract_entities(view, g), extract_entities(view, ref));
        }
    }
}

TEST(AnchorEmbeddingTest, Examples) {
    const EntityEmbeddingTable table{{"p", {1.0, 3.0}}, {"q", {3.0, 1.0}}};
    const std::vector<EntitySpan> one{{0, 1, "p"}};
    EXPECT_EQ(anchor_embedding(one, table, 2), (std::vector<double>{1.0, 3.0}));
    const std::vector<EntitySpan> two{{0, 1, "p"}, {2, 3, "q"}};
    EXPECT_EQ(anchor_embedding(two, table, 2), (std::vector<double>{2.0, 2.0}));
    EXPECT_EQ(anchor_embedding({}, table, 2), (std::vector<double>{0.0, 0.0}));
}

TEST(AnchorEmbeddingTest, RejectsUnknownEntity) {
    const EntityEmbeddingTable table{{"p", {1.0, 3.0}}};
    const std::vector<EntitySpan> spans{{0, 1, "nobody"}};
    EXPECT_THROW(anchor_embedding(spans, table, 2), std::invalid_argument);
}

TEST(AnchorEmbeddingTest, MeanStaysInsideCoordinateRange) {
    Rng rng = substream(22, "convex");
    std::normal_distribution<double> nd(0.0, 2.0);
    std::uniform_int_distribution<std::size_t> count(1, 6);
    for (int trial = 0; trial < 1000; ++trial) {
        EntityEmbeddingTable table;
        std::vector<EntitySpan> spans;
        const std::size_t n = count(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const std::string id = "e" + std::to_string(i);
            std::vector<double> v(5);
            for (double& x : v) x = nd(rng);
            table.emplace(id, v);
            spans.push_back({i, i + 1, id});
        }
        const auto m = anchor_embedding(spans, table, 5);
        for (std::size_t c = 0; c < 5; ++c) {
            double lo = INFINITY, hi = -INFINITY, mag = 0.0;
            for (const auto& [id, v] : table) {
                lo = std::min(lo, v[c]);
                hi = std::max(hi, v[c]);
                mag = std::max(mag, std::abs(v[c]));
            }
            EXPECT_GE(m[c], lo - 1e-12);
            EXPECT_LE(m[c], hi + 1e-12);
            EXPECT_LE(std::abs(m[c]), mag + 1e-12);
        }
    }
}

TEST(EntityEmbeddingsTest, PoolTokensThenSurfaceForms) {
    Vocab vocab;
    const TokenId york = vocab.add("york"), big = vocab.add("big"), apple = vocab.add("apple");
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.d_model = 8;
    c.n_heads = 2;
    c.d_ff = 16;
    const ModelSnapshot m = init_model(c);
    const Gazetteer g = make_gazetteer({{"york", "york"}, {"big apple", "nyc"}, {"apple", "nyc"}});
    const auto table = build_entity_embeddings(g, vocab, m);
    const Tensor& emb = m.param("tok_emb");
    ASSERT_EQ(table.size(), 2u);
    for (std::size_t d = 0; d < 8; ++d) {
        EXPECT_EQ(table.at("york")[d], emb.at(york, d));
        const double surface_a = (emb.at(big, d) + emb.at(apple, d)) / 2.0;
        EXPECT_NEAR(table.at("nyc")[d], (surface_a + emb.at(apple, d)) / 2.0, 1e-15);
    }
}

TEST(AnchorSetTest, PureAndZeroWhenNothingMatches) {
    const auto& w = testing::tiny_world();
    const auto table = build_entity_embeddings(w.corpus.gazetteer, w.corpus.vocab, *w.base);
    const std::size_t d = w.base->config().d_model;
    for (const auto& r : w.records) {
        const auto words = split_words(r.prompt);
        const auto a = compute_anchor_set(words, w.corpus.gazetteer, table, d);
        const auto b = compute_anchor_set(words, w.corpus.gazetteer, table, d);
        EXPECT_EQ(a.spans, b.spans);
        EXPECT_EQ(a.embedding, b.embedding);
        EXPECT_FALSE(a.spans.empty()) << r.prompt;
    }
    const std::vector<std::string> none{"zzz", "qqq"};
    EXPECT_EQ(compute_anchor_set(none, w.corpus.gazetteer, table, d).embedding, std::vector<double>(d, 0.0));
}

}  // namespace
}  // namespace memoe
