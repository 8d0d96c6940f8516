#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "dsner/corpus.hpp"
#include "dsner/rng.hpp"
#include "helpers.hpp"

using namespace dsner;

namespace {

Corpus from_string(const std::string& s) {
    std::istringstream is(s);
    return read_conll(is);
}

std::string to_string(const Corpus& c) {
    std::ostringstream os;
    write_conll(c, os);
    return os.str();
}

}  // namespace

TEST_CASE("read_conll decodes plain BIO", "[corpus]") {
    Corpus c = from_string("John B-PER\nSmith I-PER\nran O\n");
    REQUIRE(c.sentences.size() == 1);
    REQUIRE(c.sentences[0].tokens.size() == 3);
    CHECK(c.sentences[0].tokens[0].text == "John");
    CHECK(c.sentences[0].tokens[0].norm == "john");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0] == GoldSpan{0, 0, 2, "PER"});
    CHECK(c.type_set == std::vector<std::string>{"PER"});
}

TEST_CASE("read_conll tolerates IOB1 openings", "[corpus]") {
    Corpus c = from_string("York I-LOC\n");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0] == GoldSpan{0, 0, 1, "LOC"});

    // type switch inside an I-run opens a new span
    Corpus d = from_string("a I-LOC\nb I-ORG\n");
    REQUIRE(d.gold.size() == 2);
    CHECK(d.gold[0] == GoldSpan{0, 0, 1, "LOC"});
    CHECK(d.gold[1] == GoldSpan{0, 1, 2, "ORG"});
}

TEST_CASE("read_conll takes the last column as the tag", "[corpus]") {
    Corpus c = from_string("John NNP B-PER\nruns VBZ O\n");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0] == GoldSpan{0, 0, 1, "PER"});
    CHECK(c.sentences[0].tokens[0].text == "John");
}

TEST_CASE("read_conll reports malformed tags with line numbers", "[corpus]") {
    CHECK_THROWS_MATCHES(from_string("ok O\nbad X-PER\n"), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("line 2")));
    CHECK_THROWS_AS(from_string("foo B\n"), ParseError);
    CHECK_THROWS_AS(from_string("foo B-\n"), ParseError);
    CHECK_THROWS_AS(from_string("loneword\n"), ParseError);
}

TEST_CASE("read_conll on empty input yields an empty corpus", "[corpus]") {
    Corpus c = from_string("");
    CHECK(c.sentences.empty());
    CHECK(c.gold.empty());

    Corpus d = from_string("\n\n\n");
    CHECK(d.sentences.empty());
}

TEST_CASE("write_conll emits canonical BIO", "[corpus]") {
    Corpus c;
    c.sentences.push_back({0, {make_token("New"), make_token("York"), make_token("wins")}});
    c.gold.push_back({0, 0, 2, "PER"});
    CHECK(to_string(c) == "New B-PER\nYork I-PER\nwins O\n");
}

TEST_CASE("write_conll with no gold spans is all O", "[corpus]") {
    Corpus c;
    c.sentences.push_back({0, {make_token("a"), make_token("b")}});
    CHECK(to_string(c) == "a O\nb O\n");
}

TEST_CASE("write_conll marks adjacent spans with fresh B tags", "[corpus]") {
    Corpus c;
    c.sentences.push_back({0, {make_token("a"), make_token("b")}});
    c.gold.push_back({0, 0, 1, "LOC"});
    c.gold.push_back({0, 1, 2, "LOC"});
    CHECK(to_string(c) == "a B-LOC\nb B-LOC\n");
}

TEST_CASE("write_conll rejects overlapping spans", "[corpus]") {
    Corpus c;
    c.sentences.push_back(
        {0, {make_token("a"), make_token("b"), make_token("c"), make_token("d")}});
    c.gold.push_back({0, 0, 2, "LOC"});
    c.gold.push_back({0, 1, 3, "LOC"});
    CHECK_THROWS_AS(to_string(c), ValueError);
}

TEST_CASE("conll round-trip on random corpora without overlaps", "[corpus]") {
    Rng rng(101);
    const auto vocab = testutil::small_vocab();
    const std::vector<std::string> types = {"LOC", "ORG", "PER"};
    for (int trial = 0; trial < 50; ++trial) {
        Corpus c = testutil::random_corpus(rng, 1 + static_cast<int>(rng.below(5)), 8, vocab);
        // non-overlapping random spans, left to right
        for (auto& sent : c.sentences) {
            std::int32_t pos = 0;
            const auto n = static_cast<std::int32_t>(sent.tokens.size());
            while (pos < n) {
                if (rng.bernoulli(0.4)) {
                    const std::int32_t len =
                        1 + static_cast<std::int32_t>(rng.below(std::min<std::int32_t>(3, n - pos)));
                    c.gold.push_back({sent.id, pos, pos + len, types[rng.below(types.size())]});
                    pos += len;
                } else {
                    ++pos;
                }
            }
        }
        for (const auto& g : c.gold) c.type_set.push_back(g.etype);
        std::sort(c.type_set.begin(), c.type_set.end());
        c.type_set.erase(std::unique(c.type_set.begin(), c.type_set.end()), c.type_set.end());

        Corpus back = from_string(to_string(c));
        REQUIRE(back.sentences.size() == c.sentences.size());
        for (std::size_t s = 0; s < c.sentences.size(); ++s) {
            REQUIRE(back.sentences[s].tokens.size() == c.sentences[s].tokens.size());
            for (std::size_t i = 0; i < c.sentences[s].tokens.size(); ++i)
                CHECK(back.sentences[s].tokens[i].text == c.sentences[s].tokens[i].text);
        }
        auto sorted_gold = [](Corpus cc) {
            std::sort(cc.gold.begin(), cc.gold.end(), [](const GoldSpan& a, const GoldSpan& b) {
                return std::tie(a.sentence_id, a.start, a.end, a.etype) <
                       std::tie(b.sentence_id, b.start, b.end, b.etype);
            });
            return cc.gold;
        };
        CHECK(sorted_gold(back) == sorted_gold(c));
        CHECK(back.type_set == c.type_set);
    }
}

TEST_CASE("conll read-write reaches a fixpoint on random tag sequences", "[corpus]") {
    Rng rng(202);
    const std::vector<std::string> types = {"A", "B"};
    for (int trial = 0; trial < 80; ++trial) {
        std::ostringstream os;
        const int n = 1 + static_cast<int>(rng.below(10));
        for (int i = 0; i < n; ++i) {
            os << "tok" << i << " ";
            const auto roll = rng.below(5);
            if (roll == 0) os << "O";
            else if (roll <= 2) os << "B-" << types[rng.below(2)];
            else os << "I-" << types[rng.below(2)];
            os << "\n";
        }
        Corpus first = from_string(os.str());
        std::string canonical = to_string(first);
        Corpus second = from_string(canonical);
        CHECK(to_string(second) == canonical);
        CHECK(second.gold == first.gold);
    }
}

TEST_CASE("generate_candidates counts match the closed form", "[corpus]") {
    Sentence s4{0, {make_token("a"), make_token("b"), make_token("c"), make_token("d")}};
    CHECK(generate_candidates(s4, 2).size() == 7);  // 4 + 3

    Sentence s3{0, {make_token("a"), make_token("b"), make_token("c")}};
    CHECK(generate_candidates(s3, 5).size() == 6);  // 3 + 2 + 1
}

TEST_CASE("generate_candidates equals the brute-force enumeration", "[corpus]") {
    Rng rng(303);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(12));
        const int max_len = 1 + static_cast<int>(rng.below(7));
        Sentence sent;
        sent.id = 7;
        for (int i = 0; i < n; ++i) sent.tokens.push_back(make_token("t"));

        std::vector<Instance> oracle;
        for (int s = 0; s < n; ++s)
            for (int e = s + 1; e <= n; ++e)
                if (e - s <= max_len) oracle.push_back({7, s, e});

        auto got = generate_candidates(sent, max_len);
        CHECK(got == oracle);

        std::size_t expected = 0;
        for (int l = 1; l <= std::min(max_len, n); ++l)
            expected += static_cast<std::size_t>(n - l + 1);
        CHECK(got.size() == expected);
    }
}

TEST_CASE("context_window truncates at boundaries", "[corpus]") {
    Sentence sent{0, {}};
    for (int i = 0; i < 6; ++i) sent.tokens.push_back(make_token("w" + std::to_string(i)));

    auto [l0, r0] = context_window(sent, {0, 0, 2}, 2);
    CHECK(l0.empty());
    REQUIRE(r0.size() == 2);
    CHECK(r0[0].text == "w2");

    auto [l1, r1] = context_window(sent, {0, 2, 4}, 2);
    REQUIRE(l1.size() == 2);
    REQUIRE(r1.size() == 2);
    CHECK(l1[0].text == "w0");
    CHECK(l1[1].text == "w1");
    CHECK(r1[0].text == "w4");
}

TEST_CASE("context_window equals the slice oracle", "[corpus]") {
    Rng rng(404);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(10));
        Sentence sent;
        sent.id = 0;
        for (int i = 0; i < n; ++i) sent.tokens.push_back(make_token("x" + std::to_string(i)));
        const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        const int end = start + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - start)));
        const int w = static_cast<int>(rng.below(4));

        auto [left, right] = context_window(sent, {0, start, end}, w);
        std::vector<std::string> lo, ro;
        for (int i = std::max(0, start - w); i < start; ++i) lo.push_back(sent.tokens[i].text);
        for (int i = end; i < std::min(n, end + w); ++i) ro.push_back(sent.tokens[i].text);
        REQUIRE(left.size() == lo.size());
        REQUIRE(right.size() == ro.size());
        for (std::size_t i = 0; i < lo.size(); ++i) CHECK(left[i].text == lo[i]);
        for (std::size_t i = 0; i < ro.size(); ++i) CHECK(right[i].text == ro[i]);
    }
}

TEST_CASE("token validation", "[corpus]") {
    CHECK_THROWS_AS(make_token(""), ParseError);
    CHECK_THROWS_AS(make_token("has space"), ParseError);
    CHECK(make_token("MiXeD").norm == "mixed");
}

TEST_CASE("span bounds are checked", "[corpus]") {
    Sentence sent{0, {make_token("a"), make_token("b")}};
    CHECK_THROWS_AS(check_span(sent, 0, 3, "test"), ValueError);
    CHECK_THROWS_AS(check_span(sent, 1, 1, "test"), ValueError);
    CHECK_THROWS_AS(check_span(sent, -1, 1, "test"), ValueError);
    CHECK_NOTHROW(check_span(sent, 0, 2, "test"));
}

TEST_CASE("plaintext reader splits on whitespace", "[corpus]") {
    std::istringstream is("the  quick fox\n\njumps\n");
    Corpus c = read_plaintext(is);
    REQUIRE(c.sentences.size() == 2);
    CHECK(c.sentences[0].tokens.size() == 3);
    CHECK(c.sentences[1].tokens.size() == 1);
    CHECK(c.gold.empty());
}
