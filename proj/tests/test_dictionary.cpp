#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "dsner/dictionary.hpp"
#include "dsner/rng.hpp"
#include "helpers.hpp"

using namespace dsner;

namespace {

Corpus sentence_corpus(const std::vector<std::string>& tokens) {
    Corpus c;
    Sentence s;
    s.id = 0;
    for (const auto& t : tokens) s.tokens.push_back(make_token(t));
    c.sentences.push_back(std::move(s));
    return c;
}

Dictionary two_entry_dict() {
    Dictionary d("toy");
    d.add({{"new", "york"}, "LOC", 1.0});
    d.add({{"york"}, "LOC", 1.0});
    return d;
}

}  // namespace

TEST_CASE("annotate keeps every overlapping match", "[dictionary]") {
    Corpus c = sentence_corpus({"new", "york", "city"});
    Annotation ann = annotate(c, two_entry_dict(), 3);
    REQUIRE(ann.positives.size() == 2);
    CHECK(ann.positives[0] == Positive{{0, 0, 2}, "LOC"});
    CHECK(ann.positives[1] == Positive{{0, 1, 2}, "LOC"});
    CHECK(ann.negatives.size() == 4);  // 6 candidates total for n=3, L=3
}

TEST_CASE("annotate with no corpus overlap yields no positives", "[dictionary]") {
    Corpus c = sentence_corpus({"paris", "texas"});
    Annotation ann = annotate(c, two_entry_dict(), 3);
    CHECK(ann.positives.empty());
    CHECK(ann.negatives.size() == 3);
}

TEST_CASE("annotate partitions the candidate set", "[dictionary]") {
    Rng rng(11);
    const auto vocab = testutil::small_vocab();
    for (int trial = 0; trial < 30; ++trial) {
        Corpus c = testutil::random_corpus(rng, 3, 7, vocab);
        Dictionary d = testutil::random_dictionary(rng, 6, vocab, {"A", "B"}, 2);
        const int max_len = 3;
        Annotation ann = annotate(c, d, max_len);

        std::set<Instance> all;
        for (const auto& sent : c.sentences)
            for (const auto& inst : generate_candidates(sent, max_len)) all.insert(inst);

        std::set<Instance> got = testutil::instance_set(ann.positives);
        for (const auto& inst : ann.negatives) {
            CHECK(got.find(inst) == got.end());
            got.insert(inst);
        }
        CHECK(got == all);
    }
}

TEST_CASE("annotate matches the quadratic oracle", "[dictionary]") {
    Rng rng(22);
    const auto vocab = testutil::small_vocab();
    const std::vector<std::string> types = {"A", "B", "C"};
    for (int trial = 0; trial < 50; ++trial) {
        Corpus c = testutil::random_corpus(rng, 4, 8, vocab);
        Dictionary d = testutil::random_dictionary(rng, 8, vocab, types, 3);
        const int max_len = 1 + static_cast<int>(rng.below(4));
        Annotation got = annotate(c, d, max_len);
        Annotation want = testutil::oracle_annotate(c, d, max_len);
        CHECK(got.positives == want.positives);
        CHECK(got.negatives == want.negatives);
        CHECK(got.extra_types == want.extra_types);
    }
}

TEST_CASE("multi-type surfaces take the smallest type and log the rest", "[dictionary]") {
    Dictionary d("multi");
    d.add({{"washington"}, "PER", 1.0});
    d.add({{"washington"}, "LOC", 1.0});
    Corpus c = sentence_corpus({"washington"});
    Annotation ann = annotate(c, d, 2);
    REQUIRE(ann.positives.size() == 1);
    CHECK(ann.positives[0].etype == "LOC");
    REQUIRE(ann.extra_types.size() == 1);
    CHECK(ann.extra_types[0].etype == "PER");
}

TEST_CASE("matcher answers surface lookups", "[dictionary]") {
    Matcher m(two_entry_dict());
    Corpus c = sentence_corpus({"new", "york"});
    const auto* hit = m.lookup(c.sentences[0], 0, 2);
    REQUIRE(hit != nullptr);
    CHECK(*hit == std::vector<std::string>{"LOC"});
    // prefix of an entry that is not itself an entry
    CHECK(m.lookup(c.sentences[0], 0, 1) == nullptr);
    CHECK(m.lookup({"new", "york"}) != nullptr);
    CHECK(m.lookup({"new"}) == nullptr);
}

TEST_CASE("matching is case-insensitive by default", "[dictionary]") {
    Dictionary d("case");
    d.add({{"Madrid"}, "LOC", 1.0});
    Corpus c = sentence_corpus({"MADRID"});
    CHECK(annotate(c, d, 2).positives.size() == 1);

    Matcher strict(d, true);
    CHECK(strict.lookup(c.sentences[0], 0, 1) == nullptr);
    Annotation none = annotate(c, d, 2, true);
    CHECK(none.positives.empty());
}

TEST_CASE("estimate_frequencies counts candidate occurrences plus one", "[dictionary]") {
    Dictionary d("freq");
    d.add({{"aa"}, "A", 1.0});
    d.add({{"bb", "cc"}, "B", 1.0});
    d.add({{"zz"}, "A", 1.0});
    Corpus c;
    c = sentence_corpus({"aa", "bb", "cc", "aa"});
    Sentence extra;
    extra.id = 1;
    for (const auto& t : {"aa", "bb"}) extra.tokens.push_back(make_token(t));
    c.sentences.push_back(extra);

    Dictionary out = estimate_frequencies(d, c);
    auto weight_of = [&](const std::vector<std::string>& surface) {
        for (const auto& e : out.entries())
            if (e.surface == surface) return e.weight;
        return -1.0;
    };
    CHECK(weight_of({"aa"}) == 4.0);        // three occurrences + 1
    CHECK(weight_of({"bb", "cc"}) == 2.0);  // one occurrence + 1
    CHECK(weight_of({"zz"}) == 1.0);        // smoothing floor
}

TEST_CASE("estimate_frequencies is insertion-order invariant", "[dictionary]") {
    Corpus c = sentence_corpus({"aa", "bb", "aa"});
    Dictionary d1("o1"), d2("o2");
    d1.add({{"aa"}, "A", 1.0});
    d1.add({{"bb"}, "B", 1.0});
    d2.add({{"bb"}, "B", 1.0});
    d2.add({{"aa"}, "A", 1.0});
    Dictionary r1 = estimate_frequencies(d1, c);
    Dictionary r2 = estimate_frequencies(d2, c);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1.entries()[i].surface == r2.entries()[i].surface);
        CHECK(r1.entries()[i].weight == r2.entries()[i].weight);
    }
}

TEST_CASE("sample_subdicts with full coverage returns the base dictionary", "[dictionary]") {
    Rng rng(33);
    Dictionary d = testutil::random_dictionary(rng, 6, testutil::small_vocab(), {"A", "B"}, 2);
    SubDictionarySet set = sample_subdicts(d, 3, 1.0, 99);
    REQUIRE(set.subs.size() == 3);
    for (const auto& sub : set.subs) {
        REQUIRE(sub.size() == d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            CHECK(sub.entries()[i] == d.entries()[i]);
    }
    CHECK(set.prob == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("sample_subdicts cardinality and subset contracts", "[dictionary]") {
    Dictionary d("four");
    d.add({{"aa"}, "A", 1.0});
    d.add({{"bb"}, "A", 1.0});
    d.add({{"cc"}, "A", 1.0});
    d.add({{"dd"}, "A", 1.0});
    SubDictionarySet set = sample_subdicts(d, 1, 0.5, 7);
    REQUIRE(set.subs.size() == 1);
    CHECK(set.subs[0].size() == 2);  // ceil(0.5 * 4)
    for (const auto& e : set.subs[0].entries()) CHECK(d.contains(e.surface, e.etype));
}

TEST_CASE("sample_subdicts draws proportionally to weight", "[dictionary]") {
    Dictionary d("weighted");
    d.add({{"heavy"}, "A", 9.0});
    d.add({{"l1"}, "A", 1.0});
    d.add({{"l2"}, "A", 1.0});
    d.add({{"l3"}, "A", 1.0});
    std::size_t heavy_first = 0;
    const int trials = 10000;
    for (int seed = 0; seed < trials; ++seed) {
        SubDictionarySet set = sample_subdicts(d, 1, 0.25, static_cast<std::uint64_t>(seed));
        REQUIRE(set.subs[0].size() == 1);
        if (set.subs[0].entries()[0].surface == std::vector<std::string>{"heavy"}) ++heavy_first;
    }
    const double freq = static_cast<double>(heavy_first) / trials;
    CHECK(freq > 0.73);  // 9/12 = 0.75
    CHECK(freq < 0.77);
}

TEST_CASE("sample_subdicts is a pure function of its seed", "[dictionary]") {
    Rng rng(44);
    Dictionary d = testutil::random_dictionary(rng, 10, testutil::small_vocab(), {"A", "B"}, 2);
    SubDictionarySet a = sample_subdicts(d, 4, 0.6, 1234);
    SubDictionarySet b = sample_subdicts(d, 4, 0.6, 1234);
    REQUIRE(a.subs.size() == b.subs.size());
    for (std::size_t i = 0; i < a.subs.size(); ++i) {
        REQUIRE(a.subs[i].size() == b.subs[i].size());
        for (std::size_t j = 0; j < a.subs[i].size(); ++j)
            CHECK(a.subs[i].entries()[j] == b.subs[i].entries()[j]);
    }
    SubDictionarySet c = sample_subdicts(d, 4, 0.6, 1235);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.subs.size() && !any_diff; ++i)
        for (std::size_t j = 0; j < a.subs[i].size(); ++j)
            if (!(a.subs[i].entries()[j] == c.subs[i].entries()[j])) {
                any_diff = true;
                break;
            }
    CHECK(any_diff);
}

TEST_CASE("sample_subdicts validates weights and arguments", "[dictionary]") {
    Dictionary d("zero");
    d.add({{"aa"}, "A", 0.0});
    CHECK_THROWS_AS(sample_subdicts(d, 2, 0.5, 1), ValueError);
    Dictionary ok("ok");
    ok.add({{"aa"}, "A", 1.0});
    CHECK_THROWS_AS(sample_subdicts(ok, 0, 0.5, 1), ValueError);
    CHECK_THROWS_AS(sample_subdicts(ok, 2, 0.0, 1), ValueError);
    CHECK_THROWS_AS(sample_subdicts(ok, 2, 1.5, 1), ValueError);
}

TEST_CASE("sub-dictionary annotations are monotone under the base", "[dictionary]") {
    Rng rng(55);
    const auto vocab = testutil::small_vocab();
    for (int trial = 0; trial < 25; ++trial) {
        Corpus c = testutil::random_corpus(rng, 4, 8, vocab);
        Dictionary d = testutil::random_dictionary(rng, 8, vocab, {"A", "B"}, 2);
        SubDictionarySet set = sample_subdicts(d, 2, 0.5, 1000 + static_cast<std::uint64_t>(trial));
        Annotation base = annotate(c, d, 3);
        auto base_pos = testutil::instance_set(base.positives);
        std::set<Instance> base_neg(base.negatives.begin(), base.negatives.end());
        for (const auto& sub : set.subs) {
            Annotation sub_ann = annotate(c, sub, 3);
            for (const auto& p : sub_ann.positives) CHECK(base_pos.count(p.inst) == 1);
            for (const auto& n : base.negatives) {
                (void)n;
            }
            std::set<Instance> sub_neg(sub_ann.negatives.begin(), sub_ann.negatives.end());
            for (const auto& n : base_neg) CHECK(sub_neg.count(n) == 1);
        }
    }
}

TEST_CASE("dictionary file parsing", "[dictionary]") {
    std::istringstream is(
        "# comment line\n"
        "LOC\tnew york\n"
        "PER\tjohn smith\t3.5\n"
        "\n"
        "ORG\tacme\n");
    Dictionary d = read_dictionary(is, "test");
    REQUIRE(d.size() == 3);
    CHECK(d.contains({"new", "york"}, "LOC"));
    CHECK(d.contains({"john", "smith"}, "PER"));
    for (const auto& e : d.entries())
        if (e.etype == "PER") CHECK(e.weight == 3.5);

    std::istringstream bad1("LOC\n");
    CHECK_THROWS_AS(read_dictionary(bad1), ParseError);
    std::istringstream bad2("LOC\tname\tnotanumber\n");
    CHECK_THROWS_AS(read_dictionary(bad2), ParseError);
    std::istringstream bad3("\tname\n");
    CHECK_THROWS_AS(read_dictionary(bad3), ParseError);
}

TEST_CASE("dictionary file round-trip", "[dictionary]") {
    Rng rng(66);
    Dictionary d = testutil::random_dictionary(rng, 12, testutil::small_vocab(), {"A", "B"}, 3);
    std::ostringstream os;
    write_dictionary(d, os);
    std::istringstream is(os.str());
    Dictionary back = read_dictionary(is, d.name());
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.entries()[i] == d.entries()[i]);
        CHECK(back.entries()[i].weight == d.entries()[i].weight);
    }
}

TEST_CASE("duplicate keys are collapsed", "[dictionary]") {
    Dictionary d("dup");
    d.add({{"aa"}, "A", 1.0});
    d.add({{"aa"}, "A", 5.0});
    REQUIRE(d.size() == 1);
    CHECK(d.entries()[0].weight == 5.0);
}
