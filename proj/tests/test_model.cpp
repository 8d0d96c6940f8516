#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "dsner/model.hpp"
#include "dsner/rng.hpp"
#include "helpers.hpp"

using namespace dsner;

namespace {

FeatureConfig tiny_config() {
    FeatureConfig c;
    c.d_e = 6;
    c.w = 2;
    c.d_h = 10;
    c.d_r = 5;
    c.max_len = 4;
    c.n_types = 3;
    c.vocab_size = 64;
    return c;
}

Sentence words(const std::vector<std::string>& toks) {
    Sentence s;
    s.id = 0;
    for (const auto& t : toks) s.tokens.push_back(make_token(t));
    return s;
}

double guarded_rel(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("featurize block conventions", "[model]") {
    FeatureConfig c = tiny_config();
    Sentence sent = words({"alpha", "beta", "gamma", "delta"});
    ModelParams p = init_model(c, 1);

    SECTION("empty left context at sentence start") {
        Features f = featurize(c, sent, {0, 0, 1});
        CHECK(f.left_rows.empty());
        CHECK(f.right_rows.size() == 2);
        auto dense = features_vector(p, f);
        for (std::uint32_t j = c.d_e; j < 2 * c.d_e; ++j) CHECK(dense[j] == 0.0);
    }

    SECTION("single lowercase token scalars") {
        Features f = featurize(c, sent, {0, 1, 2});
        CHECK(f.scalars[0] == 1.0 / static_cast<double>(c.max_len));
        CHECK(f.scalars[1] == 0.0);
        CHECK(f.scalars[2] == 0.0);
    }

    SECTION("caps flags") {
        Sentence caps = words({"NATO", "Paris", "mixedCase"});
        Features all_caps = featurize(c, caps, {0, 0, 1});
        CHECK(all_caps.scalars[1] == 1.0);
        CHECK(all_caps.scalars[2] == 1.0);
        Features initial = featurize(c, caps, {0, 1, 2});
        CHECK(initial.scalars[1] == 0.0);
        CHECK(initial.scalars[2] == 1.0);
        Features mixed = featurize(c, caps, {0, 2, 3});
        CHECK(mixed.scalars[1] == 0.0);
        CHECK(mixed.scalars[2] == 0.0);
    }

    SECTION("hash rows are text-determined") {
        Sentence other = words({"zzz", "beta"});
        Features a = featurize(c, sent, {0, 1, 2});
        Features b = featurize(c, other, {0, 1, 2});
        CHECK(a.cand_rows == b.cand_rows);
        CHECK(token_row("beta", c.vocab_size) == a.cand_rows[0]);
    }
}

TEST_CASE("forward with all-zero parameters is uniform", "[model]") {
    FeatureConfig c = tiny_config();  // n_types = 3 -> 4 classes
    ModelParams p;
    p.config = c;
    p.embeddings = Matrix(c.vocab_size, c.d_e);
    p.w1 = Matrix(c.d_h, c.feature_dim());
    p.b1 = Matrix(1, c.d_h);
    p.w2 = Matrix(c.d_r, c.d_h);
    p.b2 = Matrix(1, c.d_r);
    p.w3 = Matrix(c.n_classes(), c.d_r);
    p.b3 = Matrix(1, c.n_classes());

    Sentence sent = words({"x", "y"});
    Forward fw = forward(p, featurize(c, sent, {0, 0, 1}));
    for (double v : fw.probs) CHECK(v == 0.25);
    CHECK(fw.p_positive(c) == 0.75);
}

TEST_CASE("forward distribution sums to one and R is bounded", "[model]") {
    FeatureConfig c = tiny_config();
    Sentence sent = words({"aa", "bb", "cc", "dd", "ee"});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ModelParams p = init_model(c, seed);
        Forward fw = forward(p, featurize(c, sent, {0, 1, 3}));
        double sum = 0;
        for (double v : fw.probs) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
        for (double r : fw.repr) {
            CHECK(r > -1.0);
            CHECK(r < 1.0);
        }
    }
}

TEST_CASE("forward is deterministic", "[model]") {
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 9);
    Sentence sent = words({"aa", "bb", "cc"});
    Forward a = forward(p, featurize(c, sent, {0, 0, 2}));
    Forward b = forward(p, featurize(c, sent, {0, 0, 2}));
    CHECK(a.logits == b.logits);
    CHECK(a.probs == b.probs);
    CHECK(a.repr == b.repr);
}

TEST_CASE("p_positive of explicit distributions", "[model]") {
    FeatureConfig c;
    c.n_types = 4;  // 5 classes
    CHECK(p_positive(c, {0.2, 0.2, 0.2, 0.2, 0.2}) == Catch::Approx(0.8));
    CHECK(p_positive(c, {0.0, 0.0, 0.0, 0.0, 1.0}) == 0.0);
    CHECK(p_positive(c, {0.5, 0.3, 0.1, 0.1, 0.0}) == 1.0);
}

TEST_CASE("softmax log-prob gradient identity", "[model]") {
    // d log p(c) / d logit_j = onehot(c) - softmax(logits); b3's gradient is
    // exactly d loss / d logits.
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 3);
    Sentence sent = words({"aa", "bb", "cc"});
    Features f = featurize(c, sent, {0, 1, 2});
    Forward fw = forward(p, f);

    const std::size_t cls = 1;
    std::vector<double> dlogp(c.n_classes(), 0.0);
    dlogp[cls] = 1.0;
    Gradients g(c);
    backward(p, f, fw, dlogp, {}, g);
    for (std::size_t j = 0; j < c.n_classes(); ++j) {
        const double want = (j == cls ? 1.0 : 0.0) - fw.probs[j];
        CHECK(std::abs(g.b3.a[j] - want) < 1e-15);
    }
}

TEST_CASE("backward matches central finite differences", "[model]") {
    FeatureConfig c = tiny_config();
    Rng rng(77);
    const std::vector<std::string> vocab = testutil::small_vocab();
    const double h = 1e-5;

    for (int trial = 0; trial < 20; ++trial) {
        ModelParams p = init_model(c, 100 + static_cast<std::uint64_t>(trial));
        Corpus corpus = testutil::random_corpus(rng, 1, 7, vocab);
        const Sentence& sent = corpus.sentences[0];
        const auto n = static_cast<std::int32_t>(sent.tokens.size());
        const std::int32_t start = static_cast<std::int32_t>(rng.below(n));
        const std::int32_t end =
            start + 1 +
            static_cast<std::int32_t>(
                rng.below(std::min<std::int32_t>(n - start, static_cast<std::int32_t>(c.max_len))));
        Features f = featurize(c, sent, {0, start, end});

        // a random weighted sum of log-probs and R components
        std::vector<double> dlogp(c.n_classes()), drepr(c.d_r);
        for (double& v : dlogp) v = rng.uniform(-1, 1);
        for (double& v : drepr) v = rng.uniform(-1, 1);

        auto value = [&] {
            Forward fw = forward(p, f);
            double acc = 0;
            for (std::size_t j = 0; j < dlogp.size(); ++j) acc += dlogp[j] * fw.log_probs[j];
            for (std::size_t r = 0; r < drepr.size(); ++r) acc += drepr[r] * fw.repr[r];
            return acc;
        };

        Gradients g(c);
        backward(p, f, forward(p, f), dlogp, drepr, g);

        auto check_coord = [&](double* slot, double analytic) {
            const double saved = *slot;
            *slot = saved + h;
            const double up = value();
            *slot = saved - h;
            const double down = value();
            *slot = saved;
            const double fd = (up - down) / (2 * h);
            CHECK(guarded_rel(analytic, fd) < 1e-6);
        };
        auto probe_dense = [&](Matrix& pm, const Matrix& gm) {
            for (int probe = 0; probe < 4; ++probe) {
                const std::size_t i = rng.below(pm.a.size());
                check_coord(&pm.a[i], gm.a[i]);
            }
        };
        probe_dense(p.w1, g.w1);
        probe_dense(p.b1, g.b1);
        probe_dense(p.w2, g.w2);
        probe_dense(p.b2, g.b2);
        probe_dense(p.w3, g.w3);
        probe_dense(p.b3, g.b3);
        for (const auto& [row, gvec] : g.embeddings) {
            const std::size_t j = rng.below(c.d_e);
            check_coord(p.embeddings.row(row) + j, gvec[j]);
        }
    }
}

TEST_CASE("gradient of squared distance on R", "[model]") {
    // loss = ||R - R*||^2 has upstream dR = 2 (R - R*)
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 5);
    Sentence sent = words({"aa", "bb"});
    Features f = featurize(c, sent, {0, 0, 1});
    Forward fw = forward(p, f);
    std::vector<double> target(c.d_r, 0.1);
    std::vector<double> drepr(c.d_r);
    for (std::size_t r = 0; r < drepr.size(); ++r) drepr[r] = 2.0 * (fw.repr[r] - target[r]);

    const double h = 1e-5;
    Gradients g(c);
    backward(p, f, fw, std::vector<double>(c.n_classes(), 0.0), drepr, g);
    auto value = [&] {
        Forward v = forward(p, f);
        double acc = 0;
        for (std::size_t r = 0; r < v.repr.size(); ++r)
            acc += (v.repr[r] - target[r]) * (v.repr[r] - target[r]);
        return acc;
    };
    Rng rng(6);
    for (int probe = 0; probe < 6; ++probe) {
        const std::size_t i = rng.below(p.w2.a.size());
        const double saved = p.w2.a[i];
        p.w2.a[i] = saved + h;
        const double up = value();
        p.w2.a[i] = saved - h;
        const double down = value();
        p.w2.a[i] = saved;
        CHECK(guarded_rel(g.w2.a[i], (up - down) / (2 * h)) < 1e-6);
    }
}

TEST_CASE("model serialization round-trips bit-exactly", "[model]") {
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 42);
    std::ostringstream os(std::ios::binary);
    save_model(p, os);
    const std::string bytes = os.str();

    std::istringstream is(bytes, std::ios::binary);
    ModelParams q = load_model(is);
    CHECK(p == q);

    std::ostringstream os2(std::ios::binary);
    save_model(q, os2);
    CHECK(os2.str() == bytes);
}

TEST_CASE("model loading rejects corrupt input", "[model]") {
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 42);
    std::ostringstream os(std::ios::binary);
    save_model(p, os);
    std::string bytes = os.str();

    SECTION("bad magic") {
        bytes[0] = 'X';
        std::istringstream is(bytes, std::ios::binary);
        CHECK_THROWS_AS(load_model(is), ParseError);
    }
    SECTION("unsupported version") {
        bytes[4] = 99;
        std::istringstream is(bytes, std::ios::binary);
        CHECK_THROWS_MATCHES(load_model(is), ParseError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("unsupported version")));
    }
    SECTION("truncation") {
        std::istringstream is(bytes.substr(0, bytes.size() / 2), std::ios::binary);
        CHECK_THROWS_AS(load_model(is), ParseError);
    }
}

TEST_CASE("init_model is seed-deterministic", "[model]") {
    FeatureConfig c = tiny_config();
    CHECK(init_model(c, 7) == init_model(c, 7));
    CHECK(!(init_model(c, 7) == init_model(c, 8)));
}

TEST_CASE("word vector loader overwrites hashed rows", "[model]") {
    FeatureConfig c = tiny_config();
    ModelParams p = init_model(c, 11);
    std::istringstream is("hello 1 2 3 4 5 6\nworld 0.5 0.5 0.5 0.5 0.5 0.5\n");
    CHECK(load_word_vectors(is, p) == 2);
    const double* row = p.embeddings.row(token_row("hello", c.vocab_size));
    CHECK(row[0] == 1.0);
    CHECK(row[5] == 6.0);

    std::istringstream bad("hello 1 2\n");
    CHECK_THROWS_AS(load_word_vectors(bad, p), ParseError);
}
