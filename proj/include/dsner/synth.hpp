#pragma once

// Synthetic corpora with exactly known ground truth: per-type entity name
// inventories, type-specific cue words that precede mentions with probability
// 0.9 (follow with 0.5), distractor names that become false positives when
// dictionary noise assigns them a type, and filler text elsewhere. Coverage c
// and noise q of the generated dictionary are then exactly measurable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/rng.hpp"

namespace dsner {

struct WorldConfig {
    int n_types = 4;
    int names_per_type = 200;
    int name_len_min = 1, name_len_max = 3;  // tokens per entity name
    int cue_words_per_type = 6;
    int distractor_count = 50;
    int sent_len_min = 8, sent_len_max = 14;
    int mentions_min = 1, mentions_max = 2;
    int filler_count = 300;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_types < 1 || names_per_type < 1 || cue_words_per_type < 1 ||
            distractor_count < 1 || filler_count < 1)
            throw ValueError("world counts must be >= 1");
        if (name_len_min < 1 || name_len_max < name_len_min)
            throw ValueError("invalid name length range");
        if (sent_len_min < 1 || sent_len_max < sent_len_min)
            throw ValueError("invalid sentence length range");
        if (mentions_min < 1 || mentions_max < mentions_min)
            throw ValueError("invalid mentions range");
    }
};

struct World {
    WorldConfig config;
    std::vector<std::string> types;                       // T0..T{n-1}
    std::vector<std::vector<std::vector<std::string>>> inventory;  // [type][name][token]
    std::vector<std::vector<std::string>> cues;           // [type][word]
    std::vector<std::string> distractors;                 // single tokens
    std::vector<std::string> fillers;
};

namespace detail {

// Tokens are length-3 lowercase strings: 26^3 distinct values.
inline constexpr std::size_t kTokenSpace = 26u * 26u * 26u;

inline std::string random_token(Rng& rng) {
    std::string t(3, 'a');
    for (char& c : t) c = static_cast<char>('a' + rng.below(26));
    return t;
}

inline std::vector<std::string> draw_unique_tokens(Rng& rng, std::size_t count,
                                                   std::set<std::string>& used) {
    if (used.size() + count > kTokenSpace)
        throw ValueError("vocabulary exhaustion: requested names exceed combinatorial space");
    std::vector<std::string> out;
    out.reserve(count);
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 64 * kTokenSpace)
            throw ValueError("vocabulary exhaustion: requested names exceed combinatorial space");
        std::string t = random_token(rng);
        if (used.insert(t).second) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace detail

inline World gen_world(const WorldConfig& config) {
    config.validate();
    World world;
    world.config = config;
    Rng rng(derive_seed(config.seed, "world"));
    std::set<std::string> used;

    for (int t = 0; t < config.n_types; ++t) world.types.push_back("T" + std::to_string(t));

    // Disjoint token pools keep name/cue/filler evidence separable.
    std::size_t name_token_budget = 0;
    for (int t = 0; t < config.n_types; ++t)
        name_token_budget += static_cast<std::size_t>(config.names_per_type) *
                             static_cast<std::size_t>(config.name_len_max);
    auto name_tokens = detail::draw_unique_tokens(
        rng, std::max<std::size_t>(name_token_budget / 2, 64), used);

    std::set<std::vector<std::string>> seen_names;
    world.inventory.resize(config.n_types);
    for (int t = 0; t < config.n_types; ++t) {
        auto& names = world.inventory[t];
        std::size_t attempts = 0;
        while (names.size() < static_cast<std::size_t>(config.names_per_type)) {
            if (++attempts > 1000u * static_cast<std::size_t>(config.names_per_type))
                throw ValueError(
                    "vocabulary exhaustion: requested names exceed combinatorial space");
            const int len = static_cast<int>(rng.between(config.name_len_min, config.name_len_max));
            std::vector<std::string> name;
            for (int i = 0; i < len; ++i)
                name.push_back(name_tokens[rng.below(name_tokens.size())]);
            if (seen_names.insert(name).second) names.push_back(std::move(name));
        }
    }

    world.cues.resize(config.n_types);
    for (int t = 0; t < config.n_types; ++t)
        world.cues[t] = detail::draw_unique_tokens(
            rng, static_cast<std::size_t>(config.cue_words_per_type), used);
    world.distractors =
        detail::draw_unique_tokens(rng, static_cast<std::size_t>(config.distractor_count), used);
    world.fillers =
        detail::draw_unique_tokens(rng, static_cast<std::size_t>(config.filler_count), used);
    return world;
}

namespace detail {

inline constexpr double kCueBeforeProb = 0.9;
inline constexpr double kCueAfterProb = 0.5;
inline constexpr double kDistractorProb = 0.1;

inline void push_filler(const World& world, Rng& rng, std::vector<std::string>& toks) {
    if (rng.bernoulli(kDistractorProb))
        toks.push_back(world.distractors[rng.below(world.distractors.size())]);
    else
        toks.push_back(world.fillers[rng.below(world.fillers.size())]);
}

}  // namespace detail

// Sentences are generated independently, each from a seed derived from
// (base seed, sentence index), so any generation order gives the same corpus.
inline Corpus gen_corpus(const World& world, int n_sentences, std::uint64_t seed) {
    if (n_sentences < 1) throw ValueError("n_sentences must be >= 1");
    const WorldConfig& cfg = world.config;
    Corpus corpus;
    for (int s = 0; s < n_sentences; ++s) {
        Rng rng(derive_seed(seed, "sentence", static_cast<std::uint64_t>(s)));
        Sentence sent;
        sent.id = s;

        const int n_mentions = static_cast<int>(rng.between(cfg.mentions_min, cfg.mentions_max));
        const int target_len = static_cast<int>(rng.between(cfg.sent_len_min, cfg.sent_len_max));

        struct PlannedMention {
            int type;
            const std::vector<std::string>* name;
            bool cue_before, cue_after;
        };
        std::vector<PlannedMention> plan;
        int mention_tokens = 0;
        for (int m = 0; m < n_mentions; ++m) {
            PlannedMention pm;
            pm.type = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_types)));
            pm.name = &world.inventory[pm.type][rng.below(world.inventory[pm.type].size())];
            pm.cue_before = rng.bernoulli(detail::kCueBeforeProb);
            pm.cue_after = rng.bernoulli(detail::kCueAfterProb);
            mention_tokens += static_cast<int>(pm.name->size()) + (pm.cue_before ? 1 : 0) +
                              (pm.cue_after ? 1 : 0);
            plan.push_back(pm);
        }

        // Distribute remaining length over m+1 filler runs (one run may be 0).
        int filler_total = std::max(0, target_len - mention_tokens);
        std::vector<int> runs(plan.size() + 1, 0);
        for (int f = 0; f < filler_total; ++f)
            ++runs[rng.below(runs.size())];

        std::vector<std::string> toks;
        for (std::size_t m = 0; m < plan.size(); ++m) {
            for (int f = 0; f < runs[m]; ++f) detail::push_filler(world, rng, toks);
            const auto& pm = plan[m];
            if (pm.cue_before) toks.push_back(world.cues[pm.type][rng.below(world.cues[pm.type].size())]);
            const std::int32_t start = static_cast<std::int32_t>(toks.size());
            for (const auto& tok : *pm.name) toks.push_back(tok);
            corpus.gold.push_back({sent.id, start, static_cast<std::int32_t>(toks.size()),
                                   world.types[pm.type]});
            if (pm.cue_after) toks.push_back(world.cues[pm.type][rng.below(world.cues[pm.type].size())]);
        }
        for (int f = 0; f < runs[plan.size()]; ++f) detail::push_filler(world, rng, toks);

        for (auto& tok : toks) sent.tokens.push_back(make_token(std::move(tok)));
        corpus.sentences.push_back(std::move(sent));
    }
    for (const auto& t : world.types) corpus.type_set.push_back(t);
    return corpus;
}

// Dictionary with per-type recall c and noise fraction q: ceil(c*|inv_t|)
// true names per type plus floor(q * n_true) distractor entries with random
// types (the false-positive source). All weights 1.
inline Dictionary gen_dictionary(const World& world, double recall, double noise,
                                 std::uint64_t seed) {
    if (!(recall > 0 && recall <= 1)) throw ValueError("recall must be in (0, 1]");
    if (!(noise >= 0 && noise < 1)) throw ValueError("noise must be in [0, 1)");
    Rng rng(derive_seed(seed, "dictionary"));
    Dictionary dict("synth");
    std::size_t n_true = 0;
    for (int t = 0; t < world.config.n_types; ++t) {
        const auto& names = world.inventory[t];
        const std::size_t take = static_cast<std::size_t>(
            std::ceil(recall * static_cast<double>(names.size())));
        for (std::size_t idx : rng.sample_without_replacement(names.size(), take)) {
            dict.add({names[idx], world.types[t], 1.0});
            ++n_true;
        }
    }
    const std::size_t n_noise = std::min(
        static_cast<std::size_t>(std::floor(noise * static_cast<double>(n_true))),
        world.distractors.size());
    for (std::size_t idx : rng.sample_without_replacement(world.distractors.size(), n_noise)) {
        const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.config.n_types)));
        dict.add({{world.distractors[idx]}, world.types[t], 1.0});
    }
    return dict;
}

}  // namespace dsner
