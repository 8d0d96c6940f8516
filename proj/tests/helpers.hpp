#pragma once

// Shared generators and oracles for the test suites. Oracles here are kept
// deliberately naive (nested loops, direct slicing) and independent of the
// library's data paths.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/rng.hpp"

namespace testutil {

inline std::vector<std::string> small_vocab() {
    return {"aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh"};
}

inline dsner::Corpus random_corpus(dsner::Rng& rng, int n_sentences, int max_tokens,
                                   const std::vector<std::string>& vocab) {
    dsner::Corpus corpus;
    for (int s = 0; s < n_sentences; ++s) {
        dsner::Sentence sent;
        sent.id = s;
        const int n = static_cast<int>(rng.between(1, max_tokens));
        for (int i = 0; i < n; ++i)
            sent.tokens.push_back(dsner::make_token(vocab[rng.below(vocab.size())]));
        corpus.sentences.push_back(std::move(sent));
    }
    return corpus;
}

inline dsner::Dictionary random_dictionary(dsner::Rng& rng, int n_entries,
                                           const std::vector<std::string>& vocab,
                                           const std::vector<std::string>& types,
                                           int max_surface_len) {
    dsner::Dictionary dict("random");
    for (int e = 0; e < n_entries; ++e) {
        dsner::DictEntry entry;
        const int len = static_cast<int>(rng.between(1, max_surface_len));
        for (int i = 0; i < len; ++i) entry.surface.push_back(vocab[rng.below(vocab.size())]);
        entry.etype = types[rng.below(types.size())];
        entry.weight = 1.0 + static_cast<double>(rng.below(5));
        dict.add(std::move(entry));
    }
    return dict;
}

// Quadratic scan: every candidate against every entry.
inline dsner::Annotation oracle_annotate(const dsner::Corpus& corpus,
                                         const dsner::Dictionary& dict, int max_len) {
    dsner::Annotation ann;
    ann.dict_name = dict.name();
    for (const auto& sent : corpus.sentences) {
        for (const auto& inst : dsner::generate_candidates(sent, max_len)) {
            std::vector<std::string> surface;
            for (std::int32_t i = inst.start; i < inst.end; ++i)
                surface.push_back(sent.tokens[i].norm);
            std::vector<std::string> matches;
            for (const auto& entry : dict.entries()) {
                std::vector<std::string> norm_surface;
                for (const auto& tok : entry.surface) norm_surface.push_back(dsner::casefold(tok));
                if (norm_surface == surface) matches.push_back(entry.etype);
            }
            std::sort(matches.begin(), matches.end());
            matches.erase(std::unique(matches.begin(), matches.end()), matches.end());
            if (matches.empty()) {
                ann.negatives.push_back(inst);
            } else {
                ann.positives.push_back({inst, matches.front()});
                for (std::size_t t = 1; t < matches.size(); ++t)
                    ann.extra_types.push_back({inst, matches[t]});
            }
        }
    }
    return ann;
}

inline std::set<dsner::Instance> instance_set(const std::vector<dsner::Positive>& positives) {
    std::set<dsner::Instance> out;
    for (const auto& p : positives) out.insert(p.inst);
    return out;
}

}  // namespace testutil
