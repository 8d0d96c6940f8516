#pragma once

// Decoding, exact-match micro-F1, and the bias diagnostics: the likelihood
// gap between gold mentions covered / not covered by the dictionary, the
// per-mention likelihood spread across models trained with different
// dictionaries, and coverage/quantity sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dsner/config.hpp"
#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/model.hpp"
#include "dsner/training.hpp"

namespace dsner {

struct PredSpan {
    std::int32_t sentence_id = 0;
    std::int32_t start = 0;
    std::int32_t end = 0;
    std::string etype;
    double score = 0;  // p_positive at decode time

    friend bool operator==(const PredSpan&, const PredSpan&) = default;
};

// Greedy acceptance by descending score (ties: leftmost, then shorter),
// skipping spans that overlap an already accepted one within a sentence.
// Output is sorted by position.
inline std::vector<PredSpan> select_nonoverlapping(std::vector<PredSpan> kept) {
    std::sort(kept.begin(), kept.end(), [](const PredSpan& a, const PredSpan& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.start != b.start) return a.start < b.start;
        return (a.end - a.start) < (b.end - b.start);
    });
    std::vector<PredSpan> accepted;
    for (const auto& span : kept) {
        bool overlaps = false;
        for (const auto& acc : accepted)
            if (span.sentence_id == acc.sentence_id && span.start < acc.end &&
                acc.start < span.end) {
                overlaps = true;
                break;
            }
        if (!overlaps) accepted.push_back(span);
    }
    std::sort(accepted.begin(), accepted.end(), [](const PredSpan& a, const PredSpan& b) {
        return std::tie(a.sentence_id, a.start, a.end) < std::tie(b.sentence_id, b.start, b.end);
    });
    return accepted;
}

// Score all candidates, keep those with p_positive >= tau, type them by the
// argmax entity logit, then resolve overlaps greedily.
inline std::vector<PredSpan> decode(const ModelParams& model,
                                    const std::vector<std::string>& types, const Sentence& sent,
                                    int max_len, double tau = 0.5) {
    if (!(tau > 0 && tau < 1)) throw ValueError("decode threshold must be in (0, 1)");
    if (types.size() != model.config.n_types)
        throw ValueError("type list does not match model type count");
    std::vector<PredSpan> kept;
    for (const Instance& inst : generate_candidates(sent, max_len)) {
        Forward fw = forward(model, featurize(model.config, sent, inst));
        const double p = fw.p_positive(model.config);
        if (p < tau) continue;
        std::size_t best = 0;
        for (std::size_t t = 1; t < model.config.n_types; ++t)
            if (fw.logits[t] > fw.logits[best]) best = t;
        kept.push_back({sent.id, inst.start, inst.end, types[best], p});
    }
    return select_nonoverlapping(std::move(kept));
}

// Sentences are independent; with threads > 1 they are scored in parallel
// into per-sentence slots, which keeps the output identical to sequential.
inline std::vector<PredSpan> decode_corpus(const ModelParams& model,
                                           const std::vector<std::string>& types,
                                           const Corpus& corpus, int max_len, double tau = 0.5,
                                           int threads = 1) {
    std::vector<std::vector<PredSpan>> per_sent(corpus.sentences.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s)
            per_sent[s] = decode(model, types, corpus.sentences[s], max_len, tau);
    };
    if (threads <= 1 || corpus.sentences.size() < 2) {
        work(0, corpus.sentences.size());
    } else {
        const std::size_t n = corpus.sentences.size();
        const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            const std::size_t lo = n * t / n_threads, hi = n * (t + 1) / n_threads;
            pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    std::vector<PredSpan> out;
    for (auto& v : per_sent)
        for (auto& p : v) out.push_back(std::move(p));
    return out;
}

struct PrfScore {
    double precision = 0, recall = 0, f1 = 0;
    std::size_t n_pred = 0, n_gold = 0, n_match = 0;
};

// Exact (sentence, start, end, type) match, micro-averaged.
inline PrfScore span_f1(const std::vector<PredSpan>& pred, const std::vector<GoldSpan>& gold) {
    using Key = std::tuple<std::int32_t, std::int32_t, std::int32_t, std::string>;
    std::vector<Key> p, g;
    for (const auto& s : pred) p.emplace_back(s.sentence_id, s.start, s.end, s.etype);
    for (const auto& s : gold) g.emplace_back(s.sentence_id, s.start, s.end, s.etype);
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<Key> both;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));

    PrfScore score;
    score.n_pred = p.size();
    score.n_gold = g.size();
    score.n_match = both.size();
    score.precision = p.empty() ? 0.0 : static_cast<double>(both.size()) / static_cast<double>(p.size());
    score.recall = g.empty() ? 0.0 : static_cast<double>(both.size()) / static_cast<double>(g.size());
    score.f1 = (score.precision + score.recall) == 0
                   ? 0.0
                   : 2 * score.precision * score.recall / (score.precision + score.recall);
    return score;
}

struct GoldMention {
    std::size_t mention_id = 0;
    Instance inst;
    std::string etype;
    bool in_dict = false;
};

// Gold mentions that fit the candidate length cap, flagged by whether their
// surface (and, unless surface_only, their type) is a dictionary entry.
inline std::vector<GoldMention> classify_gold_mentions(const Corpus& corpus,
                                                       const Matcher& matcher, int max_len,
                                                       bool surface_only, std::size_t* n_skipped) {
    std::vector<GoldMention> out;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < corpus.gold.size(); ++i) {
        const GoldSpan& g = corpus.gold[i];
        if (g.end - g.start > max_len) {
            ++skipped;
            continue;
        }
        const Sentence& sent = corpus.sentences[g.sentence_id];
        const auto* etypes = matcher.lookup(sent, g.start, g.end);
        bool in_dict = etypes != nullptr;
        if (in_dict && !surface_only)
            in_dict = std::binary_search(etypes->begin(), etypes->end(), g.etype);
        out.push_back({i, Instance{g.sentence_id, g.start, g.end}, g.etype, in_dict});
    }
    if (n_skipped) *n_skipped = skipped;
    return out;
}

inline double p_positive_of(const ModelParams& model, const Corpus& corpus, const Instance& inst) {
    const Sentence& sent = corpus.sentences[inst.sentence_id];
    return forward(model, featurize(model.config, sent, inst)).p_positive(model.config);
}

struct BiasReport {
    std::optional<double> mean_indict;
    std::optional<double> mean_outdict;
    std::optional<double> gap;  // mean_indict - mean_outdict
    std::size_t n_indict = 0, n_outdict = 0, n_skipped = 0;
};

inline BiasReport likelihood_gap(const ModelParams& model, const Corpus& corpus,
                                 const Dictionary& dict, bool surface_only = false,
                                 bool case_sensitive = false) {
    if (corpus.gold.empty()) throw ValueError("likelihood_gap requires gold spans");
    Matcher matcher(dict, case_sensitive);
    BiasReport report;
    auto mentions = classify_gold_mentions(corpus, matcher,
                                           static_cast<int>(model.config.max_len), surface_only,
                                           &report.n_skipped);
    double acc_in = 0, acc_out = 0;
    for (const auto& m : mentions) {
        const double p = p_positive_of(model, corpus, m.inst);
        if (m.in_dict) {
            acc_in += p;
            ++report.n_indict;
        } else {
            acc_out += p;
            ++report.n_outdict;
        }
    }
    if (report.n_indict > 0) report.mean_indict = acc_in / static_cast<double>(report.n_indict);
    if (report.n_outdict > 0) report.mean_outdict = acc_out / static_cast<double>(report.n_outdict);
    if (report.mean_indict && report.mean_outdict)
        report.gap = *report.mean_indict - *report.mean_outdict;
    return report;
}

struct VarianceReport {
    std::vector<double> per_mention_std;  // population std across models
    double aggregate_mean_std = 0;
    std::vector<double> per_model_mean;
    std::size_t n_mentions = 0, n_skipped = 0;
};

// Population standard deviation; exactly zero for identical inputs.
inline double population_std(const std::vector<double>& xs) {
    bool all_equal = true;
    for (double x : xs)
        if (x != xs.front()) {
            all_equal = false;
            break;
        }
    if (all_equal) return 0.0;
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

inline VarianceReport inter_dict_variance(const std::vector<ModelParams>& models,
                                          const Corpus& corpus) {
    if (models.size() < 2) throw ValueError("inter_dict_variance requires >= 2 models");
    if (corpus.gold.empty()) throw ValueError("inter_dict_variance requires gold spans");
    int min_len = static_cast<int>(models[0].config.max_len);
    for (const auto& m : models)
        min_len = std::min(min_len, static_cast<int>(m.config.max_len));

    VarianceReport report;
    report.per_model_mean.assign(models.size(), 0.0);
    double acc_std = 0;
    for (const auto& g : corpus.gold) {
        if (g.end - g.start > min_len) {
            ++report.n_skipped;
            continue;
        }
        const Instance inst{g.sentence_id, g.start, g.end};
        std::vector<double> ps(models.size());
        for (std::size_t m = 0; m < models.size(); ++m) {
            ps[m] = p_positive_of(models[m], corpus, inst);
            report.per_model_mean[m] += ps[m];
        }
        const double sd = population_std(ps);
        report.per_mention_std.push_back(sd);
        acc_std += sd;
        ++report.n_mentions;
    }
    if (report.n_mentions > 0) {
        acc_std /= static_cast<double>(report.n_mentions);
        for (double& m : report.per_model_mean) m /= static_cast<double>(report.n_mentions);
    }
    report.aggregate_mean_std = report.n_mentions > 0 ? acc_std : 0.0;
    return report;
}

enum class SweepAxis { kCoverage, kQuantity };

struct SweepRow {
    double axis_value = 0;
    double precision = 0, recall = 0, f1 = 0;
    std::optional<double> gap;
    double runtime_s = 0;
    std::vector<LogRow> log;  // training log of this grid point
};

// Full train + eval per grid point, everything but the axis fixed. The K=1
// quantity point runs without causal intervention (single sub-dictionary
// equal to the full dictionary, no invariance term).
inline std::vector<SweepRow> sweep(const Corpus& train_corpus, const Corpus& test_corpus,
                                   const Dictionary& dict, const TrainConfig& config,
                                   SweepAxis axis, const std::vector<double>& grid,
                                   double tau = 0.5) {
    if (grid.empty()) throw ValueError("sweep grid must be non-empty");
    std::vector<SweepRow> rows;
    for (double value : grid) {
        TrainConfig cfg = config;
        if (axis == SweepAxis::kCoverage) {
            cfg.rho = value;
        } else {
            cfg.k = static_cast<int>(value);
            if (cfg.k < 1) throw ValueError("quantity grid values must be >= 1");
            if (cfg.k == 1) cfg.loss = LossMode::kNaive;
        }
        const auto t0 = std::chrono::steady_clock::now();
        TrainResult result = train(train_corpus, dict, cfg);
        auto pred = decode_corpus(result.model, result.types, test_corpus, cfg.max_len, tau,
                                  cfg.threads);
        PrfScore score = span_f1(pred, test_corpus.gold);
        BiasReport bias = likelihood_gap(result.model, test_corpus, dict, false,
                                         cfg.case_sensitive);
        const auto t1 = std::chrono::steady_clock::now();

        SweepRow row;
        row.axis_value = value;
        row.precision = score.precision;
        row.recall = score.recall;
        row.f1 = score.f1;
        row.gap = bias.gap;
        row.runtime_s = std::chrono::duration<double>(t1 - t0).count();
        row.log = std::move(result.log);
        rows.push_back(std::move(row));
    }
    return rows;
}

// --- CSV emission ----------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_metrics_csv(std::ostream& os,
                              const std::vector<std::pair<std::string, double>>& rows) {
    os << "metric,value\n";
    for (const auto& [k, v] : rows) os << k << "," << format_double(v) << "\n";
}

struct MentionRow {
    GoldMention mention;
    double p_positive = 0;
    std::optional<double> stddev;
};

inline void write_mentions_csv(std::ostream& os, const std::vector<MentionRow>& rows,
                               bool with_std) {
    os << "mention_id,sentence_id,start,end,etype,in_dict,p_positive";
    if (with_std) os << ",std";
    os << "\n";
    for (const auto& r : rows) {
        os << r.mention.mention_id << "," << r.mention.inst.sentence_id << ","
           << r.mention.inst.start << "," << r.mention.inst.end << "," << r.mention.etype << ","
           << (r.mention.in_dict ? 1 : 0) << "," << format_double(r.p_positive);
        if (with_std) os << "," << format_double(r.stddev.value_or(0.0));
        os << "\n";
    }
}

inline void write_sweep_csv(std::ostream& os, const std::string& axis_name,
                            const std::vector<SweepRow>& rows) {
    os << axis_name << ",precision,recall,f1,gap,runtime_s\n";
    for (const auto& r : rows) {
        os << format_double(r.axis_value) << "," << format_double(r.precision) << ","
           << format_double(r.recall) << "," << format_double(r.f1) << ","
           << (r.gap ? format_double(*r.gap) : "nan") << "," << format_double(r.runtime_s)
           << "\n";
    }
}

}  // namespace dsner
