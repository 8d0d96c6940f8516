#pragma once

// Deterministic training pipeline: estimate entry frequencies, sample K
// sub-dictionaries, annotate, train frozen reference models, then optimize
// the combined objective with Adam. Every random choice comes from a stream
// derived from (seed, purpose, index), so identical inputs give bit-identical
// outputs.
//
// Loss modes degenerate explicitly: `naive` runs the same code path as `ba`
// with K = 1 and rho = 1 (the single sub-dictionary is the full dictionary),
// where the backdoor-adjusted objective reduces exactly to the sum-form
// negative log-likelihood of the distant labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dsner/config.hpp"
#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/losses.hpp"
#include "dsner/model.hpp"
#include "dsner/rng.hpp"

namespace dsner {

struct TrainState {
    std::uint64_t step = 0;
    Matrix m_w1, v_w1, m_b1, v_b1;
    Matrix m_w2, v_w2, m_b2, v_b2;
    Matrix m_w3, v_w3, m_b3, v_b3;
    // Lazy per-row Adam moments for the embedding table.
    std::map<std::uint32_t, std::pair<std::vector<double>, std::vector<double>>> emb_moments;

    explicit TrainState(const FeatureConfig& c)
        : m_w1(c.d_h, c.feature_dim()), v_w1(c.d_h, c.feature_dim()),
          m_b1(1, c.d_h), v_b1(1, c.d_h),
          m_w2(c.d_r, c.d_h), v_w2(c.d_r, c.d_h),
          m_b2(1, c.d_r), v_b2(1, c.d_r),
          m_w3(c.n_classes(), c.d_r), v_w3(c.n_classes(), c.d_r),
          m_b3(1, c.n_classes()), v_b3(1, c.n_classes()) {}
};

// Bias-corrected Adam. Embedding rows without gradient are left untouched
// (their moments neither update nor decay).
inline void adam_step(ModelParams& params, const Gradients& grads, TrainState& state,
                      const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double lr = cfg.learning_rate, eps = cfg.adam_eps;

    auto update = [&](double& p, double g, double& m, double& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    };
    auto update_dense = [&](Matrix& p, const Matrix& g, Matrix& m, Matrix& v, const char* name) {
        for (double gv : g.a)
            if (!std::isfinite(gv))
                throw NumericError(std::string("non-finite gradient in ") + name);
        for (std::size_t i = 0; i < p.a.size(); ++i) update(p.a[i], g.a[i], m.a[i], v.a[i]);
    };
    update_dense(params.w1, grads.w1, state.m_w1, state.v_w1, "W1");
    update_dense(params.b1, grads.b1, state.m_b1, state.v_b1, "b1");
    update_dense(params.w2, grads.w2, state.m_w2, state.v_w2, "W2");
    update_dense(params.b2, grads.b2, state.m_b2, state.v_b2, "b2");
    update_dense(params.w3, grads.w3, state.m_w3, state.v_w3, "W3");
    update_dense(params.b3, grads.b3, state.m_b3, state.v_b3, "b3");

    const std::uint32_t d_e = params.config.d_e;
    for (const auto& [row, gvec] : grads.embeddings) {
        for (double gv : gvec)
            if (!std::isfinite(gv)) throw NumericError("non-finite gradient in embeddings");
        auto it = state.emb_moments.find(row);
        if (it == state.emb_moments.end())
            it = state.emb_moments
                     .emplace(row, std::make_pair(std::vector<double>(d_e, 0.0),
                                                  std::vector<double>(d_e, 0.0)))
                     .first;
        double* p = params.embeddings.row(row);
        for (std::uint32_t j = 0; j < d_e; ++j) update(p[j], gvec[j], it->second.first[j], it->second.second[j]);
    }
}

// One epoch plan: every positive once, neg_per_pos * |positives| negatives
// sampled uniformly without replacement, shuffled, chunked into batches.
inline std::vector<std::vector<BatchItem>> make_batches(const std::vector<BatchItem>& positives,
                                                        const std::vector<Instance>& negative_pool,
                                                        const TrainConfig& cfg, Rng& rng) {
    if (positives.empty()) throw ValueError("dictionary produced no positive instances");
    const std::size_t want = static_cast<std::size_t>(cfg.neg_per_pos) * positives.size();
    const std::size_t n_neg = std::min(want, negative_pool.size());

    std::vector<BatchItem> items = positives;
    items.reserve(positives.size() + n_neg);
    for (std::size_t idx : rng.sample_without_replacement(negative_pool.size(), n_neg))
        items.push_back(BatchItem{negative_pool[idx], MembershipMask{}});
    rng.shuffle(items);

    std::vector<std::vector<BatchItem>> batches;
    for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(items.size(), i + static_cast<std::size_t>(cfg.batch_size));
        batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                             items.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

struct LogRow {
    std::uint64_t step = 0;
    int epoch = 0;
    LossBreakdown loss;
};

struct TrainResult {
    ModelParams model;
    ReferenceSet references;
    SubDictionarySet subdicts;
    std::vector<std::string> types;  // type index -> name
    std::vector<LogRow> log;
};

namespace detail {

inline void check_corpus_indexing(const Corpus& corpus) {
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
        if (corpus.sentences[i].id != static_cast<std::int32_t>(i))
            throw ValueError("corpus sentences must be indexed by position");
}

inline std::map<std::string, std::int32_t> type_index(const std::vector<std::string>& types) {
    std::map<std::string, std::int32_t> idx;
    for (std::size_t i = 0; i < types.size(); ++i) idx[types[i]] = static_cast<std::int32_t>(i);
    return idx;
}

// Positive batch items with per-sub-dictionary membership flags.
inline std::vector<BatchItem> build_positive_items(const Corpus& corpus, const Annotation& ann,
                                                   const std::map<std::string, std::int32_t>& tidx,
                                                   const std::vector<Matcher>& sub_matchers) {
    std::vector<BatchItem> out;
    out.reserve(ann.positives.size());
    for (const auto& p : ann.positives) {
        BatchItem item;
        item.inst = p.inst;
        item.mask.pos_in_d = true;
        item.mask.etype = tidx.at(p.etype);
        item.mask.pos_in_sub.resize(sub_matchers.size());
        const Sentence& sent = corpus.sentences[p.inst.sentence_id];
        for (std::size_t i = 0; i < sub_matchers.size(); ++i)
            item.mask.pos_in_sub[i] =
                sub_matchers[i].lookup(sent, p.inst.start, p.inst.end) != nullptr ? 1 : 0;
        out.push_back(std::move(item));
    }
    return out;
}

// `naive` and the quantity-sweep K=1 point must execute identical arithmetic,
// so the mode is lowered onto the BA path here rather than special-cased.
inline TrainConfig effective_config(TrainConfig cfg) {
    if (cfg.loss == LossMode::kNaive) {
        cfg.k = 1;
        cfg.rho = 1.0;
        cfg.lambda = 0.0;
    } else if (cfg.loss == LossMode::kBA) {
        cfg.lambda = 0.0;
    }
    return cfg;
}

}  // namespace detail

// Reference models: one fresh model per sub-dictionary, trained on that
// sub-dictionary's own annotation by minimizing naive_nll, then frozen.
inline ReferenceSet train_references(const Corpus& corpus, const SubDictionarySet& subdicts,
                                     const TrainConfig& cfg, const FeatureConfig& fc,
                                     const std::map<std::string, std::int32_t>& tidx,
                                     const std::function<void(ModelParams&)>& init_hook = {}) {
    ReferenceSet refs;
    for (std::size_t i = 0; i < subdicts.subs.size(); ++i) {
        const std::uint64_t init_seed = derive_seed(cfg.seed, "reference", i);
        ModelParams model = init_model(fc, init_seed);
        if (init_hook) init_hook(model);
        Annotation ann = annotate(corpus, subdicts.subs[i], cfg.max_len, cfg.case_sensitive);

        std::vector<BatchItem> positives;
        positives.reserve(ann.positives.size());
        for (const auto& p : ann.positives) {
            BatchItem item;
            item.inst = p.inst;
            item.mask.pos_in_d = true;
            item.mask.etype = tidx.at(p.etype);
            positives.push_back(std::move(item));
        }

        TrainState state(fc);
        Rng rng(derive_seed(cfg.seed, "reference-batches", i));
        for (int epoch = 0; epoch < cfg.ref_epochs; ++epoch) {
            for (const auto& batch : make_batches(positives, ann.negatives, cfg, rng)) {
                LossGradients lg = naive_nll_grad(model, corpus, batch);
                if (!std::isfinite(lg.breakdown.total))
                    throw NumericError("non-finite loss while training reference " +
                                       std::to_string(i));
                adam_step(model, lg.grads, state, cfg);
            }
        }
        refs.models.push_back(std::move(model));
        refs.provenance.push_back({subdicts.subs[i].name(), init_seed, cfg.ref_epochs});
    }
    return refs;
}

inline TrainResult train(const Corpus& corpus, const Dictionary& dict, const TrainConfig& config,
                         const std::function<void(ModelParams&)>& init_hook = {}) {
    config.validate();
    detail::check_corpus_indexing(corpus);
    const TrainConfig cfg = detail::effective_config(config);
    if (dict.empty()) throw ValueError("cannot train with an empty dictionary");

    TrainResult result;
    result.types = dict.types();
    const auto tidx = detail::type_index(result.types);

    const Dictionary weighted =
        cfg.use_file_weights ? dict : estimate_frequencies(dict, corpus);
    result.subdicts = sample_subdicts(weighted, cfg.k, cfg.rho, cfg.seed);

    const Annotation ann = annotate(corpus, weighted, cfg.max_len, cfg.case_sensitive);
    std::vector<Matcher> sub_matchers;
    sub_matchers.reserve(result.subdicts.subs.size());
    for (const auto& sub : result.subdicts.subs) sub_matchers.emplace_back(sub, cfg.case_sensitive);
    const auto positives = detail::build_positive_items(corpus, ann, tidx, sub_matchers);

    FeatureConfig fc;
    fc.d_e = static_cast<std::uint32_t>(cfg.d_e);
    fc.w = static_cast<std::uint32_t>(cfg.width);
    fc.d_h = static_cast<std::uint32_t>(cfg.d_h);
    fc.d_r = static_cast<std::uint32_t>(cfg.d_r);
    fc.max_len = static_cast<std::uint32_t>(cfg.max_len);
    fc.n_types = static_cast<std::uint32_t>(result.types.size());
    fc.vocab_size = cfg.vocab_size;

    if (cfg.lambda > 0)
        result.references = train_references(corpus, result.subdicts, cfg, fc, tidx, init_hook);

    result.model = init_model(fc, cfg.seed);
    if (init_hook) init_hook(result.model);
    TrainState state(fc);
    Rng rng(derive_seed(cfg.seed, "batches"));
    BAOptions opts{cfg.ba_mean_of_logs, cfg.ba_exclude_conflicts};
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(positives, ann.negatives, cfg, rng)) {
            LossGradients lg =
                total_loss_grad(result.model, corpus, batch,
                                cfg.lambda > 0 ? &result.references : nullptr, cfg.lambda,
                                cfg.k, opts);
            ++step;
            if (!std::isfinite(lg.breakdown.total))
                throw NumericError("non-finite loss at step " + std::to_string(step));
            adam_step(result.model, lg.grads, state, cfg);
            result.log.push_back({step, epoch, lg.breakdown});
        }
    }
    return result;
}

// Log CSV: resolved config echoed as comments, then one row per step.
inline void write_training_log(std::ostream& os, const TrainConfig& resolved,
                               const std::vector<LogRow>& log) {
    for (const auto& [key, value] : echo_config(resolved))
        os << "# " << key << " = " << value << "\n";
    os << "step,epoch,l_ba_pos,l_ba_neg,l_cir,total\n";
    char buf[512];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%llu,%d,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(row.step), row.epoch, row.loss.l_ba_pos,
                      row.loss.l_ba_neg, row.loss.l_cir, row.loss.total);
        os << buf;
    }
}

// Reference manifest: "name<TAB>seed<TAB>epochs<TAB>path" per model.
inline void write_reference_manifest(std::ostream& os, const ReferenceSet& refs,
                                     const std::vector<std::string>& paths) {
    for (std::size_t i = 0; i < refs.models.size(); ++i) {
        os << refs.provenance[i].name << '\t' << refs.provenance[i].seed << '\t'
           << refs.provenance[i].epochs << '\t' << paths[i] << '\n';
    }
}

struct GradCheckReport {
    std::size_t n_coords = 0;
    double max_rel_error = 0;
    double max_abs_error = 0;
};

// Central finite differences (step h) on randomly selected coordinates of
// every parameter tensor, including embedding rows touched by the sample.
// Relative error is |a - f| / max(1, |a|, |f|).
inline GradCheckReport grad_check(const Corpus& corpus, const Dictionary& dict,
                                  const TrainConfig& config, std::size_t n_coords = 200,
                                  std::size_t max_instances = 32, double h = 1e-5) {
    config.validate();
    detail::check_corpus_indexing(corpus);
    const TrainConfig cfg = detail::effective_config(config);

    const auto types = dict.types();
    const auto tidx = detail::type_index(types);
    const Dictionary weighted = cfg.use_file_weights ? dict : estimate_frequencies(dict, corpus);
    const SubDictionarySet subdicts = sample_subdicts(weighted, cfg.k, cfg.rho, cfg.seed);
    const Annotation ann = annotate(corpus, weighted, cfg.max_len, cfg.case_sensitive);
    std::vector<Matcher> sub_matchers;
    for (const auto& sub : subdicts.subs) sub_matchers.emplace_back(sub, cfg.case_sensitive);
    const auto positives = detail::build_positive_items(corpus, ann, tidx, sub_matchers);

    FeatureConfig fc;
    fc.d_e = static_cast<std::uint32_t>(cfg.d_e);
    fc.w = static_cast<std::uint32_t>(cfg.width);
    fc.d_h = static_cast<std::uint32_t>(cfg.d_h);
    fc.d_r = static_cast<std::uint32_t>(cfg.d_r);
    fc.max_len = static_cast<std::uint32_t>(cfg.max_len);
    fc.n_types = static_cast<std::uint32_t>(types.size());
    fc.vocab_size = cfg.vocab_size;

    ReferenceSet refs;
    if (cfg.lambda > 0) refs = train_references(corpus, subdicts, cfg, fc, tidx);

    // Balanced sample batch: positives first, then negatives.
    std::vector<BatchItem> batch;
    const std::size_t n_pos = std::min(positives.size(), max_instances / 2);
    for (std::size_t i = 0; i < n_pos; ++i) batch.push_back(positives[i]);
    for (std::size_t i = 0; i < ann.negatives.size() && batch.size() < max_instances; ++i)
        batch.push_back(BatchItem{ann.negatives[i], MembershipMask{}});
    if (batch.empty()) throw ValueError("grad_check needs a non-empty sample");

    ModelParams model = init_model(fc, cfg.seed);
    BAOptions opts{cfg.ba_mean_of_logs, cfg.ba_exclude_conflicts};
    LossGradients analytic =
        total_loss_grad(model, corpus, batch, cfg.lambda > 0 ? &refs : nullptr, cfg.lambda,
                        cfg.k, opts);

    // Coordinate space: dense tensors plus touched embedding rows.
    struct Coord {
        double* param;
        double analytic;
    };
    std::vector<Coord> coords;
    auto add_dense = [&](Matrix& p, const Matrix& g) {
        for (std::size_t i = 0; i < p.a.size(); ++i) coords.push_back({&p.a[i], g.a[i]});
    };
    add_dense(model.w1, analytic.grads.w1);
    add_dense(model.b1, analytic.grads.b1);
    add_dense(model.w2, analytic.grads.w2);
    add_dense(model.b2, analytic.grads.b2);
    add_dense(model.w3, analytic.grads.w3);
    add_dense(model.b3, analytic.grads.b3);
    for (const auto& [row, gvec] : analytic.grads.embeddings) {
        double* p = model.embeddings.row(row);
        for (std::uint32_t j = 0; j < fc.d_e; ++j) coords.push_back({p + j, gvec[j]});
    }

    auto ref_reprs = cfg.lambda > 0 ? reference_representations(refs, corpus, batch)
                                    : std::vector<std::vector<std::vector<double>>>{};
    auto loss_value = [&] {
        return detail::total_loss_value(model, corpus, batch, cfg.lambda > 0 ? &ref_reprs : nullptr,
                                        cfg.lambda, cfg.k, opts);
    };

    GradCheckReport report;
    Rng rng(derive_seed(cfg.seed, "gradcheck"));
    for (std::size_t n = 0; n < n_coords; ++n) {
        Coord& c = coords[static_cast<std::size_t>(rng.below(coords.size()))];
        const double saved = *c.param;
        *c.param = saved + h;
        const double up = loss_value();
        *c.param = saved - h;
        const double down = loss_value();
        *c.param = saved;
        const double fd = (up - down) / (2.0 * h);
        const double abs_err = std::abs(c.analytic - fd);
        const double rel =
            abs_err / std::max({1.0, std::abs(c.analytic), std::abs(fd)});
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        ++report.n_coords;
    }
    return report;
}

}  // namespace dsner
