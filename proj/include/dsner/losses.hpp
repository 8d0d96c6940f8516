#pragma once

// Training objectives. The backdoor-adjusted likelihoods are joint over the
// batch: S_i is the log-likelihood of the batch under sub-dictionary i's
// negative (resp. positive) assignment, and the mixture over the K
// sub-dictionaries is taken in probability space via log-sum-exp, with
// uniform sub-dictionary probability 1/K.
//
//   ba_pos = -log[(1/K) sum_i exp(S_i)],
//     S_i  = sum_{x pos in D} log p(etype_x|x) + sum_{x in Xn(D_i)} log p(NONE|x)
//   ba_neg mirrors it with the roles of D and D_i swapped.
//
// An instance positive in D but negative in D_i contributes both of its terms
// to S_i (the positive set is pinned to D's while D_i supplies the negatives);
// the variant that drops the NONE term collapses every Xn(D_i) to Xn(D) and is
// kept only behind BAOptions::exclude_conflicts. BAOptions::mean_of_logs
// replaces the probability-space mixture by the mean of per-dictionary losses
// (its Jensen upper bound).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/model.hpp"

namespace dsner {

struct MembershipMask {
    bool pos_in_d = false;
    std::int32_t etype = -1;               // type index; -1 for negatives
    std::vector<std::uint8_t> pos_in_sub;  // K flags; implies pos_in_d
};

struct BatchItem {
    Instance inst;
    MembershipMask mask;
};

struct BAOptions {
    bool mean_of_logs = false;
    bool exclude_conflicts = false;
};

struct RefProvenance {
    std::string name;
    std::uint64_t seed = 0;
    int epochs = 0;
};

// K frozen models, one per sub-dictionary; targets for the invariance term.
struct ReferenceSet {
    std::vector<ModelParams> models;
    std::vector<RefProvenance> provenance;
};

struct LossBreakdown {
    double l_ba_pos = 0;
    double l_ba_neg = 0;
    double l_cir = 0;
    double lambda = 0;
    double total = 0;
};

namespace detail {

struct BACore {
    double ba_pos = 0, ba_neg = 0;
    std::vector<double> s_pos, s_neg;  // per-sub joint log-likelihoods
    std::vector<double> w_pos, w_neg;  // mixture weights for gradients
};

inline void mixture_reduce(const std::vector<double>& s, bool mean_of_logs, double& value,
                           std::vector<double>& w) {
    const std::size_t k = s.size();
    w.assign(k, 1.0 / static_cast<double>(k));
    if (mean_of_logs) {
        double acc = 0;
        for (double si : s) acc += -si;
        value = acc / static_cast<double>(k);
        return;
    }
    double mx = s[0];
    for (double si : s) mx = std::max(mx, si);
    double z = 0;
    for (double si : s) z += std::exp(si - mx);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(s[i] - mx) / z;
    value = std::log(static_cast<double>(k)) - (mx + std::log(z));
}

// logp: per instance, log-probabilities over T entity types plus NONE.
inline BACore ba_core(const std::vector<std::vector<double>>& logp,
                      const std::vector<const MembershipMask*>& masks, int k,
                      std::uint32_t none_idx, const BAOptions& opts) {
    if (logp.empty()) throw ValueError("empty batch");
    if (k < 1) throw ValueError("K must be >= 1");
    BACore core;
    core.s_pos.assign(k, 0.0);
    core.s_neg.assign(k, 0.0);
    for (std::size_t x = 0; x < logp.size(); ++x) {
        const MembershipMask& m = *masks[x];
        if (m.pos_in_d && (static_cast<int>(m.pos_in_sub.size()) != k || m.etype < 0))
            throw ValueError("membership mask arity mismatch");
        const double lp_none = logp[x][none_idx];
        if (m.pos_in_d) {
            const double lp_type = logp[x][m.etype];
            for (int i = 0; i < k; ++i) {
                core.s_pos[i] += lp_type;
                if (m.pos_in_sub[i]) {
                    core.s_neg[i] += lp_type;
                } else if (!opts.exclude_conflicts) {
                    core.s_pos[i] += lp_none;  // x in Xp(D) and in Xn(D_i)
                }
            }
        } else {
            for (int i = 0; i < k; ++i) {
                core.s_pos[i] += lp_none;
                core.s_neg[i] += lp_none;
            }
        }
    }
    mixture_reduce(core.s_pos, opts.mean_of_logs, core.ba_pos, core.w_pos);
    mixture_reduce(core.s_neg, opts.mean_of_logs, core.ba_neg, core.w_neg);
    return core;
}

// Coefficients of the loss on each instance's log-probabilities.
inline void ba_logp_coefficients(const BACore& core,
                                 const std::vector<const MembershipMask*>& masks, int k,
                                 std::uint32_t none_idx, const BAOptions& opts,
                                 std::vector<std::vector<double>>& coeffs) {
    for (std::size_t x = 0; x < masks.size(); ++x) {
        const MembershipMask& m = *masks[x];
        auto& cx = coeffs[x];
        if (m.pos_in_d) {
            double type_coeff = -1.0;  // every S_i in ba_pos
            double none_coeff = 0.0;
            for (int i = 0; i < k; ++i) {
                if (m.pos_in_sub[i]) {
                    type_coeff -= core.w_neg[i];
                } else if (!opts.exclude_conflicts) {
                    none_coeff -= core.w_pos[i];
                }
            }
            cx[m.etype] += type_coeff;
            cx[none_idx] += none_coeff;
        } else {
            cx[none_idx] += -2.0;  // every S_i of both terms
        }
    }
}

}  // namespace detail

// Log-probability-level forms of the BA terms. `logp[x]` holds instance x's
// log-probabilities over the T entity types plus NONE (at none_index); the
// model-bound overloads below produce exactly these via forward().

inline double ba_pos(const std::vector<std::vector<double>>& logp,
                     const std::vector<MembershipMask>& masks, int k, std::uint32_t none_index,
                     BAOptions opts = {}) {
    std::vector<const MembershipMask*> mv;
    for (const auto& m : masks) mv.push_back(&m);
    return detail::ba_core(logp, mv, k, none_index, opts).ba_pos;
}

inline double ba_neg(const std::vector<std::vector<double>>& logp,
                     const std::vector<MembershipMask>& masks, int k, std::uint32_t none_index,
                     BAOptions opts = {}) {
    std::vector<const MembershipMask*> mv;
    for (const auto& m : masks) mv.push_back(&m);
    return detail::ba_core(logp, mv, k, none_index, opts).ba_neg;
}

inline double l_ba(const std::vector<std::vector<double>>& logp,
                   const std::vector<MembershipMask>& masks, int k, std::uint32_t none_index,
                   BAOptions opts = {}) {
    std::vector<const MembershipMask*> mv;
    for (const auto& m : masks) mv.push_back(&m);
    auto core = detail::ba_core(logp, mv, k, none_index, opts);
    return core.ba_pos + core.ba_neg;
}

// Mean squared distance between live representations and K reference
// representation sets, normalized by K * |B|.
inline double mean_sq_repr_distance(const std::vector<std::vector<double>>& reprs,
                                    const std::vector<std::vector<std::vector<double>>>& ref_reprs) {
    if (reprs.empty()) throw ValueError("empty batch");
    if (ref_reprs.empty()) throw ValueError("reference set is empty");
    double acc = 0;
    for (std::size_t x = 0; x < reprs.size(); ++x) {
        for (const auto& ref : ref_reprs) {
            for (std::size_t r = 0; r < reprs[x].size(); ++r) {
                const double d = reprs[x][r] - ref[x][r];
                acc += d * d;
            }
        }
    }
    return acc / (static_cast<double>(ref_reprs.size()) * static_cast<double>(reprs.size()));
}

// ---------------------------------------------------------------------------
// Model-bound operations. The batch references instances of `corpus`
// (sentences indexed by Instance::sentence_id).

namespace detail {

inline const Sentence& batch_sentence(const Corpus& corpus, const Instance& inst) {
    const auto sid = inst.sentence_id;
    if (sid < 0 || sid >= static_cast<std::int32_t>(corpus.sentences.size()))
        throw ValueError("instance references unknown sentence");
    return corpus.sentences[sid];
}

inline std::vector<std::vector<double>> batch_log_probs(const ModelParams& params,
                                                        const Corpus& corpus,
                                                        const std::vector<BatchItem>& batch,
                                                        std::vector<Forward>* fwds = nullptr,
                                                        std::vector<Features>* feats = nullptr) {
    std::vector<std::vector<double>> logp;
    logp.reserve(batch.size());
    for (const auto& item : batch) {
        const Sentence& sent = batch_sentence(corpus, item.inst);
        Features f = featurize(params.config, sent, item.inst);
        Forward fw = forward(params, f);
        logp.push_back(fw.log_probs);
        if (fwds) fwds->push_back(std::move(fw));
        if (feats) feats->push_back(std::move(f));
    }
    return logp;
}

inline std::vector<const MembershipMask*> mask_view(const std::vector<BatchItem>& batch) {
    std::vector<const MembershipMask*> v;
    v.reserve(batch.size());
    for (const auto& item : batch) v.push_back(&item.mask);
    return v;
}

}  // namespace detail

// Mean negative log-likelihood of the distant labels (NONE for negatives).
inline double naive_nll(const ModelParams& params, const Corpus& corpus,
                        const std::vector<BatchItem>& batch) {
    if (batch.empty()) throw ValueError("empty batch");
    double acc = 0;
    for (const auto& item : batch) {
        if (item.mask.pos_in_d && item.mask.etype < 0)
            throw ValueError("positive instance without a type label");
        const Sentence& sent = detail::batch_sentence(corpus, item.inst);
        Forward fw = forward(params, featurize(params.config, sent, item.inst));
        const auto label =
            item.mask.pos_in_d ? static_cast<std::uint32_t>(item.mask.etype) : params.config.none_index();
        acc += -fw.log_probs[label];
    }
    return acc / static_cast<double>(batch.size());
}

inline double ba_pos(const ModelParams& params, const Corpus& corpus,
                     const std::vector<BatchItem>& batch, int k, BAOptions opts = {}) {
    auto logp = detail::batch_log_probs(params, corpus, batch);
    return detail::ba_core(logp, detail::mask_view(batch), k, params.config.none_index(), opts)
        .ba_pos;
}

inline double ba_neg(const ModelParams& params, const Corpus& corpus,
                     const std::vector<BatchItem>& batch, int k, BAOptions opts = {}) {
    auto logp = detail::batch_log_probs(params, corpus, batch);
    return detail::ba_core(logp, detail::mask_view(batch), k, params.config.none_index(), opts)
        .ba_neg;
}

inline double l_ba(const ModelParams& params, const Corpus& corpus,
                   const std::vector<BatchItem>& batch, int k, BAOptions opts = {}) {
    auto logp = detail::batch_log_probs(params, corpus, batch);
    auto core = detail::ba_core(logp, detail::mask_view(batch), k, params.config.none_index(), opts);
    return core.ba_pos + core.ba_neg;
}

// Representation targets from the frozen reference models.
inline std::vector<std::vector<std::vector<double>>> reference_representations(
    const ReferenceSet& refs, const Corpus& corpus, const std::vector<BatchItem>& batch) {
    std::vector<std::vector<std::vector<double>>> out(refs.models.size());
    for (std::size_t i = 0; i < refs.models.size(); ++i) {
        out[i].reserve(batch.size());
        for (const auto& item : batch) {
            const Sentence& sent = detail::batch_sentence(corpus, item.inst);
            out[i].push_back(
                forward(refs.models[i], featurize(refs.models[i].config, sent, item.inst)).repr);
        }
    }
    return out;
}

// Mean squared representation distance to the K frozen references,
// normalized by K*|B|. Gradients flow through the live model only.
inline double l_cir(const ModelParams& params, const Corpus& corpus,
                    const std::vector<BatchItem>& batch, const ReferenceSet& refs) {
    if (batch.empty()) throw ValueError("empty batch");
    if (refs.models.empty()) throw ValueError("reference set is empty");
    auto ref_reprs = reference_representations(refs, corpus, batch);
    std::vector<std::vector<double>> reprs;
    reprs.reserve(batch.size());
    for (const auto& item : batch) {
        const Sentence& sent = detail::batch_sentence(corpus, item.inst);
        reprs.push_back(forward(params, featurize(params.config, sent, item.inst)).repr);
    }
    return mean_sq_repr_distance(reprs, ref_reprs);
}

struct LossGradients {
    LossBreakdown breakdown;
    Gradients grads;

    explicit LossGradients(const FeatureConfig& c) : grads(c) {}
};

// Value and exact gradient of total = ba_pos + ba_neg + lambda * l_cir.
// With lambda == 0 the reference set may be empty.
inline LossGradients total_loss_grad(const ModelParams& params, const Corpus& corpus,
                                     const std::vector<BatchItem>& batch,
                                     const ReferenceSet* refs, double lambda, int k,
                                     BAOptions opts = {}) {
    if (batch.empty()) throw ValueError("empty batch");
    if (lambda < 0) throw ValueError("lambda must be >= 0");
    if (lambda > 0 && (!refs || refs->models.empty()))
        throw ValueError("lambda > 0 requires a reference set");

    const std::uint32_t none_idx = params.config.none_index();
    std::vector<Forward> fwds;
    std::vector<Features> feats;
    fwds.reserve(batch.size());
    feats.reserve(batch.size());
    auto logp = detail::batch_log_probs(params, corpus, batch, &fwds, &feats);
    auto masks = detail::mask_view(batch);

    auto core = detail::ba_core(logp, masks, k, none_idx, opts);
    std::vector<std::vector<double>> coeffs(batch.size(),
                                            std::vector<double>(params.config.n_classes(), 0.0));
    detail::ba_logp_coefficients(core, masks, k, none_idx, opts, coeffs);

    LossGradients out(params.config);
    out.breakdown.l_ba_pos = core.ba_pos;
    out.breakdown.l_ba_neg = core.ba_neg;
    out.breakdown.lambda = lambda;

    std::vector<std::vector<double>> drepr(batch.size());
    if (lambda > 0) {
        const double kk = static_cast<double>(refs->models.size());
        const double bb = static_cast<double>(batch.size());
        auto ref_reprs = reference_representations(*refs, corpus, batch);
        double acc = 0;
        for (std::size_t x = 0; x < batch.size(); ++x) {
            const auto& repr = fwds[x].repr;
            drepr[x].assign(repr.size(), 0.0);
            for (std::size_t i = 0; i < ref_reprs.size(); ++i) {
                for (std::size_t r = 0; r < repr.size(); ++r) {
                    const double d = repr[r] - ref_reprs[i][x][r];
                    acc += d * d;
                    drepr[x][r] += lambda * (2.0 * d) / (kk * bb);
                }
            }
        }
        out.breakdown.l_cir = acc / (kk * bb);
    }

    out.breakdown.total =
        out.breakdown.l_ba_pos + out.breakdown.l_ba_neg + lambda * out.breakdown.l_cir;

    static const std::vector<double> kNoRepr;
    for (std::size_t x = 0; x < batch.size(); ++x)
        backward(params, feats[x], fwds[x], coeffs[x], lambda > 0 ? drepr[x] : kNoRepr,
                 out.grads);
    return out;
}

namespace detail {

// Value-only evaluation against precomputed reference representations;
// used by the finite-difference harness where references never move.
inline double total_loss_value(const ModelParams& params, const Corpus& corpus,
                               const std::vector<BatchItem>& batch,
                               const std::vector<std::vector<std::vector<double>>>* ref_reprs,
                               double lambda, int k, const BAOptions& opts,
                               LossBreakdown* breakdown = nullptr) {
    if (batch.empty()) throw ValueError("empty batch");
    if (lambda > 0 && (!ref_reprs || ref_reprs->empty()))
        throw ValueError("lambda > 0 requires a reference set");
    std::vector<Forward> fwds;
    auto logp = batch_log_probs(params, corpus, batch, lambda > 0 ? &fwds : nullptr);
    auto core = ba_core(logp, mask_view(batch), k, params.config.none_index(), opts);
    double cir = 0;
    if (lambda > 0) {
        double acc = 0;
        for (std::size_t x = 0; x < batch.size(); ++x) {
            const auto& repr = fwds[x].repr;
            for (const auto& ref : *ref_reprs) {
                for (std::size_t r = 0; r < repr.size(); ++r) {
                    const double d = repr[r] - ref[x][r];
                    acc += d * d;
                }
            }
        }
        cir = acc / (static_cast<double>(ref_reprs->size()) * static_cast<double>(batch.size()));
    }
    const double total = core.ba_pos + core.ba_neg + lambda * cir;
    if (breakdown) {
        breakdown->l_ba_pos = core.ba_pos;
        breakdown->l_ba_neg = core.ba_neg;
        breakdown->l_cir = cir;
        breakdown->lambda = lambda;
        breakdown->total = total;
    }
    return total;
}

}  // namespace detail

inline LossBreakdown total_loss(const ModelParams& params, const Corpus& corpus,
                                const std::vector<BatchItem>& batch, const ReferenceSet* refs,
                                double lambda, int k, BAOptions opts = {}) {
    if (lambda > 0 && (!refs || refs->models.empty()))
        throw ValueError("lambda > 0 requires a reference set");
    std::vector<std::vector<std::vector<double>>> ref_reprs;
    if (lambda > 0) ref_reprs = reference_representations(*refs, corpus, batch);
    LossBreakdown bd;
    detail::total_loss_value(params, corpus, batch, &ref_reprs, lambda, k, opts, &bd);
    return bd;
}

// Mean NLL plus its exact gradient; the objective for reference training.
inline LossGradients naive_nll_grad(const ModelParams& params, const Corpus& corpus,
                                    const std::vector<BatchItem>& batch) {
    if (batch.empty()) throw ValueError("empty batch");
    LossGradients out(params.config);
    const double n = static_cast<double>(batch.size());
    double acc = 0;
    std::vector<double> dlogp(params.config.n_classes(), 0.0);
    static const std::vector<double> no_repr;
    for (const auto& item : batch) {
        if (item.mask.pos_in_d && item.mask.etype < 0)
            throw ValueError("positive instance without a type label");
        const Sentence& sent = detail::batch_sentence(corpus, item.inst);
        Features f = featurize(params.config, sent, item.inst);
        Forward fw = forward(params, f);
        const auto label = item.mask.pos_in_d ? static_cast<std::uint32_t>(item.mask.etype)
                                              : params.config.none_index();
        acc += -fw.log_probs[label];
        std::fill(dlogp.begin(), dlogp.end(), 0.0);
        dlogp[label] = -1.0 / n;
        backward(params, f, fw, dlogp, no_repr, out.grads);
    }
    out.breakdown.total = acc / n;
    return out;
}

}  // namespace dsner
