#pragma once

// Command-line front end. Subcommands: synthgen | annotate | sample-dicts |
// train | eval | diagnose | sweep. Exit codes: 0 success, 1 usage/config
// error, 2 data/format error, 3 numeric failure. Every output file is written
// atomically (temp file + rename) to a path named by a flag.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dsner/config.hpp"
#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/evalx.hpp"
#include "dsner/io.hpp"
#include "dsner/model.hpp"
#include "dsner/synth.hpp"
#include "dsner/training.hpp"

namespace dsner::cli {

namespace detail {

inline Corpus load_corpus(const std::string& path) {
    auto is = open_input(path);
    return read_conll(is);
}

inline Dictionary load_dictionary(const std::string& path) {
    auto is = open_input(path);
    return read_dictionary(is, std::filesystem::path(path).stem().string());
}

inline ModelParams load_model_file(const std::string& path) {
    auto is = open_input(path, true);
    return load_model(is);
}

// Flags that override config-file keys; collected as strings so that file
// values and flag values go through identical parsing.
struct ConfigFlags {
    std::string epochs, batch_size, learning_rate, adam_beta1, adam_beta2, adam_eps, seed,
        lambda, k, rho, e_ref, neg_per_pos, max_len, width, d_e, d_h, d_r, vocab_size, loss,
        threads;
    CLI::Option *o_epochs = nullptr, *o_batch_size = nullptr, *o_learning_rate = nullptr,
                *o_adam_beta1 = nullptr, *o_adam_beta2 = nullptr, *o_adam_eps = nullptr,
                *o_seed = nullptr, *o_lambda = nullptr, *o_k = nullptr, *o_rho = nullptr,
                *o_e_ref = nullptr, *o_neg_per_pos = nullptr, *o_max_len = nullptr,
                *o_width = nullptr, *o_d_e = nullptr, *o_d_h = nullptr, *o_d_r = nullptr,
                *o_vocab_size = nullptr, *o_loss = nullptr, *o_threads = nullptr,
                *o_mean_of_logs = nullptr, *o_exclude_conflicts = nullptr,
                *o_case_sensitive = nullptr, *o_file_weights = nullptr;

    void attach(CLI::App* app) {
        o_epochs = app->add_option("--epochs", epochs, "training epochs");
        o_batch_size = app->add_option("--batch-size", batch_size, "minibatch size");
        o_learning_rate = app->add_option("--learning-rate", learning_rate, "Adam learning rate");
        o_adam_beta1 = app->add_option("--adam-beta1", adam_beta1, "Adam beta1");
        o_adam_beta2 = app->add_option("--adam-beta2", adam_beta2, "Adam beta2");
        o_adam_eps = app->add_option("--adam-eps", adam_eps, "Adam epsilon");
        o_seed = app->add_option("--seed", seed, "RNG seed");
        o_lambda = app->add_option("--lambda", lambda, "invariance regularizer weight");
        o_k = app->add_option("--K", k, "sub-dictionary count");
        o_rho = app->add_option("--rho", rho, "sub-dictionary coverage in (0,1]");
        o_e_ref = app->add_option("--E-ref", e_ref, "reference training epochs");
        o_neg_per_pos = app->add_option("--neg-per-pos", neg_per_pos, "negatives per positive");
        o_max_len = app->add_option("--L", max_len, "max candidate length");
        o_width = app->add_option("--w", width, "context width");
        o_d_e = app->add_option("--d-e", d_e, "embedding dim");
        o_d_h = app->add_option("--d-h", d_h, "hidden dim");
        o_d_r = app->add_option("--d-r", d_r, "representation dim");
        o_vocab_size = app->add_option("--vocab-size", vocab_size, "hash bucket count");
        o_loss = app->add_option("--loss", loss, "objective: naive|ba|ba+cir");
        o_threads = app->add_option("--threads", threads, "worker threads");
        o_mean_of_logs = app->add_flag("--ba-mean-of-logs", "mean-of-logs BA variant");
        o_exclude_conflicts = app->add_flag("--ba-exclude-conflicts",
                                            "drop NONE terms of conflicted positives");
        o_case_sensitive = app->add_flag("--case-sensitive", "match surface case exactly");
        o_file_weights = app->add_flag("--use-file-weights",
                                       "use dictionary-file weights instead of corpus counts");
    }

    std::vector<std::pair<std::string, std::string>> collect() const {
        std::vector<std::pair<std::string, std::string>> out;
        auto put = [&](CLI::Option* o, const char* key, const std::string& v) {
            if (o && o->count() > 0) out.emplace_back(key, v);
        };
        put(o_epochs, "epochs", epochs);
        put(o_batch_size, "batch_size", batch_size);
        put(o_learning_rate, "learning_rate", learning_rate);
        put(o_adam_beta1, "adam_beta1", adam_beta1);
        put(o_adam_beta2, "adam_beta2", adam_beta2);
        put(o_adam_eps, "adam_eps", adam_eps);
        put(o_seed, "seed", seed);
        put(o_lambda, "lambda", lambda);
        put(o_k, "K", k);
        put(o_rho, "rho", rho);
        put(o_e_ref, "E_ref", e_ref);
        put(o_neg_per_pos, "neg_per_pos", neg_per_pos);
        put(o_max_len, "L", max_len);
        put(o_width, "w", width);
        put(o_d_e, "d_e", d_e);
        put(o_d_h, "d_h", d_h);
        put(o_d_r, "d_r", d_r);
        put(o_vocab_size, "vocab_size", vocab_size);
        put(o_loss, "loss", loss);
        put(o_threads, "threads", threads);
        if (o_mean_of_logs && o_mean_of_logs->count()) out.emplace_back("ba_mean_of_logs", "true");
        if (o_exclude_conflicts && o_exclude_conflicts->count())
            out.emplace_back("ba_exclude_conflicts", "true");
        if (o_case_sensitive && o_case_sensitive->count())
            out.emplace_back("case_sensitive", "true");
        if (o_file_weights && o_file_weights->count())
            out.emplace_back("use_file_weights", "true");
        return out;
    }
};

inline TrainConfig resolve_config(const std::string& config_path, const ConfigFlags& flags) {
    std::ifstream file;
    std::istringstream empty;
    std::istream* is = &empty;
    if (!config_path.empty()) {
        file.open(config_path);
        if (!file) throw IoError("cannot open: " + config_path);
        is = &file;
    }
    return parse_config(*is, flags.collect());
}

// Longest-leftmost overlap resolution so distant annotations can be emitted
// as BIO tags (overlaps are unrepresentable there).
inline std::vector<Positive> resolve_longest_leftmost(const Corpus& corpus,
                                                      const Matcher& matcher, int max_len) {
    std::vector<Positive> out;
    for (const auto& sent : corpus.sentences) {
        const std::int32_t n = static_cast<std::int32_t>(sent.tokens.size());
        const std::int32_t cap =
            std::min<std::int32_t>(max_len, static_cast<std::int32_t>(matcher.max_surface_len()));
        std::int32_t s = 0;
        while (s < n) {
            std::int32_t best_end = -1;
            const std::vector<std::string>* best_types = nullptr;
            for (std::int32_t e = std::min<std::int32_t>(n, s + cap); e > s; --e) {
                if (const auto* types = matcher.lookup(sent, s, e)) {
                    best_end = e;
                    best_types = types;
                    break;
                }
            }
            if (best_end > 0) {
                out.push_back({Instance{sent.id, s, best_end}, best_types->front()});
                s = best_end;
            } else {
                ++s;
            }
        }
    }
    return out;
}

// --- subcommand implementations --------------------------------------------

struct SynthgenArgs {
    std::string out_train, out_test, out_dict;
    int train_sentences = 4000, test_sentences = 1000;
    double coverage = 0.6, noise = 0.05;
    WorldConfig world;
};

inline int run_synthgen(const SynthgenArgs& a) {
    World world = gen_world(a.world);
    Corpus train_corpus = gen_corpus(world, a.train_sentences, derive_seed(a.world.seed, "train"));
    atomic_write_file(a.out_train, [&](std::ostream& os) { write_conll(train_corpus, os); });
    if (!a.out_test.empty()) {
        Corpus test_corpus = gen_corpus(world, a.test_sentences, derive_seed(a.world.seed, "test"));
        atomic_write_file(a.out_test, [&](std::ostream& os) { write_conll(test_corpus, os); });
    }
    Dictionary dict = gen_dictionary(world, a.coverage, a.noise, a.world.seed);
    atomic_write_file(a.out_dict, [&](std::ostream& os) { write_dictionary(dict, os); });
    std::cerr << "synthgen: " << a.train_sentences << " train sentences, dictionary with "
              << dict.size() << " entries\n";
    return 0;
}

struct AnnotateArgs {
    std::string corpus, dict, out, format = "spans";
    int max_len = 5;
    bool case_sensitive = false;
};

inline int run_annotate(const AnnotateArgs& a) {
    Corpus corpus = load_corpus(a.corpus);
    Dictionary dict = load_dictionary(a.dict);
    if (a.format == "spans") {
        Annotation ann = annotate(corpus, dict, a.max_len, a.case_sensitive);
        atomic_write_file(a.out, [&](std::ostream& os) {
            os << "sentence_id,start,end,etype\n";
            for (const auto& p : ann.positives)
                os << p.inst.sentence_id << "," << p.inst.start << "," << p.inst.end << ","
                   << p.etype << "\n";
        });
        std::cerr << "annotate: " << ann.positives.size() << " positives, "
                  << ann.negatives.size() << " negatives\n";
    } else if (a.format == "conll") {
        Matcher matcher(dict, a.case_sensitive);
        auto resolved = resolve_longest_leftmost(corpus, matcher, a.max_len);
        Corpus out = corpus;
        out.gold.clear();
        out.type_set = dict.types();
        for (const auto& p : resolved)
            out.gold.push_back({p.inst.sentence_id, p.inst.start, p.inst.end, p.etype});
        atomic_write_file(a.out, [&](std::ostream& os) { write_conll(out, os); });
        std::cerr << "annotate: " << resolved.size() << " spans written as BIO\n";
    } else {
        throw ConfigError("unknown --format '" + a.format + "' (expected spans|conll)");
    }
    return 0;
}

struct SampleDictsArgs {
    std::string dict, corpus, out_prefix;
    int k = 4;
    double rho = 0.7;
    std::uint64_t seed = 42;
};

inline int run_sample_dicts(const SampleDictsArgs& a) {
    Dictionary dict = load_dictionary(a.dict);
    if (!a.corpus.empty()) dict = estimate_frequencies(dict, load_corpus(a.corpus));
    SubDictionarySet set = sample_subdicts(dict, a.k, a.rho, a.seed);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < set.subs.size(); ++i) {
        std::string path = a.out_prefix + std::to_string(i) + ".tsv";
        atomic_write_file(path, [&](std::ostream& os) { write_dictionary(set.subs[i], os); });
        paths.push_back(std::move(path));
    }
    atomic_write_file(a.out_prefix + "manifest.tsv", [&](std::ostream& os) {
        for (std::size_t i = 0; i < paths.size(); ++i)
            os << set.subs[i].name() << '\t' << set.subs[i].size() << '\t' << paths[i] << '\n';
    });
    std::cerr << "sample-dicts: " << set.subs.size() << " sub-dictionaries of "
              << (set.subs.empty() ? 0 : set.subs[0].size()) << " entries\n";
    return 0;
}

struct TrainArgs {
    std::string corpus, dict, config_path, out, log, refs_prefix, embeddings;
};

inline int run_train(const TrainArgs& a, const ConfigFlags& flags) {
    Corpus corpus = load_corpus(a.corpus);
    Dictionary dict = load_dictionary(a.dict);
    TrainConfig cfg = resolve_config(a.config_path, flags);

    std::function<void(ModelParams&)> init_hook;
    if (!a.embeddings.empty()) {
        std::ifstream vs(a.embeddings);
        if (!vs) throw IoError("cannot open: " + a.embeddings);
        std::stringstream buffer;
        buffer << vs.rdbuf();
        std::string content = buffer.str();
        init_hook = [content](ModelParams& p) {
            std::istringstream is(content);
            load_word_vectors(is, p);
        };
    }

    TrainResult result = train(corpus, dict, cfg, init_hook);

    atomic_write_file(a.out, [&](std::ostream& os) { save_model(result.model, os); }, true);
    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    atomic_write_file(log_path,
                      [&](std::ostream& os) { write_training_log(os, cfg, result.log); });
    if (!result.references.models.empty()) {
        const std::string prefix = a.refs_prefix.empty() ? a.out + ".ref" : a.refs_prefix;
        std::vector<std::string> paths;
        for (std::size_t i = 0; i < result.references.models.size(); ++i) {
            std::string path = prefix + std::to_string(i) + ".bin";
            atomic_write_file(
                path, [&](std::ostream& os) { save_model(result.references.models[i], os); },
                true);
            paths.push_back(std::move(path));
        }
        atomic_write_file(prefix + "s.manifest", [&](std::ostream& os) {
            write_reference_manifest(os, result.references, paths);
        });
    }
    std::cerr << "train: " << result.log.size() << " steps, model written to " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string model, corpus, out, pred_out;
    double threshold = 0.5;
    int threads = 1;
};

inline int run_eval(const EvalArgs& a) {
    ModelParams model = load_model_file(a.model);
    Corpus corpus = load_corpus(a.corpus);
    if (corpus.type_set.size() != model.config.n_types)
        throw ValueError("model expects " + std::to_string(model.config.n_types) +
                         " entity types, corpus has " + std::to_string(corpus.type_set.size()));
    auto pred = decode_corpus(model, corpus.type_set, corpus,
                              static_cast<int>(model.config.max_len), a.threshold, a.threads);
    PrfScore score = span_f1(pred, corpus.gold);
    atomic_write_file(a.out, [&](std::ostream& os) {
        write_metrics_csv(os, {{"precision", score.precision},
                               {"recall", score.recall},
                               {"f1", score.f1},
                               {"n_pred", static_cast<double>(score.n_pred)},
                               {"n_gold", static_cast<double>(score.n_gold)},
                               {"n_match", static_cast<double>(score.n_match)}});
    });
    if (!a.pred_out.empty()) {
        atomic_write_file(a.pred_out, [&](std::ostream& os) {
            os << "sentence_id,start,end,etype,score\n";
            for (const auto& p : pred)
                os << p.sentence_id << "," << p.start << "," << p.end << "," << p.etype << ","
                   << format_double(p.score) << "\n";
        });
    }
    std::cerr << "eval: P=" << score.precision << " R=" << score.recall << " F1=" << score.f1
              << "\n";
    return 0;
}

struct DiagnoseArgs {
    std::vector<std::string> models;
    std::string corpus, dict, out_bias, out_mentions, out_variance;
    bool surface_only = false;
    bool case_sensitive = false;
};

inline int run_diagnose(const DiagnoseArgs& a) {
    if (a.models.empty()) throw ConfigError("--models requires at least one model file");
    std::vector<ModelParams> models;
    for (const auto& path : a.models) models.push_back(load_model_file(path));
    Corpus corpus = load_corpus(a.corpus);
    Dictionary dict = load_dictionary(a.dict);
    if (corpus.gold.empty()) throw ValueError("diagnose requires a corpus with gold spans");

    std::vector<std::pair<std::string, double>> bias_rows;
    for (std::size_t m = 0; m < models.size(); ++m) {
        BiasReport r = likelihood_gap(models[m], corpus, dict, a.surface_only, a.case_sensitive);
        const std::string tag = "model" + std::to_string(m);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        bias_rows.emplace_back(tag + "_mean_indict", r.mean_indict.value_or(nan));
        bias_rows.emplace_back(tag + "_mean_outdict", r.mean_outdict.value_or(nan));
        bias_rows.emplace_back(tag + "_gap", r.gap.value_or(nan));
        if (m == 0) {
            bias_rows.emplace_back("n_indict", static_cast<double>(r.n_indict));
            bias_rows.emplace_back("n_outdict", static_cast<double>(r.n_outdict));
            bias_rows.emplace_back("n_skipped", static_cast<double>(r.n_skipped));
        }
    }
    if (!a.out_bias.empty())
        atomic_write_file(a.out_bias,
                          [&](std::ostream& os) { write_metrics_csv(os, bias_rows); });

    if (!a.out_mentions.empty()) {
        int min_len = static_cast<int>(models[0].config.max_len);
        for (const auto& m : models) min_len = std::min(min_len, static_cast<int>(m.config.max_len));
        Matcher matcher(dict, a.case_sensitive);
        auto mentions = classify_gold_mentions(corpus, matcher, min_len, a.surface_only, nullptr);
        std::vector<MentionRow> rows;
        for (const auto& gm : mentions) {
            MentionRow row;
            row.mention = gm;
            double mean = 0;
            std::vector<double> ps;
            for (const auto& model : models) {
                ps.push_back(p_positive_of(model, corpus, gm.inst));
                mean += ps.back();
            }
            row.p_positive = mean / static_cast<double>(models.size());
            if (models.size() >= 2) row.stddev = population_std(ps);
            rows.push_back(std::move(row));
        }
        atomic_write_file(a.out_mentions, [&](std::ostream& os) {
            write_mentions_csv(os, rows, models.size() >= 2);
        });
    }

    if (!a.out_variance.empty()) {
        if (models.size() < 2)
            throw ConfigError("--out-variance requires at least two models");
        VarianceReport vr = inter_dict_variance(models, corpus);
        std::vector<std::pair<std::string, double>> rows;
        rows.emplace_back("aggregate_mean_std", vr.aggregate_mean_std);
        rows.emplace_back("n_mentions", static_cast<double>(vr.n_mentions));
        rows.emplace_back("n_skipped", static_cast<double>(vr.n_skipped));
        for (std::size_t m = 0; m < vr.per_model_mean.size(); ++m)
            rows.emplace_back("model" + std::to_string(m) + "_mean_likelihood",
                              vr.per_model_mean[m]);
        atomic_write_file(a.out_variance,
                          [&](std::ostream& os) { write_metrics_csv(os, rows); });
    }
    std::cerr << "diagnose: " << models.size() << " model(s), " << corpus.gold.size()
              << " gold mentions\n";
    return 0;
}

struct SweepArgs {
    std::string corpus, test, dict, config_path, out, log_dir, axis = "rho";
    std::vector<double> grid;
    double threshold = 0.5;
};

inline int run_sweep(const SweepArgs& a, const ConfigFlags& flags) {
    Corpus train_corpus = load_corpus(a.corpus);
    Corpus test_corpus = load_corpus(a.test);
    Dictionary dict = load_dictionary(a.dict);
    TrainConfig cfg = resolve_config(a.config_path, flags);
    SweepAxis axis;
    if (a.axis == "rho") axis = SweepAxis::kCoverage;
    else if (a.axis == "K") axis = SweepAxis::kQuantity;
    else throw ConfigError("unknown --axis '" + a.axis + "' (expected rho|K)");

    auto rows = sweep(train_corpus, test_corpus, dict, cfg, axis, a.grid, a.threshold);
    atomic_write_file(a.out, [&](std::ostream& os) { write_sweep_csv(os, a.axis, rows); });
    if (!a.log_dir.empty()) {
        std::filesystem::create_directories(a.log_dir);
        for (const auto& row : rows) {
            std::ostringstream name;
            name << a.log_dir << "/point_" << row.axis_value << ".log.csv";
            TrainConfig point_cfg = cfg;
            if (axis == SweepAxis::kCoverage) point_cfg.rho = row.axis_value;
            else {
                point_cfg.k = static_cast<int>(row.axis_value);
                if (point_cfg.k == 1) point_cfg.loss = LossMode::kNaive;
            }
            atomic_write_file(name.str(), [&](std::ostream& os) {
                write_training_log(os, point_cfg, row.log);
            });
        }
    }
    std::cerr << "sweep: " << rows.size() << " grid points written to " << a.out << "\n";
    return 0;
}

}  // namespace detail

inline int run(std::vector<std::string> args) {
    CLI::App app{"Distantly-supervised NER with de-biased training"};
    app.require_subcommand(1);

    detail::SynthgenArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synthgen", "generate a synthetic benchmark");
    synth_cmd->add_option("--out-train", synth_args.out_train, "training corpus path")->required();
    synth_cmd->add_option("--out-test", synth_args.out_test, "test corpus path");
    synth_cmd->add_option("--out-dict", synth_args.out_dict, "dictionary path")->required();
    synth_cmd->add_option("--train-sentences", synth_args.train_sentences, "");
    synth_cmd->add_option("--test-sentences", synth_args.test_sentences, "");
    synth_cmd->add_option("--coverage", synth_args.coverage, "dictionary recall c in (0,1]");
    synth_cmd->add_option("--noise", synth_args.noise, "dictionary noise q in [0,1)");
    synth_cmd->add_option("--seed", synth_args.world.seed, "");
    synth_cmd->add_option("--types", synth_args.world.n_types, "");
    synth_cmd->add_option("--names-per-type", synth_args.world.names_per_type, "");
    synth_cmd->add_option("--name-len-min", synth_args.world.name_len_min, "");
    synth_cmd->add_option("--name-len-max", synth_args.world.name_len_max, "");
    synth_cmd->add_option("--cue-words", synth_args.world.cue_words_per_type, "");
    synth_cmd->add_option("--distractors", synth_args.world.distractor_count, "");
    synth_cmd->add_option("--sent-len-min", synth_args.world.sent_len_min, "");
    synth_cmd->add_option("--sent-len-max", synth_args.world.sent_len_max, "");
    synth_cmd->add_option("--mentions-min", synth_args.world.mentions_min, "");
    synth_cmd->add_option("--mentions-max", synth_args.world.mentions_max, "");
    synth_cmd->add_option("--fillers", synth_args.world.filler_count, "");

    detail::AnnotateArgs ann_args;
    auto* ann_cmd = app.add_subcommand("annotate", "distant-annotate a corpus with a dictionary");
    ann_cmd->add_option("--corpus", ann_args.corpus, "")->required();
    ann_cmd->add_option("--dict", ann_args.dict, "")->required();
    ann_cmd->add_option("--out", ann_args.out, "")->required();
    ann_cmd->add_option("--format", ann_args.format, "spans|conll");
    ann_cmd->add_option("--L", ann_args.max_len, "max candidate length");
    ann_cmd->add_flag("--case-sensitive", ann_args.case_sensitive, "");

    detail::SampleDictsArgs sd_args;
    auto* sd_cmd = app.add_subcommand("sample-dicts", "sample K weighted sub-dictionaries");
    sd_cmd->add_option("--dict", sd_args.dict, "")->required();
    sd_cmd->add_option("--corpus", sd_args.corpus, "corpus for frequency estimation");
    sd_cmd->add_option("--K", sd_args.k, "");
    sd_cmd->add_option("--rho", sd_args.rho, "");
    sd_cmd->add_option("--seed", sd_args.seed, "");
    sd_cmd->add_option("--out-prefix", sd_args.out_prefix, "")->required();

    detail::TrainArgs train_args;
    detail::ConfigFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train a span classifier");
    train_cmd->add_option("--corpus", train_args.corpus, "")->required();
    train_cmd->add_option("--dict", train_args.dict, "")->required();
    train_cmd->add_option("--config", train_args.config_path, "key = value config file");
    train_cmd->add_option("--out", train_args.out, "model output path")->required();
    train_cmd->add_option("--log", train_args.log, "training log path (default <out>.log.csv)");
    train_cmd->add_option("--refs-prefix", train_args.refs_prefix,
                          "reference model path prefix (default <out>.ref)");
    train_cmd->add_option("--embeddings", train_args.embeddings, "pretrained word vectors");
    train_flags.attach(train_cmd);

    detail::EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score a model on a gold corpus");
    eval_cmd->add_option("--model", eval_args.model, "")->required();
    eval_cmd->add_option("--corpus", eval_args.corpus, "")->required();
    eval_cmd->add_option("--out", eval_args.out, "metrics CSV path")->required();
    eval_cmd->add_option("--pred-out", eval_args.pred_out, "predicted spans CSV path");
    eval_cmd->add_option("--threshold", eval_args.threshold, "decode threshold");
    eval_cmd->add_option("--threads", eval_args.threads, "");

    detail::DiagnoseArgs diag_args;
    auto* diag_cmd = app.add_subcommand("diagnose", "bias and robustness diagnostics");
    diag_cmd->add_option("--models", diag_args.models, "comma-separated model files")
        ->required()
        ->delimiter(',');
    diag_cmd->add_option("--corpus", diag_args.corpus, "")->required();
    diag_cmd->add_option("--dict", diag_args.dict, "")->required();
    diag_cmd->add_option("--out-bias", diag_args.out_bias, "bias report CSV");
    diag_cmd->add_option("--out-mentions", diag_args.out_mentions, "per-mention CSV");
    diag_cmd->add_option("--out-variance", diag_args.out_variance, "variance report CSV");
    diag_cmd->add_flag("--surface-only", diag_args.surface_only,
                       "dictionary membership ignores the entity type");
    diag_cmd->add_flag("--case-sensitive", diag_args.case_sensitive, "");

    detail::SweepArgs sweep_args;
    detail::ConfigFlags sweep_flags;
    auto* sweep_cmd = app.add_subcommand("sweep", "coverage or quantity sweep");
    sweep_cmd->add_option("--corpus", sweep_args.corpus, "")->required();
    sweep_cmd->add_option("--test", sweep_args.test, "")->required();
    sweep_cmd->add_option("--dict", sweep_args.dict, "")->required();
    sweep_cmd->add_option("--config", sweep_args.config_path, "");
    sweep_cmd->add_option("--axis", sweep_args.axis, "rho|K")->required();
    sweep_cmd->add_option("--grid", sweep_args.grid, "comma-separated grid values")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--out", sweep_args.out, "")->required();
    sweep_cmd->add_option("--log-dir", sweep_args.log_dir, "per-point training logs");
    sweep_cmd->add_option("--threshold", sweep_args.threshold, "");
    sweep_flags.attach(sweep_cmd);

    std::reverse(args.begin(), args.end());  // CLI11 consumes args back to front
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth_cmd->parsed()) return detail::run_synthgen(synth_args);
        if (ann_cmd->parsed()) return detail::run_annotate(ann_args);
        if (sd_cmd->parsed()) return detail::run_sample_dicts(sd_args);
        if (train_cmd->parsed()) return detail::run_train(train_args, train_flags);
        if (eval_cmd->parsed()) return detail::run_eval(eval_args);
        if (diag_cmd->parsed()) return detail::run_diagnose(diag_args);
        if (sweep_cmd->parsed()) return detail::run_sweep(sweep_args, sweep_flags);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

}  // namespace dsner::cli
