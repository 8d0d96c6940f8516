#pragma once

// Span classifier: hashed token embeddings -> two tanh layers -> softmax over
// T entity types plus NONE (index T). The penultimate activation is the
// representation vector used by the invariance regularizer. All math is
// 64-bit; forward is deterministic and backward is exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/errors.hpp"
#include "dsner/io.hpp"
#include "dsner/rng.hpp"

namespace dsner {

struct FeatureConfig {
    std::uint32_t d_e = 50;          // embedding dim
    std::uint32_t w = 3;             // context width
    std::uint32_t d_h = 128;         // hidden dim
    std::uint32_t d_r = 64;          // representation dim
    std::uint32_t max_len = 5;       // max candidate length L
    std::uint32_t n_types = 1;       // entity types T (NONE excluded)
    std::uint32_t vocab_size = 1u << 18;

    std::uint32_t feature_dim() const { return 3 * d_e + 3; }
    std::uint32_t n_classes() const { return n_types + 1; }
    std::uint32_t none_index() const { return n_types; }

    void validate() const {
        if (d_e < 1 || d_h < 1 || d_r < 1 || max_len < 1 || n_types < 1 || vocab_size < 1)
            throw ValueError("model dimensions must be >= 1");
    }

    friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Row-major dense matrix; a vector is a 1 x n matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ModelParams {
    FeatureConfig config;
    Matrix embeddings;  // vocab_size x d_e
    Matrix w1, b1;      // d_h x feature_dim, 1 x d_h
    Matrix w2, b2;      // d_r x d_h,        1 x d_r
    Matrix w3, b3;      // (T+1) x d_r,      1 x (T+1)

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline std::uint32_t token_row(const std::string& norm, std::uint32_t vocab_size) {
    return static_cast<std::uint32_t>(fnv1a64(norm) % vocab_size);
}

// Hashed embedding rows plus surface-shape scalars; resolved against an
// embedding table inside forward().
struct Features {
    std::vector<std::uint32_t> cand_rows;
    std::vector<std::uint32_t> left_rows;
    std::vector<std::uint32_t> right_rows;
    double scalars[3] = {0, 0, 0};  // length/L, all-caps, initial-caps
};

inline Features featurize(const FeatureConfig& config, const Sentence& sent,
                          const Instance& inst) {
    check_span(sent, inst.start, inst.end, "instance");
    Features f;
    for (std::int32_t i = inst.start; i < inst.end; ++i)
        f.cand_rows.push_back(token_row(sent.tokens[i].norm, config.vocab_size));
    auto [left, right] = context_window(sent, inst, static_cast<int>(config.w));
    for (const Token& t : left) f.left_rows.push_back(token_row(t.norm, config.vocab_size));
    for (const Token& t : right) f.right_rows.push_back(token_row(t.norm, config.vocab_size));

    f.scalars[0] = static_cast<double>(inst.end - inst.start) / static_cast<double>(config.max_len);
    bool any_alpha = false, all_upper = true, initial_caps = true;
    for (std::int32_t i = inst.start; i < inst.end; ++i) {
        const std::string& text = sent.tokens[i].text;
        if (!(text[0] >= 'A' && text[0] <= 'Z')) initial_caps = false;
        for (char c : text) {
            if (c >= 'a' && c <= 'z') {
                any_alpha = true;
                all_upper = false;
            } else if (c >= 'A' && c <= 'Z') {
                any_alpha = true;
            }
        }
    }
    f.scalars[1] = (any_alpha && all_upper) ? 1.0 : 0.0;
    f.scalars[2] = initial_caps ? 1.0 : 0.0;
    return f;
}

// Dense feature vector: [mean cand emb; mean left emb; mean right emb; scalars].
// Empty context blocks stay zero.
inline std::vector<double> features_vector(const ModelParams& params, const Features& f) {
    const std::uint32_t d_e = params.config.d_e;
    std::vector<double> out(params.config.feature_dim(), 0.0);
    auto mean_into = [&](const std::vector<std::uint32_t>& rows, std::size_t offset) {
        if (rows.empty()) return;
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (std::uint32_t r : rows) {
            const double* e = params.embeddings.row(r);
            for (std::uint32_t j = 0; j < d_e; ++j) out[offset + j] += e[j];
        }
        for (std::uint32_t j = 0; j < d_e; ++j) out[offset + j] *= inv;
    };
    mean_into(f.cand_rows, 0);
    mean_into(f.left_rows, d_e);
    mean_into(f.right_rows, 2 * d_e);
    for (int i = 0; i < 3; ++i) out[3 * d_e + i] = f.scalars[i];
    return out;
}

struct Forward {
    std::vector<double> features;   // dense input f
    std::vector<double> hidden;     // h = tanh(W1 f + b1)
    std::vector<double> repr;       // R = tanh(W2 h + b2)
    std::vector<double> logits;
    std::vector<double> log_probs;  // log softmax(logits)
    std::vector<double> probs;

    double p_positive(const FeatureConfig& config) const {
        return 1.0 - probs[config.none_index()];
    }
};

namespace detail {

inline void affine(const Matrix& w, const Matrix& b, const std::vector<double>& x,
                   std::vector<double>& out) {
    out.resize(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        double acc = b.a[r];
        for (std::size_t c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
}

}  // namespace detail

inline Forward forward(const ModelParams& params, const Features& features) {
    Forward fw;
    fw.features = features_vector(params, features);
    for (double v : fw.features)
        if (!std::isfinite(v)) throw NumericError("non-finite feature input");

    detail::affine(params.w1, params.b1, fw.features, fw.hidden);
    for (double& v : fw.hidden) v = std::tanh(v);
    detail::affine(params.w2, params.b2, fw.hidden, fw.repr);
    for (double& v : fw.repr) v = std::tanh(v);
    detail::affine(params.w3, params.b3, fw.repr, fw.logits);

    // softmax with max-subtraction
    double mx = fw.logits[0];
    for (double v : fw.logits) mx = std::max(mx, v);
    double z = 0;
    fw.log_probs.resize(fw.logits.size());
    for (std::size_t i = 0; i < fw.logits.size(); ++i) z += std::exp(fw.logits[i] - mx);
    const double log_z = std::log(z);
    fw.probs.resize(fw.logits.size());
    for (std::size_t i = 0; i < fw.logits.size(); ++i) {
        fw.log_probs[i] = fw.logits[i] - mx - log_z;
        fw.probs[i] = std::exp(fw.log_probs[i]);
    }
    return fw;
}

inline double p_positive(const FeatureConfig& config, const std::vector<double>& probs) {
    return 1.0 - probs[config.none_index()];
}

// Gradient accumulator. Embedding gradients are sparse (touched rows only,
// ordered for deterministic traversal).
struct Gradients {
    std::map<std::uint32_t, std::vector<double>> embeddings;
    Matrix w1, b1, w2, b2, w3, b3;

    explicit Gradients(const FeatureConfig& c)
        : w1(c.d_h, c.feature_dim()),
          b1(1, c.d_h),
          w2(c.d_r, c.d_h),
          b2(1, c.d_r),
          w3(c.n_classes(), c.d_r),
          b3(1, c.n_classes()) {}

    std::vector<double>& embedding_row(std::uint32_t r, std::uint32_t d_e) {
        auto it = embeddings.find(r);
        if (it == embeddings.end())
            it = embeddings.emplace(r, std::vector<double>(d_e, 0.0)).first;
        return it->second;
    }
};

// Accumulates d(loss)/d(params) for loss = sum_c dlogp[c]*log p(c) + drepr.R,
// where dlogp are upstream coefficients on log-probabilities and drepr is the
// upstream gradient on the representation. Uses the softmax-NLL identity:
// d/d logit_j = dlogp[j] - p_j * sum_c dlogp[c].
inline void backward(const ModelParams& params, const Features& features, const Forward& fw,
                     const std::vector<double>& dlogp, const std::vector<double>& drepr,
                     Gradients& grads) {
    const FeatureConfig& c = params.config;
    const std::size_t n_cls = c.n_classes();

    double coeff_sum = 0;
    for (std::size_t j = 0; j < n_cls; ++j) coeff_sum += dlogp[j];
    std::vector<double> dlogits(n_cls);
    for (std::size_t j = 0; j < n_cls; ++j) dlogits[j] = dlogp[j] - fw.probs[j] * coeff_sum;

    // logits = W3 R + b3
    std::vector<double> dR(c.d_r, 0.0);
    for (std::size_t j = 0; j < n_cls; ++j) {
        const double g = dlogits[j];
        grads.b3.a[j] += g;
        double* w3g = grads.w3.row(j);
        const double* w3r = params.w3.row(j);
        for (std::size_t r = 0; r < c.d_r; ++r) {
            w3g[r] += g * fw.repr[r];
            dR[r] += g * w3r[r];
        }
    }
    if (!drepr.empty())
        for (std::size_t r = 0; r < c.d_r; ++r) dR[r] += drepr[r];

    // R = tanh(W2 h + b2)
    std::vector<double> dpre2(c.d_r);
    for (std::size_t r = 0; r < c.d_r; ++r) dpre2[r] = dR[r] * (1.0 - fw.repr[r] * fw.repr[r]);
    std::vector<double> dh(c.d_h, 0.0);
    for (std::size_t r = 0; r < c.d_r; ++r) {
        const double g = dpre2[r];
        grads.b2.a[r] += g;
        double* w2g = grads.w2.row(r);
        const double* w2r = params.w2.row(r);
        for (std::size_t h = 0; h < c.d_h; ++h) {
            w2g[h] += g * fw.hidden[h];
            dh[h] += g * w2r[h];
        }
    }

    // h = tanh(W1 f + b1)
    std::vector<double> dpre1(c.d_h);
    for (std::size_t h = 0; h < c.d_h; ++h) dpre1[h] = dh[h] * (1.0 - fw.hidden[h] * fw.hidden[h]);
    const std::size_t fdim = c.feature_dim();
    std::vector<double> df(fdim, 0.0);
    for (std::size_t h = 0; h < c.d_h; ++h) {
        const double g = dpre1[h];
        grads.b1.a[h] += g;
        double* w1g = grads.w1.row(h);
        const double* w1r = params.w1.row(h);
        for (std::size_t f = 0; f < fdim; ++f) {
            w1g[f] += g * fw.features[f];
            df[f] += g * w1r[f];
        }
    }

    // feature blocks are means of embedding rows
    auto scatter = [&](const std::vector<std::uint32_t>& rows, std::size_t offset) {
        if (rows.empty()) return;
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (std::uint32_t r : rows) {
            auto& erow = grads.embedding_row(r, c.d_e);
            for (std::uint32_t j = 0; j < c.d_e; ++j) erow[j] += inv * df[offset + j];
        }
    };
    scatter(features.cand_rows, 0);
    scatter(features.left_rows, c.d_e);
    scatter(features.right_rows, 2 * c.d_e);
}

inline ModelParams init_model(const FeatureConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(derive_seed(seed, "init"));

    p.embeddings = Matrix(config.vocab_size, config.d_e);
    for (double& v : p.embeddings.a) v = rng.uniform(-0.1, 0.1);

    auto init_affine = [&](Matrix& w, Matrix& b, std::size_t out_dim, std::size_t in_dim) {
        w = Matrix(out_dim, in_dim);
        b = Matrix(1, out_dim);
        const double s = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
        for (double& v : w.a) v = rng.uniform(-s, s);
    };
    init_affine(p.w1, p.b1, config.d_h, config.feature_dim());
    init_affine(p.w2, p.b2, config.d_r, config.d_h);
    init_affine(p.w3, p.b3, config.n_classes(), config.d_r);
    return p;
}

// Model file: magic "DSNR", u16 version, 7 config u32s, then each tensor as
// u32 ndims + dims followed by row-major little-endian f64 data.
inline constexpr char kModelMagic[4] = {'D', 'S', 'N', 'R'};
inline constexpr std::uint16_t kModelVersion = 1;

namespace detail {

inline void write_tensor(std::ostream& os, const Matrix& m) {
    write_u32(os, 2);
    write_u32(os, static_cast<std::uint32_t>(m.rows));
    write_u32(os, static_cast<std::uint32_t>(m.cols));
    for (double v : m.a) write_f64(os, v);
}

inline Matrix read_tensor(std::istream& is, std::size_t rows, std::size_t cols) {
    if (read_u32(is) != 2) throw ParseError("model file: bad tensor rank");
    std::size_t r = read_u32(is), c = read_u32(is);
    if (r != rows || c != cols) throw ParseError("model file: tensor shape mismatch");
    Matrix m(r, c);
    for (double& v : m.a) v = read_f64(is);
    return m;
}

}  // namespace detail

inline void save_model(const ModelParams& params, std::ostream& os) {
    os.write(kModelMagic, 4);
    write_u16(os, kModelVersion);
    const FeatureConfig& c = params.config;
    for (std::uint32_t v : {c.d_e, c.w, c.d_h, c.d_r, c.max_len, c.n_types, c.vocab_size})
        write_u32(os, v);
    detail::write_tensor(os, params.embeddings);
    detail::write_tensor(os, params.w1);
    detail::write_tensor(os, params.b1);
    detail::write_tensor(os, params.w2);
    detail::write_tensor(os, params.b2);
    detail::write_tensor(os, params.w3);
    detail::write_tensor(os, params.b3);
}

inline ModelParams load_model(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
        throw ParseError("model file: bad magic");
    const std::uint16_t version = read_u16(is);
    if (version != kModelVersion)
        throw ParseError("model file: unsupported version " + std::to_string(version));
    FeatureConfig c;
    c.d_e = read_u32(is);
    c.w = read_u32(is);
    c.d_h = read_u32(is);
    c.d_r = read_u32(is);
    c.max_len = read_u32(is);
    c.n_types = read_u32(is);
    c.vocab_size = read_u32(is);
    c.validate();

    ModelParams p;
    p.config = c;
    p.embeddings = detail::read_tensor(is, c.vocab_size, c.d_e);
    p.w1 = detail::read_tensor(is, c.d_h, c.feature_dim());
    p.b1 = detail::read_tensor(is, 1, c.d_h);
    p.w2 = detail::read_tensor(is, c.d_r, c.d_h);
    p.b2 = detail::read_tensor(is, 1, c.d_r);
    p.w3 = detail::read_tensor(is, c.n_classes(), c.d_r);
    p.b3 = detail::read_tensor(is, 1, c.n_classes());
    for (const Matrix* m : {&p.embeddings, &p.w1, &p.b1, &p.w2, &p.b2, &p.w3, &p.b3})
        for (double v : m->a)
            if (!std::isfinite(v)) throw ParseError("model file: non-finite parameter");
    return p;
}

// Text vectors "word v1 ... v_de"; each word overwrites its hashed row.
// Returns the number of vectors loaded.
inline std::size_t load_word_vectors(std::istream& is, ModelParams& params) {
    const std::uint32_t d_e = params.config.d_e;
    std::string line;
    std::size_t loaded = 0, line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto cols = detail::split_ws(line);
        if (cols.empty()) continue;
        if (cols.size() != 1 + d_e)
            throw ParseError("vector line " + std::to_string(line_no) + ": expected " +
                             std::to_string(d_e) + " values");
        double* row = params.embeddings.row(token_row(casefold(cols[0]), params.config.vocab_size));
        for (std::uint32_t j = 0; j < d_e; ++j) {
            try {
                row[j] = std::stod(cols[1 + j]);
            } catch (const std::exception&) {
                throw ParseError("vector line " + std::to_string(line_no) + ": bad value");
            }
        }
        ++loaded;
    }
    return loaded;
}

}  // namespace dsner
