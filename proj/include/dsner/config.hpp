#pragma once

// Training configuration: "key = value" file, flag overrides on top,
// validation, and a canonical echo for log headers.

#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/errors.hpp"

namespace dsner {

enum class LossMode { kNaive, kBA, kBACir };

inline const char* loss_mode_name(LossMode m) {
    switch (m) {
        case LossMode::kNaive: return "naive";
        case LossMode::kBA: return "ba";
        case LossMode::kBACir: return "ba+cir";
    }
    return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
    if (s == "naive") return LossMode::kNaive;
    if (s == "ba") return LossMode::kBA;
    if (s == "ba+cir") return LossMode::kBACir;
    throw ConfigError("unknown loss mode '" + s + "' (expected naive|ba|ba+cir)");
}

struct TrainConfig {
    int epochs = 6;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 42;
    double lambda = 0.1;
    int k = 4;          // sub-dictionary count K
    double rho = 0.7;   // sub-dictionary coverage
    int ref_epochs = 2; // E_ref
    int neg_per_pos = 5;
    int max_len = 5;    // candidate length cap L
    int width = 3;      // context width w
    int d_e = 50;
    int d_h = 128;
    int d_r = 64;
    std::uint32_t vocab_size = 1u << 18;
    LossMode loss = LossMode::kBACir;
    bool ba_mean_of_logs = false;
    bool ba_exclude_conflicts = false;
    bool case_sensitive = false;
    bool use_file_weights = false;
    int threads = 1;

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
        if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1 must be in [0,1)");
        if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2 must be in [0,1)");
        if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
        if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
        if (k < 1) throw ConfigError("K must be >= 1");
        if (!(rho > 0 && rho <= 1)) throw ConfigError("rho must be in (0, 1]");
        if (ref_epochs < 0) throw ConfigError("E_ref must be >= 0");
        if (neg_per_pos < 1) throw ConfigError("neg_per_pos must be >= 1");
        if (max_len < 1) throw ConfigError("L must be >= 1");
        if (width < 0) throw ConfigError("w must be >= 0");
        if (d_e < 1 || d_h < 1 || d_r < 1) throw ConfigError("model dims must be >= 1");
        if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
        if (threads < 1) throw ConfigError("threads must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

template <typename T>
T parse_number(const std::string& value, const std::string& where);

template <>
inline double parse_number<double>(const std::string& value, const std::string& where) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse number '" + value + "'");
    }
}

template <>
inline int parse_number<int>(const std::string& value, const std::string& where) {
    try {
        std::size_t used = 0;
        long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse integer '" + value + "'");
    }
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& value,
                                                 const std::string& where) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse integer '" + value + "'");
    }
}

inline bool parse_bool(const std::string& value, const std::string& where) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(where + ": cannot parse boolean '" + value + "'");
}

inline void apply_config_key(TrainConfig& c, const std::string& key, const std::string& value,
                             const std::string& where) {
    if (key == "epochs") c.epochs = parse_number<int>(value, where);
    else if (key == "batch_size") c.batch_size = parse_number<int>(value, where);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(value, where);
    else if (key == "adam_beta1") c.adam_beta1 = parse_number<double>(value, where);
    else if (key == "adam_beta2") c.adam_beta2 = parse_number<double>(value, where);
    else if (key == "adam_eps") c.adam_eps = parse_number<double>(value, where);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, where);
    else if (key == "lambda") c.lambda = parse_number<double>(value, where);
    else if (key == "K") c.k = parse_number<int>(value, where);
    else if (key == "rho") c.rho = parse_number<double>(value, where);
    else if (key == "E_ref") c.ref_epochs = parse_number<int>(value, where);
    else if (key == "neg_per_pos") c.neg_per_pos = parse_number<int>(value, where);
    else if (key == "L") c.max_len = parse_number<int>(value, where);
    else if (key == "w") c.width = parse_number<int>(value, where);
    else if (key == "d_e") c.d_e = parse_number<int>(value, where);
    else if (key == "d_h") c.d_h = parse_number<int>(value, where);
    else if (key == "d_r") c.d_r = parse_number<int>(value, where);
    else if (key == "vocab_size")
        c.vocab_size = static_cast<std::uint32_t>(parse_number<std::uint64_t>(value, where));
    else if (key == "loss") c.loss = parse_loss_mode(value);
    else if (key == "ba_mean_of_logs") c.ba_mean_of_logs = parse_bool(value, where);
    else if (key == "ba_exclude_conflicts") c.ba_exclude_conflicts = parse_bool(value, where);
    else if (key == "case_sensitive") c.case_sensitive = parse_bool(value, where);
    else if (key == "use_file_weights") c.use_file_weights = parse_bool(value, where);
    else if (key == "threads") c.threads = parse_number<int>(value, where);
    else throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace detail

// File first, then overrides (flag values win). Defaults fill the rest.
inline TrainConfig parse_config(std::istream& is,
                                const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    TrainConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        detail::apply_config_key(c, key, value, "config line " + std::to_string(line_no));
    }
    for (const auto& [key, value] : overrides)
        detail::apply_config_key(c, key, value, "flag --" + key);
    c.validate();
    return c;
}

// Canonical key order for reproducible log headers.
inline std::vector<std::pair<std::string, std::string>> echo_config(const TrainConfig& c) {
    auto fmt_d = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("E_ref", std::to_string(c.ref_epochs));
    out.emplace_back("K", std::to_string(c.k));
    out.emplace_back("L", std::to_string(c.max_len));
    out.emplace_back("adam_beta1", fmt_d(c.adam_beta1));
    out.emplace_back("adam_beta2", fmt_d(c.adam_beta2));
    out.emplace_back("adam_eps", fmt_d(c.adam_eps));
    out.emplace_back("ba_exclude_conflicts", c.ba_exclude_conflicts ? "true" : "false");
    out.emplace_back("ba_mean_of_logs", c.ba_mean_of_logs ? "true" : "false");
    out.emplace_back("batch_size", std::to_string(c.batch_size));
    out.emplace_back("case_sensitive", c.case_sensitive ? "true" : "false");
    out.emplace_back("d_e", std::to_string(c.d_e));
    out.emplace_back("d_h", std::to_string(c.d_h));
    out.emplace_back("d_r", std::to_string(c.d_r));
    out.emplace_back("epochs", std::to_string(c.epochs));
    out.emplace_back("lambda", fmt_d(c.lambda));
    out.emplace_back("learning_rate", fmt_d(c.learning_rate));
    out.emplace_back("loss", loss_mode_name(c.loss));
    out.emplace_back("neg_per_pos", std::to_string(c.neg_per_pos));
    out.emplace_back("rho", fmt_d(c.rho));
    out.emplace_back("seed", std::to_string(c.seed));
    out.emplace_back("threads", std::to_string(c.threads));
    out.emplace_back("use_file_weights", c.use_file_weights ? "true" : "false");
    out.emplace_back("vocab_size", std::to_string(c.vocab_size));
    out.emplace_back("w", std::to_string(c.width));
    return out;
}

}  // namespace dsner
