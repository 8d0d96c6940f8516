#pragma once

// Typed entity dictionaries, token-trie matching against corpora, and
// weighted sub-dictionary sampling.
//
// Matching keeps every candidate that equals an entry surface; overlapping
// positives are all kept, so removing entries can only shrink the positive
// set (sub-dictionary annotations stay monotone under the base dictionary).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsner/corpus.hpp"
#include "dsner/errors.hpp"
#include "dsner/rng.hpp"

namespace dsner {

struct DictEntry {
    std::vector<std::string> surface;  // normalized tokens, non-empty
    std::string etype;
    double weight = 1.0;

    friend bool operator==(const DictEntry& a, const DictEntry& b) {
        return a.surface == b.surface && a.etype == b.etype;
    }
};

inline bool entry_key_less(const DictEntry& a, const DictEntry& b) {
    if (a.surface != b.surface) return a.surface < b.surface;
    return a.etype < b.etype;
}

// Entries kept sorted by (surface, etype); no duplicate keys.
class Dictionary {
public:
    Dictionary() = default;
    explicit Dictionary(std::string name) : name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    void set_name(std::string n) { name_ = std::move(n); }

    const std::vector<DictEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    void add(DictEntry entry) {
        if (entry.surface.empty()) throw ValueError("dictionary entry with empty surface");
        for (const auto& tok : entry.surface)
            if (tok.empty()) throw ValueError("dictionary entry with empty surface token");
        if (entry.weight < 0) throw ValueError("dictionary entry with negative weight");
        auto it = std::lower_bound(entries_.begin(), entries_.end(), entry, entry_key_less);
        if (it != entries_.end() && *it == entry) {
            it->weight = entry.weight;  // duplicate key: keep one entry
            return;
        }
        entries_.insert(it, std::move(entry));
    }

    bool contains(const std::vector<std::string>& surface, const std::string& etype) const {
        DictEntry probe{surface, etype, 0.0};
        auto it = std::lower_bound(entries_.begin(), entries_.end(), probe, entry_key_less);
        return it != entries_.end() && *it == probe;
    }

    double total_weight() const {
        double t = 0;
        for (const auto& e : entries_) t += e.weight;
        return t;
    }

    // Sorted distinct entity types.
    std::vector<std::string> types() const {
        std::vector<std::string> out;
        for (const auto& e : entries_) out.push_back(e.etype);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    std::string name_;
    std::vector<DictEntry> entries_;
};

// Token-level trie. Immutable after build; queries are O(sequence length).
class Matcher {
public:
    explicit Matcher(const Dictionary& dict, bool case_sensitive = false)
        : case_sensitive_(case_sensitive) {
        nodes_.emplace_back();
        for (const auto& e : dict.entries()) {
            std::size_t node = 0;
            for (const auto& tok : e.surface) {
                std::string key = case_sensitive ? tok : casefold(tok);
                auto [it, inserted] = nodes_[node].children.try_emplace(key, nodes_.size());
                if (inserted) nodes_.emplace_back();
                node = it->second;
            }
            auto& types = nodes_[node].etypes;
            if (std::find(types.begin(), types.end(), e.etype) == types.end())
                types.push_back(e.etype);
            max_len_ = std::max(max_len_, e.surface.size());
        }
        for (auto& n : nodes_) std::sort(n.etypes.begin(), n.etypes.end());
    }

    // Entity types of the exact token sequence [begin, end), or nullptr.
    const std::vector<std::string>* lookup(const Sentence& sent, std::int32_t begin,
                                           std::int32_t end) const {
        std::size_t node = 0;
        for (std::int32_t i = begin; i < end; ++i) {
            const std::string& key =
                case_sensitive_ ? sent.tokens[i].text : sent.tokens[i].norm;
            auto it = nodes_[node].children.find(key);
            if (it == nodes_[node].children.end()) return nullptr;
            node = it->second;
        }
        return nodes_[node].etypes.empty() ? nullptr : &nodes_[node].etypes;
    }

    const std::vector<std::string>* lookup(const std::vector<std::string>& surface) const {
        std::size_t node = 0;
        for (const auto& tok : surface) {
            const std::string key = case_sensitive_ ? tok : casefold(tok);
            auto it = nodes_[node].children.find(key);
            if (it == nodes_[node].children.end()) return nullptr;
            node = it->second;
        }
        return nodes_[node].etypes.empty() ? nullptr : &nodes_[node].etypes;
    }

    std::size_t max_surface_len() const { return max_len_; }
    bool case_sensitive() const { return case_sensitive_; }

private:
    struct Node {
        std::unordered_map<std::string, std::size_t> children;
        std::vector<std::string> etypes;
    };
    std::vector<Node> nodes_;
    std::size_t max_len_ = 0;
    bool case_sensitive_ = false;
};

struct Positive {
    Instance inst;
    std::string etype;

    friend bool operator==(const Positive&, const Positive&) = default;
};

struct Annotation {
    std::vector<Positive> positives;
    std::vector<Instance> negatives;
    std::string dict_name;
    // Surfaces matching entries of several types keep the lexicographically
    // smallest type above; the alternatives are recorded here.
    std::vector<Positive> extra_types;
};

struct SubDictionarySet {
    Dictionary base;
    std::vector<Dictionary> subs;
    double prob = 1.0;      // uniform 1/K
    double coverage = 1.0;  // rho
    std::uint64_t seed = 0;
};

// Positive candidates only (enumeration order: sentence, start, end).
inline std::vector<Positive> match_positives(const Corpus& corpus, const Matcher& matcher,
                                             int max_len,
                                             std::vector<Positive>* extra_types = nullptr) {
    std::vector<Positive> out;
    for (const auto& sent : corpus.sentences) {
        const std::int32_t n = static_cast<std::int32_t>(sent.tokens.size());
        const std::int32_t cap =
            std::min<std::int32_t>(max_len, static_cast<std::int32_t>(matcher.max_surface_len()));
        for (std::int32_t s = 0; s < n; ++s) {
            for (std::int32_t e = s + 1; e <= std::min<std::int32_t>(n, s + cap); ++e) {
                const auto* types = matcher.lookup(sent, s, e);
                if (!types) continue;
                Instance inst{sent.id, s, e};
                out.push_back({inst, types->front()});
                if (extra_types)
                    for (std::size_t t = 1; t < types->size(); ++t)
                        extra_types->push_back({inst, (*types)[t]});
            }
        }
    }
    return out;
}

inline Annotation annotate(const Corpus& corpus, const Matcher& matcher, int max_len,
                           std::string dict_name = {}) {
    Annotation ann;
    ann.dict_name = std::move(dict_name);
    ann.positives = match_positives(corpus, matcher, max_len, &ann.extra_types);

    std::size_t next_pos = 0;
    for (const auto& sent : corpus.sentences) {
        for (const auto& inst : generate_candidates(sent, max_len)) {
            if (next_pos < ann.positives.size() && ann.positives[next_pos].inst == inst) {
                ++next_pos;  // positives come in the same enumeration order
                continue;
            }
            ann.negatives.push_back(inst);
        }
    }
    return ann;
}

inline Annotation annotate(const Corpus& corpus, const Dictionary& dict, int max_len,
                           bool case_sensitive = false) {
    if (dict.empty()) throw ValueError("cannot annotate with an empty dictionary");
    Matcher matcher(dict, case_sensitive);
    return annotate(corpus, matcher, max_len, dict.name());
}

// Entry weight := candidate occurrences of its surface in the corpus, plus one.
inline Dictionary estimate_frequencies(const Dictionary& dict, const Corpus& corpus) {
    Matcher matcher(dict, false);
    std::map<std::vector<std::string>, std::size_t> counts;
    for (const auto& sent : corpus.sentences) {
        const std::int32_t n = static_cast<std::int32_t>(sent.tokens.size());
        const std::int32_t cap = static_cast<std::int32_t>(matcher.max_surface_len());
        for (std::int32_t s = 0; s < n; ++s) {
            for (std::int32_t e = s + 1; e <= std::min<std::int32_t>(n, s + cap); ++e) {
                if (matcher.lookup(sent, s, e)) {
                    std::vector<std::string> surface;
                    for (std::int32_t i = s; i < e; ++i) surface.push_back(sent.tokens[i].norm);
                    ++counts[surface];
                }
            }
        }
    }
    Dictionary out(dict.name());
    for (DictEntry e : dict.entries()) {
        std::vector<std::string> key;
        for (const auto& tok : e.surface) key.push_back(casefold(tok));
        auto it = counts.find(key);
        e.weight = 1.0 + (it == counts.end() ? 0.0 : static_cast<double>(it->second));
        out.add(std::move(e));
    }
    return out;
}

// K independent weighted samples without replacement of ceil(rho*|D|) entries;
// successive draws proportional to weight among the remaining entries.
inline SubDictionarySet sample_subdicts(const Dictionary& dict, int k, double rho,
                                        std::uint64_t seed) {
    if (k < 1) throw ValueError("K must be >= 1");
    if (!(rho > 0.0 && rho <= 1.0)) throw ValueError("coverage rho must be in (0, 1]");
    if (dict.empty()) throw ValueError("cannot sample from an empty dictionary");
    for (const auto& e : dict.entries())
        if (!(e.weight > 0.0)) throw ValueError("sub-dictionary sampling requires positive weights");

    const std::size_t n = dict.size();
    std::size_t m = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n)));
    m = std::max<std::size_t>(1, std::min(m, n));

    SubDictionarySet set;
    set.base = dict;
    set.prob = 1.0 / static_cast<double>(k);
    set.coverage = rho;
    set.seed = seed;

    for (int i = 0; i < k; ++i) {
        Rng rng(derive_seed(seed, "subdict", static_cast<std::uint64_t>(i)));
        std::vector<std::size_t> remaining(n);
        std::vector<double> weights(n);
        for (std::size_t j = 0; j < n; ++j) {
            remaining[j] = j;
            weights[j] = dict.entries()[j].weight;
        }
        double total = 0;
        for (double w : weights) total += w;

        Dictionary sub(dict.name() + "/sub" + std::to_string(i));
        for (std::size_t draw = 0; draw < m; ++draw) {
            double r = rng.real() * total;
            std::size_t pick = remaining.size() - 1;
            double acc = 0;
            for (std::size_t j = 0; j < remaining.size(); ++j) {
                acc += weights[remaining[j]];
                if (r < acc) {
                    pick = j;
                    break;
                }
            }
            sub.add(dict.entries()[remaining[pick]]);
            total -= weights[remaining[pick]];
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        set.subs.push_back(std::move(sub));
    }
    return set;
}

// Dictionary file: "TYPE<TAB>token token ...[<TAB>weight]", '#' comments.
inline Dictionary read_dictionary(std::istream& is, std::string name = {}) {
    Dictionary dict(std::move(name));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            std::size_t tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.size() < 2)
            throw ParseError("dictionary line " + std::to_string(line_no) +
                             ": expected 'TYPE<TAB>surface'");
        DictEntry entry;
        entry.etype = fields[0];
        if (entry.etype.empty())
            throw ParseError("dictionary line " + std::to_string(line_no) + ": empty type");
        entry.surface = detail::split_ws(fields[1]);
        if (entry.surface.empty())
            throw ParseError("dictionary line " + std::to_string(line_no) + ": empty surface");
        if (fields.size() >= 3) {
            try {
                std::size_t used = 0;
                entry.weight = std::stod(fields[2], &used);
                if (used != fields[2].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw ParseError("dictionary line " + std::to_string(line_no) +
                                 ": bad weight '" + fields[2] + "'");
            }
            if (entry.weight < 0)
                throw ParseError("dictionary line " + std::to_string(line_no) +
                                 ": negative weight");
        }
        dict.add(std::move(entry));
    }
    return dict;
}

inline void write_dictionary(const Dictionary& dict, std::ostream& os) {
    char buf[64];
    for (const auto& e : dict.entries()) {
        os << e.etype << '\t';
        for (std::size_t i = 0; i < e.surface.size(); ++i) {
            if (i) os << ' ';
            os << e.surface[i];
        }
        std::snprintf(buf, sizeof(buf), "%.17g", e.weight);
        os << '\t' << buf << '\n';
    }
}

}  // namespace dsner
