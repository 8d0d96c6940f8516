#pragma once

// Tokenized corpora with optional gold spans. Input is CoNLL column format
// (token first column, BIO/IOB tag last column, blank line between sentences)
// or whitespace-split plain text. No tokenization happens here.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dsner/errors.hpp"

namespace dsner {

inline std::string casefold(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

struct Token {
    std::string text;
    std::string norm;  // casefold(text)
};

inline Token make_token(std::string text) {
    if (text.empty()) throw ParseError("empty token");
    for (char c : text)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
            throw ParseError("token contains whitespace: '" + text + "'");
    Token t;
    t.norm = casefold(text);
    t.text = std::move(text);
    return t;
}

struct Sentence {
    std::int32_t id = 0;
    std::vector<Token> tokens;
};

struct GoldSpan {
    std::int32_t sentence_id = 0;
    std::int32_t start = 0;  // inclusive
    std::int32_t end = 0;    // exclusive
    std::string etype;

    friend bool operator==(const GoldSpan&, const GoldSpan&) = default;
};

struct Instance {
    std::int32_t sentence_id = 0;
    std::int32_t start = 0;
    std::int32_t end = 0;

    friend bool operator==(const Instance&, const Instance&) = default;
    friend auto operator<=>(const Instance&, const Instance&) = default;
};

struct Corpus {
    std::vector<Sentence> sentences;
    std::vector<GoldSpan> gold;
    std::vector<std::string> type_set;  // sorted distinct gold types
};

inline void check_span(const Sentence& sent, std::int32_t start, std::int32_t end,
                       const char* what) {
    if (start < 0 || start >= end || end > static_cast<std::int32_t>(sent.tokens.size()))
        throw ValueError(std::string(what) + " indices out of range");
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) cols.push_back(line.substr(i, j - i));
        i = j;
    }
    return cols;
}

struct TagDecoder {
    // BIO with IOB1 tolerance: a bare I-X opens a new span.
    std::vector<GoldSpan>* out = nullptr;
    std::int32_t sid = 0;
    std::int32_t open_start = -1;
    std::string open_type{};

    void close(std::int32_t pos) {
        if (open_start >= 0) {
            out->push_back({sid, open_start, pos, open_type});
            open_start = -1;
            open_type.clear();
        }
    }

    void feed(std::int32_t pos, const std::string& tag, std::size_t line_no) {
        if (tag == "O") {
            close(pos);
            return;
        }
        if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-')
            throw ParseError("line " + std::to_string(line_no) + ": malformed tag '" + tag + "'");
        std::string type = tag.substr(2);
        if (tag[0] == 'B' || open_start < 0 || type != open_type) {
            close(pos);
            open_start = pos;
            open_type = std::move(type);
        }
    }
};

}  // namespace detail

inline Corpus read_conll(std::istream& is) {
    Corpus corpus;
    Sentence sent;
    detail::TagDecoder dec{&corpus.gold};
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&] {
        dec.close(static_cast<std::int32_t>(sent.tokens.size()));
        if (!sent.tokens.empty()) {
            sent.id = static_cast<std::int32_t>(corpus.sentences.size());
            dec.sid = sent.id + 1;
            corpus.sentences.push_back(std::move(sent));
            sent = Sentence{};
        }
    };

    while (std::getline(is, line)) {
        ++line_no;
        auto cols = detail::split_ws(line);
        if (cols.empty()) {
            flush();
            continue;
        }
        if (cols.size() < 2)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'TOKEN TAG'");
        dec.feed(static_cast<std::int32_t>(sent.tokens.size()), cols.back(), line_no);
        sent.tokens.push_back(make_token(cols.front()));
    }
    flush();

    for (const auto& g : corpus.gold) corpus.type_set.push_back(g.etype);
    std::sort(corpus.type_set.begin(), corpus.type_set.end());
    corpus.type_set.erase(std::unique(corpus.type_set.begin(), corpus.type_set.end()),
                          corpus.type_set.end());
    return corpus;
}

// One whitespace-tokenized sentence per line, no gold spans.
inline Corpus read_plaintext(std::istream& is) {
    Corpus corpus;
    std::string line;
    while (std::getline(is, line)) {
        auto cols = detail::split_ws(line);
        if (cols.empty()) continue;
        Sentence sent;
        sent.id = static_cast<std::int32_t>(corpus.sentences.size());
        for (auto& c : cols) sent.tokens.push_back(make_token(std::move(c)));
        corpus.sentences.push_back(std::move(sent));
    }
    return corpus;
}

// Canonical BIO, LF line endings, blank line between sentences.
inline void write_conll(const Corpus& corpus, std::ostream& os) {
    std::vector<std::vector<const GoldSpan*>> by_sent(corpus.sentences.size());
    for (const auto& g : corpus.gold) {
        if (g.sentence_id < 0 || g.sentence_id >= static_cast<std::int32_t>(corpus.sentences.size()))
            throw ValueError("gold span references unknown sentence");
        check_span(corpus.sentences[g.sentence_id], g.start, g.end, "gold span");
        by_sent[g.sentence_id].push_back(&g);
    }
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
        const Sentence& sent = corpus.sentences[s];
        auto spans = by_sent[s];
        std::sort(spans.begin(), spans.end(),
                  [](const GoldSpan* a, const GoldSpan* b) { return a->start < b->start; });
        std::vector<std::string> tags(sent.tokens.size(), "O");
        std::int32_t prev_end = 0;
        for (const GoldSpan* g : spans) {
            if (g->start < prev_end)
                throw ValueError("overlapping gold spans in sentence " + std::to_string(sent.id));
            prev_end = g->end;
            tags[g->start] = "B-" + g->etype;
            for (std::int32_t i = g->start + 1; i < g->end; ++i) tags[i] = "I-" + g->etype;
        }
        if (s > 0) os << "\n";
        for (std::size_t i = 0; i < sent.tokens.size(); ++i)
            os << sent.tokens[i].text << " " << tags[i] << "\n";
    }
}

// All spans of length 1..min(L, n), ordered by start then end.
inline std::vector<Instance> generate_candidates(const Sentence& sent, int max_len) {
    if (max_len < 1) throw ValueError("max candidate length must be >= 1");
    const std::int32_t n = static_cast<std::int32_t>(sent.tokens.size());
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(std::min<std::int32_t>(max_len, n)));
    for (std::int32_t s = 0; s < n; ++s)
        for (std::int32_t e = s + 1; e <= std::min<std::int32_t>(n, s + max_len); ++e)
            out.push_back({sent.id, s, e});
    return out;
}

// Up to w tokens on each side, truncated at sentence boundaries.
inline std::pair<std::span<const Token>, std::span<const Token>> context_window(
    const Sentence& sent, const Instance& inst, int w) {
    check_span(sent, inst.start, inst.end, "instance");
    if (w < 0) throw ValueError("context width must be >= 0");
    const std::int32_t n = static_cast<std::int32_t>(sent.tokens.size());
    const std::int32_t lb = std::max<std::int32_t>(0, inst.start - w);
    const std::int32_t re = std::min<std::int32_t>(n, inst.end + w);
    std::span<const Token> all(sent.tokens);
    return {all.subspan(lb, inst.start - lb), all.subspan(inst.end, re - inst.end)};
}

}  // namespace dsner
