#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"

namespace lingofuse {

inline constexpr std::size_t kDefaultMaxLen = 128;

using TokenId = std::int32_t;

/// Half-open token range [begin, end) of one word.
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const TokenRange&) const = default;
};

struct TokenizedExample {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;
    std::vector<TokenId> segment_ids;
    std::vector<TokenId> position_ids;
    std::vector<TokenRange> word_alignment;
    std::vector<std::string> words;

    std::size_t size() const { return ids.size(); }
    std::size_t num_words() const { return word_alignment.size(); }
    bool operator==(const TokenizedExample&) const = default;
};

/// Splits on ASCII whitespace. UTF-8 continuation bytes are never whitespace,
/// so multi-byte scripts pass through intact.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < text.size()) {
        while (i < text.size() && is_ws(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_ws(text[j])) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Splits a word into UTF-8 code points (malformed bytes become single units).
inline std::vector<std::string> utf8_chars(std::string_view word) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < word.size()) {
        const auto c = static_cast<unsigned char>(word[i]);
        std::size_t len = 1;
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        if (i + len > word.size()) len = 1;
        out.emplace_back(word.substr(i, len));
        i += len;
    }
    return out;
}

/// Whole-word vocabulary with a character fallback: an unknown word is spelled
/// as `##<char>` tokens, and unknown characters map to [UNK].
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kCls = 1;
    static constexpr TokenId kSep = 2;
    static constexpr TokenId kMask = 3;
    static constexpr TokenId kUnk = 4;

    Vocabulary() {
        for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add(s);
    }

    template <class Texts>
    static Vocabulary build(const Texts& texts, std::size_t min_word_freq = 1) {
        std::map<std::string, std::size_t> freq;
        std::set<std::string> chars;
        for (const auto& t : texts) {
            for (auto& w : split_words(t)) {
                for (auto& c : utf8_chars(w)) chars.insert(c);
                ++freq[std::move(w)];
            }
        }
        Vocabulary v;
        for (const auto& [w, n] : freq)
            if (n >= min_word_freq) v.add(w);
        for (const auto& c : chars) v.add("##" + c);
        return v;
    }

    TokenId add(const std::string& token) {
        auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    std::optional<TokenId> find(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<TokenId> word_tokens(std::string_view word) const {
        if (auto id = find(word)) return {*id};
        std::vector<TokenId> out;
        for (const auto& c : utf8_chars(word)) out.push_back(find("##" + c).value_or(kUnk));
        return out;
    }

    nlohmann::json to_json() const { return tokens_; }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        const auto tokens = j.get<std::vector<std::string>>();
        if (tokens.size() < 5 || tokens[0] != "[PAD]" || tokens[1] != "[CLS]" || tokens[2] != "[SEP]" ||
            tokens[3] != "[MASK]" || tokens[4] != "[UNK]")
            throw LoadError("vocabulary does not start with the special tokens");
        for (std::size_t i = 5; i < tokens.size(); ++i) v.add(tokens[i]);
        if (v.size() != tokens.size()) throw LoadError("vocabulary contains duplicate tokens");
        return v;
    }

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Produces `[CLS] w_0 ... w_k [SEP]`, truncated so the result holds at most
/// `max_len` tokens. A word cut by truncation keeps the tokens that fit.
inline TokenizedExample tokenize(const Vocabulary& vocab, std::string_view text, std::size_t max_len = kDefaultMaxLen) {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    TokenizedExample tok;
    tok.ids.push_back(Vocabulary::kCls);
    const std::size_t budget = max_len - 1;  // room for [SEP]
    for (const auto& w : split_words(text)) {
        if (tok.ids.size() >= budget) break;
        const auto pieces = vocab.word_tokens(w);
        TokenRange r{tok.ids.size(), tok.ids.size()};
        for (auto id : pieces) {
            if (tok.ids.size() >= budget) break;
            tok.ids.push_back(id);
        }
        r.end = tok.ids.size();
        tok.word_alignment.push_back(r);
        tok.words.push_back(w);
    }
    tok.ids.push_back(Vocabulary::kSep);
    const std::size_t n = tok.ids.size();
    tok.attention_mask.assign(n, 1);
    tok.segment_ids.assign(n, 0);
    tok.position_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) tok.position_ids[i] = static_cast<TokenId>(i);
    return tok;
}

/// Replaces every token of word `word_index` by [MASK]; everything else is kept.
inline TokenizedExample mask_word(const TokenizedExample& tok, std::size_t word_index) {
    if (word_index >= tok.word_alignment.size())
        throw RangeError("word index " + std::to_string(word_index) + " out of range (" +
                         std::to_string(tok.word_alignment.size()) + " words)");
    TokenizedExample out = tok;
    const auto r = tok.word_alignment[word_index];
    for (std::size_t t = r.begin; t < r.end; ++t) out.ids[t] = Vocabulary::kMask;
    return out;
}

/// Appends [PAD] tokens with attention mask 0 up to `length`.
inline TokenizedExample pad_to(const TokenizedExample& tok, std::size_t length) {
    TokenizedExample out = tok;
    for (std::size_t i = tok.size(); i < length; ++i) {
        out.ids.push_back(Vocabulary::kPad);
        out.attention_mask.push_back(0);
        out.segment_ids.push_back(0);
        out.position_ids.push_back(static_cast<TokenId>(i));
    }
    return out;
}

}  // namespace lingofuse
