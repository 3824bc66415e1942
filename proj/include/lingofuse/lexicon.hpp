#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"

namespace lingofuse {

/// Occlusion score of one word: drop in the recognizer's probability for the
/// correct language when the word is masked.
struct SaliencyRecord {
    std::size_t word_index = 0;
    std::string word;
    double score = 0.0;
    bool operator==(const SaliencyRecord&) const = default;
};

/// Records sorted by score descending, ties by ascending word index.
struct SentenceSaliency {
    std::string language;
    std::string text;
    double base_probability = 0.0;
    std::vector<SaliencyRecord> records;
    bool operator==(const SentenceSaliency&) const = default;
};

inline void sort_records(std::vector<SaliencyRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const SaliencyRecord& a, const SaliencyRecord& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.word_index < b.word_index;
    });
}

struct LexiconEntry {
    std::string word;
    double score = 0.0;
    bool operator==(const LexiconEntry&) const = default;
};

/// Language-specific words: the strictly positive records of each sentence,
/// plus a per-language aggregate keeping the max score per surface form.
class LanguageLexicon {
public:
    struct SentenceEntry {
        std::string language;
        std::string text;
        std::vector<SaliencyRecord> retained;
    };

    void add_sentence(SentenceEntry entry) {
        for (const auto& r : entry.retained) {
            auto& best = best_[entry.language][r.word];
            best = std::max(best, r.score);
        }
        sentence_index_[key(entry.language, entry.text)] = sentences_.size();
        sentences_.push_back(std::move(entry));
        aggregate_dirty_ = true;
    }

    void add_word(const std::string& language, const std::string& word, double score) {
        if (!(score > 0.0)) return;
        auto [it, inserted] = best_[language].emplace(word, score);
        if (!inserted) it->second = std::max(it->second, score);
        aggregate_dirty_ = true;
    }

    const std::vector<SentenceEntry>& sentences() const { return sentences_; }

    /// Aggregate entries for `language`, sorted by score descending then word.
    const std::vector<LexiconEntry>& words(const std::string& language) const {
        rebuild();
        static const std::vector<LexiconEntry> empty;
        auto it = sorted_.find(language);
        return it == sorted_.end() ? empty : it->second;
    }

    std::vector<std::string> languages() const {
        std::vector<std::string> out;
        for (const auto& [lang, _] : best_) out.push_back(lang);
        return out;
    }

    bool contains(const std::string& language, const std::string& word) const {
        auto it = best_.find(language);
        return it != best_.end() && it->second.count(word) > 0;
    }

    std::unordered_set<std::string> word_set(const std::string& language) const {
        std::unordered_set<std::string> out;
        auto it = best_.find(language);
        if (it != best_.end())
            for (const auto& [w, _] : it->second) out.insert(w);
        return out;
    }

    /// Retained words of one specific sentence (literal per-sentence reading).
    const SentenceEntry* sentence(const std::string& language, const std::string& text) const {
        auto it = sentence_index_.find(key(language, text));
        return it == sentence_index_.end() ? nullptr : &sentences_[it->second];
    }

    bool empty() const { return best_.empty(); }

    /// TSV `language<TAB>word<TAB>score`, languages in name order, scores descending.
    void save_tsv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw LoadError("cannot write lexicon: " + path.string());
        for (const auto& lang : languages())
            for (const auto& e : words(lang)) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", e.score);
                out << lang << '\t' << e.word << '\t' << buf << '\n';
            }
    }

    static LanguageLexicon load_tsv(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open lexicon: " + path.string());
        LanguageLexicon lex;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> cols;
            std::stringstream ss(line);
            std::string col;
            while (std::getline(ss, col, '\t')) cols.push_back(col);
            if (cols.size() != 3)
                throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected language<TAB>word<TAB>score");
            double score = 0.0;
            try {
                score = std::stod(cols[2]);
            } catch (const std::exception&) {
                throw LoadError(path.string() + ":" + std::to_string(line_no) + ": bad score '" + cols[2] + "'");
            }
            lex.add_word(cols[0], cols[1], score);
        }
        return lex;
    }

private:
    static std::string key(const std::string& language, const std::string& text) { return language + '\x1f' + text; }

    void rebuild() const {
        if (!aggregate_dirty_) return;
        sorted_.clear();
        for (const auto& [lang, words] : best_) {
            auto& dst = sorted_[lang];
            for (const auto& [w, s] : words) dst.push_back({w, s});
            std::sort(dst.begin(), dst.end(), [](const LexiconEntry& a, const LexiconEntry& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.word < b.word;
            });
        }
        aggregate_dirty_ = false;
    }

    std::vector<SentenceEntry> sentences_;
    std::unordered_map<std::string, std::size_t> sentence_index_;
    std::map<std::string, std::map<std::string, double>> best_;
    mutable std::map<std::string, std::vector<LexiconEntry>> sorted_;
    mutable bool aggregate_dirty_ = true;
};

/// Keeps only records with score strictly greater than zero.
inline LanguageLexicon extract_lexicon(const std::vector<SentenceSaliency>& saliencies) {
    LanguageLexicon lex;
    for (const auto& s : saliencies) {
        LanguageLexicon::SentenceEntry e{s.language, s.text, {}};
        for (const auto& r : s.records)
            if (r.score > 0.0) e.retained.push_back(r);
        sort_records(e.retained);
        lex.add_sentence(std::move(e));
    }
    return lex;
}

inline nlohmann::json to_json(const SentenceSaliency& s) {
    nlohmann::json j{{"language", s.language}, {"text", s.text}, {"base_probability", s.base_probability}};
    j["records"] = nlohmann::json::array();
    for (const auto& r : s.records) j["records"].push_back({{"index", r.word_index}, {"word", r.word}, {"score", r.score}});
    return j;
}

inline SentenceSaliency saliency_from_json(const nlohmann::json& j) {
    SentenceSaliency s;
    s.language = j.at("language").get<std::string>();
    s.text = j.at("text").get<std::string>();
    s.base_probability = j.value("base_probability", 0.0);
    for (const auto& r : j.at("records"))
        s.records.push_back({r.at("index").get<std::size_t>(), r.at("word").get<std::string>(), r.at("score").get<double>()});
    return s;
}

/// JSON lines, one sentence per line.
inline void save_saliency_jsonl(const std::vector<SentenceSaliency>& all, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write saliency dump: " + path.string());
    for (const auto& s : all) out << to_json(s).dump() << '\n';
}

inline std::vector<SentenceSaliency> load_saliency_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open saliency dump: " + path.string());
    std::vector<SentenceSaliency> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(saliency_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace lingofuse
