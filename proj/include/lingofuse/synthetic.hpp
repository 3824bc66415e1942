#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lingofuse/corpus.hpp"

namespace lingofuse {

/// Seeded code-mixed toy corpus. Every language owns a disjoint vocabulary
/// (label cue words plus neutral words); a shared pool stands in for the
/// English tokens that appear in all languages. The label of a sentence is
/// carried by its cue words, so the task is separable.
struct SyntheticCorpusConfig {
    std::vector<std::string> languages{"ml", "kn", "ta"};
    std::vector<std::string> labels{"positive", "negative", "mixed_feelings", "unknown_state", "not_in_language"};
    std::vector<double> label_weights{0.35, 0.25, 0.18, 0.12, 0.10};
    std::size_t train_per_language = 1000;
    std::size_t dev_per_language = 200;
    std::size_t test_per_language = 200;
    std::size_t cue_words_per_label = 4;
    std::size_t neutral_words_per_language = 24;
    std::size_t shared_words = 40;
    std::size_t min_words = 6;
    std::size_t max_words = 10;
    std::uint64_t seed = 7;
};

/// Words private to one language (cue words for every label, then neutral words).
inline std::vector<std::string> synthetic_language_words(const SyntheticCorpusConfig& cfg, std::size_t language) {
    std::vector<std::string> out;
    const auto& code = cfg.languages.at(language);
    for (std::size_t l = 0; l < cfg.labels.size(); ++l)
        for (std::size_t k = 0; k < cfg.cue_words_per_label; ++k)
            out.push_back(code + "_c" + std::to_string(l) + "w" + std::to_string(k));
    for (std::size_t k = 0; k < cfg.neutral_words_per_language; ++k) out.push_back(code + "_n" + std::to_string(k));
    return out;
}

inline std::vector<std::string> synthetic_shared_words(const SyntheticCorpusConfig& cfg) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < cfg.shared_words; ++k) out.push_back("en_s" + std::to_string(k));
    return out;
}

inline MultilingualDataset make_synthetic_corpus(const SyntheticCorpusConfig& cfg = {}) {
    if (cfg.languages.empty() || cfg.labels.empty()) throw ConfigError("synthetic corpus needs languages and labels");
    if (cfg.label_weights.size() != cfg.labels.size()) throw ConfigError("one label weight per label is required");
    if (cfg.min_words < 3 || cfg.max_words < cfg.min_words) throw ConfigError("invalid sentence length range");
    std::mt19937_64 rng(cfg.seed);
    const auto shared = synthetic_shared_words(cfg);
    std::vector<LanguageId> languages;
    std::vector<LabelSchema> schemas;
    std::array<std::vector<Example>, 3> examples;
    const std::array<std::size_t, 3> per_split{cfg.train_per_language, cfg.dev_per_language, cfg.test_per_language};
    std::discrete_distribution<std::size_t> label_dist(cfg.label_weights.begin(), cfg.label_weights.end());
    std::uniform_int_distribution<std::size_t> len_dist(cfg.min_words, cfg.max_words);

    for (std::size_t li = 0; li < cfg.languages.size(); ++li) {
        LanguageId lang{cfg.languages[li], li};
        languages.push_back(lang);
        schemas.push_back({"sentiment", cfg.labels});
        const auto own = synthetic_language_words(cfg, li);
        const std::size_t cue_count = cfg.labels.size() * cfg.cue_words_per_label;
        std::set<std::string> used;
        for (Split split : kAllSplits) {
            std::size_t made = 0;
            while (made < per_split[static_cast<int>(split)]) {
                const auto label = label_dist(rng);
                const auto len = len_dist(rng);
                std::vector<std::string> words;
                const std::size_t cues = 1 + rng() % 2;
                for (std::size_t k = 0; k < cues; ++k)
                    words.push_back(own[label * cfg.cue_words_per_label + rng() % cfg.cue_words_per_label]);
                if (cfg.neutral_words_per_language > 0)
                    words.push_back(own[cue_count + rng() % cfg.neutral_words_per_language]);
                while (words.size() < len) words.push_back(shared[rng() % shared.size()]);
                std::shuffle(words.begin(), words.end(), rng);
                std::string text;
                for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
                if (!used.insert(text).second) continue;
                examples[static_cast<int>(split)].push_back({text, lang, cfg.labels[label], label, split});
                ++made;
            }
        }
    }
    return MultilingualDataset("sentiment", "synthetic(seed=" + std::to_string(cfg.seed) + ")", std::move(languages),
                               std::move(schemas), std::move(examples));
}

}  // namespace lingofuse
