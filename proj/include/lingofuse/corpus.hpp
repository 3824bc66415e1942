#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"

namespace lingofuse {

enum class Split { train = 0, dev = 1, test = 2 };

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::dev, Split::test};

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(s) + "' (expected train, dev or test)");
}

struct LanguageId {
    std::string code;
    std::size_t index = 0;
    bool operator==(const LanguageId&) const = default;
};

struct LabelSchema {
    std::string task;
    std::vector<std::string> labels;

    std::size_t size() const { return labels.size(); }

    std::optional<std::size_t> find(std::string_view label) const {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) return std::nullopt;
        return static_cast<std::size_t>(it - labels.begin());
    }

    bool operator==(const LabelSchema&) const = default;
};

struct Example {
    std::string text;
    LanguageId language;
    std::string label;
    std::size_t label_index = 0;
    Split split = Split::train;
    bool operator==(const Example&) const = default;
};

inline std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

/// Immutable after construction. Examples are stored per split, grouped by
/// language in manifest order, each group in file order.
class MultilingualDataset {
public:
    MultilingualDataset() = default;

    MultilingualDataset(std::string task, std::string source, std::vector<LanguageId> languages,
                        std::vector<LabelSchema> schemas, std::array<std::vector<Example>, 3> examples)
        : task_(std::move(task)),
          source_(std::move(source)),
          languages_(std::move(languages)),
          schemas_(std::move(schemas)),
          examples_(std::move(examples)) {
        validate();
    }

    const std::string& task() const { return task_; }
    const std::string& source() const { return source_; }
    std::size_t num_languages() const { return languages_.size(); }
    const std::vector<LanguageId>& languages() const { return languages_; }
    const LanguageId& language(std::size_t i) const { return languages_.at(i); }
    const LabelSchema& schema(std::size_t language) const { return schemas_.at(language); }
    const std::vector<LabelSchema>& schemas() const { return schemas_; }

    const std::vector<Example>& examples(Split s) const { return examples_[static_cast<int>(s)]; }
    bool has_split(Split s) const { return !examples(s).empty(); }

    const LanguageId& find_language(std::string_view code) const {
        for (const auto& l : languages_)
            if (l.code == code) return l;
        throw ConfigError("unknown language code '" + std::string(code) + "'");
    }

    bool operator==(const MultilingualDataset&) const = default;

private:
    void validate() const {
        if (languages_.empty()) throw LoadError("dataset declares no languages");
        if (schemas_.size() != languages_.size()) throw LoadError("one label schema is required per language");
        std::set<std::string> codes;
        for (std::size_t i = 0; i < languages_.size(); ++i) {
            if (languages_[i].index != i) throw LoadError("language indices must be dense and ordered");
            if (!codes.insert(languages_[i].code).second)
                throw LoadError("duplicate language code '" + languages_[i].code + "'");
            std::set<std::string> uniq(schemas_[i].labels.begin(), schemas_[i].labels.end());
            if (uniq.size() != schemas_[i].labels.size() || uniq.empty())
                throw SchemaError("labels for language '" + languages_[i].code + "' must be unique and non-empty");
        }
        std::vector<bool> has_train(languages_.size(), false);
        for (const auto& ex : examples(Split::train)) has_train.at(ex.language.index) = true;
        for (std::size_t i = 0; i < languages_.size(); ++i)
            if (!has_train[i]) throw LoadError("language '" + languages_[i].code + "' has no train examples");
        // A text may belong to one split only (per language).
        std::map<std::pair<std::size_t, std::string>, Split> seen;
        for (Split s : kAllSplits) {
            for (const auto& ex : examples(s)) {
                auto [it, inserted] = seen.emplace(std::make_pair(ex.language.index, ex.text), s);
                if (!inserted && it->second != s)
                    throw LoadError("example appears in both " + to_string(it->second) + " and " + to_string(s) +
                                    " for language '" + ex.language.code + "': " + ex.text);
            }
        }
    }

    std::string task_;
    std::string source_;
    std::vector<LanguageId> languages_;
    std::vector<LabelSchema> schemas_;
    std::array<std::vector<Example>, 3> examples_;
};

namespace detail {

inline std::vector<Example> read_tsv(const std::filesystem::path& path, const LanguageId& lang,
                                     const LabelSchema& schema, Split split) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open data file: " + path.string());
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos)
            throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected text<TAB>label");
        Example ex;
        ex.text = trim(std::string_view(line).substr(0, tab));
        ex.label = trim(std::string_view(line).substr(tab + 1));
        if (ex.text.empty()) throw LoadError(path.string() + ":" + std::to_string(line_no) + ": empty text");
        auto idx = schema.find(ex.label);
        if (!idx)
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": label '" + ex.label +
                              "' is not in the schema of language '" + lang.code + "'");
        ex.label_index = *idx;
        ex.language = lang;
        ex.split = split;
        out.push_back(std::move(ex));
    }
    if (out.empty()) throw LoadError("data file has no examples: " + path.string());
    return out;
}

}  // namespace detail

/// Reads a JSON manifest `{task, languages: [{code, labels, train, dev, test}]}`.
/// Data paths are resolved relative to the manifest's directory; dev and test
/// are optional.
inline MultilingualDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw LoadError("cannot open manifest: " + manifest_path.string());
    nlohmann::json m;
    try {
        in >> m;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const auto base = manifest_path.parent_path();
    try {
        std::string task = m.value("task", std::string("classification"));
        const auto& langs = m.at("languages");
        if (!langs.is_array() || langs.empty())
            throw LoadError("manifest " + manifest_path.string() + " names no languages");
        std::vector<LanguageId> languages;
        std::vector<LabelSchema> schemas;
        std::array<std::vector<Example>, 3> examples;
        for (std::size_t i = 0; i < langs.size(); ++i) {
            const auto& l = langs[i];
            LanguageId id{l.at("code").get<std::string>(), i};
            LabelSchema schema{task, l.at("labels").get<std::vector<std::string>>()};
            std::set<std::string> uniq(schema.labels.begin(), schema.labels.end());
            if (schema.labels.empty() || uniq.size() != schema.labels.size())
                throw SchemaError("labels for language '" + id.code + "' must be unique and non-empty");
            for (Split s : kAllSplits) {
                const auto key = to_string(s);
                if (!l.contains(key) || l[key].is_null()) {
                    if (s == Split::train) throw LoadError("language '" + id.code + "' has no train file");
                    continue;
                }
                auto rows = detail::read_tsv(base / l[key].get<std::string>(), id, schema, s);
                auto& dst = examples[static_cast<int>(s)];
                dst.insert(dst.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
            }
            languages.push_back(std::move(id));
            schemas.push_back(std::move(schema));
        }
        return MultilingualDataset(task, manifest_path.string(), std::move(languages), std::move(schemas),
                                   std::move(examples));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("invalid manifest " + manifest_path.string() + ": " + e.what());
    }
}

/// Writes the dataset back as a manifest plus one TSV per (language, split).
inline void write_dataset(const MultilingualDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json m;
    m["task"] = ds.task();
    m["languages"] = nlohmann::json::array();
    for (const auto& lang : ds.languages()) {
        nlohmann::json l;
        l["code"] = lang.code;
        l["labels"] = ds.schema(lang.index).labels;
        for (Split s : kAllSplits) {
            std::vector<const Example*> rows;
            for (const auto& ex : ds.examples(s))
                if (ex.language.index == lang.index) rows.push_back(&ex);
            if (rows.empty()) continue;
            const std::string file = lang.code + "_" + to_string(s) + ".tsv";
            std::ofstream out(dir / file);
            for (const auto* ex : rows) out << ex->text << '\t' << ex->label << '\n';
            l[to_string(s)] = file;
        }
        m["languages"].push_back(std::move(l));
    }
    std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Distribution statistics

struct LabelCount {
    std::string label;
    std::size_t count = 0;
    double proportion = 0.0;
};

struct DistributionGroup {
    std::string language;
    Split split = Split::train;
    std::size_t total = 0;
    std::vector<LabelCount> labels;
};

struct DistributionReport {
    std::vector<DistributionGroup> groups;

    const DistributionGroup& group(std::string_view language, Split split) const {
        for (const auto& g : groups)
            if (g.language == language && g.split == split) return g;
        throw RangeError("no distribution group for " + std::string(language) + "/" + to_string(split));
    }

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& g : groups) {
            nlohmann::json j{{"language", g.language}, {"split", to_string(g.split)}, {"total", g.total}};
            j["labels"] = nlohmann::json::array();
            for (const auto& c : g.labels)
                j["labels"].push_back({{"label", c.label}, {"count", c.count}, {"proportion", c.proportion}});
            out.push_back(std::move(j));
        }
        return out;
    }

    std::string to_markdown() const {
        std::ostringstream os;
        os << "| Language | Split | Label | Count | Proportion |\n";
        os << "|---|---|---|---:|---:|\n";
        for (const auto& g : groups) {
            for (const auto& c : g.labels) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.4f", c.proportion);
                os << "| " << g.language << " | " << to_string(g.split) << " | " << c.label << " | " << c.count
                   << " | " << buf << " |\n";
            }
        }
        return os.str();
    }
};

inline DistributionReport dataset_stats(const MultilingualDataset& ds) {
    DistributionReport report;
    for (const auto& lang : ds.languages()) {
        const auto& schema = ds.schema(lang.index);
        for (Split s : kAllSplits) {
            DistributionGroup g;
            g.language = lang.code;
            g.split = s;
            std::vector<std::size_t> counts(schema.size(), 0);
            for (const auto& ex : ds.examples(s)) {
                if (ex.language.index != lang.index) continue;
                ++counts[ex.label_index];
                ++g.total;
            }
            for (std::size_t c = 0; c < schema.size(); ++c) {
                const double p = g.total == 0 ? 0.0 : static_cast<double>(counts[c]) / static_cast<double>(g.total);
                g.labels.push_back({schema.labels[c], counts[c], p});
            }
            report.groups.push_back(std::move(g));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Batching

inline constexpr std::size_t kDefaultBatchSize = 64;

/// A batch holds indices into `ds.examples(split)`.
using Batch = std::vector<std::size_t>;

/// Shuffles the split with a seeded generator and cuts it into batches. Mixed
/// mode draws from one pool across languages; monolingual mode cuts each
/// language separately and then shuffles the batch order.
inline std::vector<Batch> make_batches(const MultilingualDataset& ds, Split split,
                                       std::size_t batch_size = kDefaultBatchSize, std::uint64_t seed = 0,
                                       bool monolingual = false) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    const auto& rows = ds.examples(split);
    if (rows.empty()) throw ConfigError("split '" + to_string(split) + "' is empty");
    std::mt19937_64 rng(seed);
    std::vector<Batch> batches;
    auto cut = [&](std::vector<std::size_t>& pool) {
        for (std::size_t i = 0; i < pool.size(); i += batch_size)
            batches.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(i),
                                 pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), i + batch_size)));
    };
    if (!monolingual) {
        std::vector<std::size_t> pool(rows.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        std::shuffle(pool.begin(), pool.end(), rng);
        cut(pool);
        return batches;
    }
    for (const auto& lang : ds.languages()) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].language.index == lang.index) pool.push_back(i);
        std::shuffle(pool.begin(), pool.end(), rng);
        cut(pool);
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

}  // namespace lingofuse
