#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/adversary.hpp"
#include "lingofuse/config.hpp"
#include "lingofuse/corpus.hpp"
#include "lingofuse/lexicon.hpp"
#include "lingofuse/metrics.hpp"
#include "lingofuse/model.hpp"
#include "lingofuse/optim.hpp"

namespace lingofuse {

inline constexpr int kCheckpointVersion = 1;

struct EpochReport {
    std::size_t epoch = 0;
    double mean_clean_loss = 0.0;
    std::optional<double> mean_adversarial_loss;
    std::vector<std::pair<std::string, double>> dev_f1;
    std::optional<double> dev_average;
    std::size_t degenerate_steps = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"epoch", epoch}, {"mean_clean_loss", mean_clean_loss}, {"degenerate_steps", degenerate_steps}};
        j["mean_adversarial_loss"] = mean_adversarial_loss ? nlohmann::json(*mean_adversarial_loss) : nlohmann::json(nullptr);
        nlohmann::json f1 = nlohmann::json::object();
        for (const auto& [lang, v] : dev_f1) f1[lang] = v;
        j["dev_weighted_f1"] = f1;
        j["dev_average"] = dev_average ? nlohmann::json(*dev_average) : nlohmann::json(nullptr);
        return j;
    }

    bool operator==(const EpochReport&) const = default;
};

/// Trained parameters plus everything needed to reuse them: the config, and the
/// language code <-> head index mapping with each language's labels.
struct Checkpoint {
    FrameworkModel model;
    TrainConfig config;
    std::vector<LanguageId> languages;
    std::vector<LabelSchema> schemas;
    std::size_t epoch = 0;

    std::size_t head_for(const std::string& code) const {
        for (const auto& l : languages)
            if (l.code == code) return l.index;
        throw RangeError("checkpoint has no head for language '" + code + "'");
    }

    /// Layout: weights.json, config.json, languages.json.
    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        nlohmann::json w{{"version", kCheckpointVersion}, {"epoch", epoch}, {"model", model.to_json()}};
        std::ofstream(dir / "weights.json") << w.dump() << '\n';
        std::ofstream(dir / "config.json") << config.to_json().dump(2) << '\n';
        nlohmann::json langs = nlohmann::json::array();
        for (const auto& l : languages)
            langs.push_back({{"code", l.code}, {"index", l.index}, {"labels", schemas.at(l.index).labels},
                             {"task", schemas.at(l.index).task}});
        std::ofstream(dir / "languages.json") << langs.dump(2) << '\n';
    }

    static Checkpoint load(const std::filesystem::path& dir) {
        auto read = [&](const char* name) {
            std::ifstream in(dir / name);
            if (!in) throw LoadError("checkpoint file missing: " + (dir / name).string());
            try {
                return nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw LoadError("malformed checkpoint file " + (dir / name).string() + ": " + e.what());
            }
        };
        const auto w = read("weights.json");
        if (w.value("version", 0) != kCheckpointVersion)
            throw LoadError("unsupported checkpoint version in " + dir.string());
        Checkpoint c{FrameworkModel::from_json(w.at("model")), TrainConfig::from_json(read("config.json")), {}, {}, 0};
        c.epoch = w.value("epoch", std::size_t{0});
        const auto langs = read("languages.json");
        for (std::size_t i = 0; i < langs.size(); ++i) {
            const auto& l = langs[i];
            if (l.at("index").get<std::size_t>() != i) throw LoadError("languages.json indices must be dense and ordered");
            c.languages.push_back({l.at("code").get<std::string>(), i});
            c.schemas.push_back({l.value("task", std::string()), l.at("labels").get<std::vector<std::string>>()});
        }
        if (c.languages.size() != c.model.num_heads()) throw LoadError("languages.json does not match the model heads");
        return c;
    }
};

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<EpochReport> epochs;
    std::size_t best_epoch = 0;
};

struct Prediction {
    std::string language;
    std::string gold;
    std::string pred;
};

struct Evaluation {
    MetricsReport report;
    std::vector<Prediction> predictions;
};

/// Maps (example, head index) to a predicted label index.
using Predictor = std::function<std::size_t(const Example&, std::size_t)>;

/// Scores `predict` on every example of `split`. Each example is routed to
/// the head of its language, matched by code against `languages`.
inline Evaluation evaluate_with(const Predictor& predict, const std::vector<LanguageId>& languages,
                                const std::vector<LabelSchema>& schemas, const MultilingualDataset& ds, Split split) {
    const auto& rows = ds.examples(split);
    if (rows.empty()) throw ConfigError("split '" + to_string(split) + "' is empty");
    auto head_for = [&](const std::string& code) {
        for (const auto& l : languages)
            if (l.code == code) return l.index;
        throw RangeError("no head for language '" + code + "'");
    };
    Evaluation ev;
    ev.report.split = to_string(split);
    for (const auto& lang : ds.languages()) {
        const auto head = head_for(lang.code);
        const auto& schema = schemas.at(head);
        std::vector<std::size_t> golds, preds;
        for (const auto& ex : rows) {
            if (ex.language.index != lang.index) continue;
            const auto gold = schema.find(ex.label);
            if (!gold) throw SchemaError("label '" + ex.label + "' unknown to the model for '" + lang.code + "'");
            const auto pred = predict(ex, head);
            if (pred >= schema.size()) throw RangeError("predicted label index out of range");
            golds.push_back(*gold);
            preds.push_back(pred);
            ev.predictions.push_back({lang.code, ex.label, schema.labels[pred]});
        }
        if (golds.empty()) continue;
        ev.report.languages.push_back(language_metrics(lang.code, schema.labels, golds, preds));
    }
    return ev;
}

inline Evaluation evaluate_predictions(const Checkpoint& ckpt, const MultilingualDataset& ds, Split split) {
    const auto& vocab = ckpt.model.encoder().vocab();
    auto ev = evaluate_with(
        [&](const Example& ex, std::size_t head) {
            return ckpt.model.predict(tokenize(vocab, ex.text, ckpt.config.max_len), head);
        },
        ckpt.languages, ckpt.schemas, ds, split);
    ev.report.provenance = ckpt.config.to_json();
    return ev;
}

inline MetricsReport evaluate_split(const Checkpoint& ckpt, const MultilingualDataset& ds, Split split) {
    return evaluate_predictions(ckpt, ds, split).report;
}

inline void save_predictions_tsv(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write predictions: " + path.string());
    for (const auto& p : preds) out << p.language << '\t' << p.gold << '\t' << p.pred << '\n';
}

/// Called after every epoch; used by the CLI to append JSON lines.
using EpochCallback = std::function<void(const EpochReport&)>;

/// Multi-task training: per batch a clean pass (plus the adversarial pass when
/// enabled), global-norm clipping, then one Adam update. Dev weighted-F1 is
/// computed after every epoch and the best-dev parameters are retained.
inline TrainResult train(const MultilingualDataset& ds, const TrainConfig& cfg, const LanguageLexicon* lexicon = nullptr,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (!ds.has_split(Split::train)) throw ConfigError("train split is empty");
    const bool weighted = cfg.adversarial && cfg.language_weighting;
    if (weighted && lexicon == nullptr)
        throw ConfigError("language-specific weighting is enabled but no lexicon was provided");

    std::vector<std::string> texts;
    for (const auto& ex : ds.examples(Split::train)) texts.push_back(ex.text);
    auto tiny = cfg.encoder;
    tiny.max_len = cfg.max_len;
    tiny.seed = mix_seed(cfg.seed, 1);
    std::vector<std::size_t> head_labels;
    for (const auto& s : ds.schemas()) head_labels.push_back(s.size());
    FrameworkModel model(make_backend(cfg.backend, Vocabulary::build(texts), tiny), head_labels, cfg.descriptors,
                         mix_seed(cfg.seed, 2));
    model.set_classifier_dropout(cfg.dropout);

    const auto& rows = ds.examples(Split::train);
    std::vector<PreparedExample> prepared;
    std::vector<AlphaMap> alphas;
    prepared.reserve(rows.size());
    for (const auto& ex : rows) {
        auto tok = tokenize(model.encoder().vocab(), ex.text, cfg.max_len);
        if (cfg.adversarial) {
            if (weighted)
                alphas.push_back(build_alpha_map(tok, *lexicon, ex.language.code, ex.text, cfg.perturbation,
                                                 cfg.per_sentence_lexicon));
            else
                alphas.push_back(AlphaMap{std::vector<double>(tok.size(), cfg.perturbation.alpha_other)});
        }
        prepared.push_back({std::move(tok), ex.language.index, ex.label_index});
    }

    auto snapshot = [&](std::size_t epoch) {
        return Checkpoint{model, cfg, ds.languages(), ds.schemas(), epoch};
    };

    TrainResult result{snapshot(0), snapshot(0), {}, 0};
    std::optional<double> best_dev;
    Adam adam(cfg.learning_rate, cfg.weight_decay);
    const ForwardOptions opts{true, cfg.dropout, 0};

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(ds, Split::train, cfg.batch_size, mix_seed(cfg.seed, 1000 + epoch),
                                          cfg.monolingual_batches);
        EpochReport rep;
        rep.epoch = epoch;
        double clean_sum = 0.0, adv_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<const PreparedExample*> batch;
            std::vector<AlphaMap> batch_alpha;
            for (auto i : batches[b]) {
                batch.push_back(&prepared[i]);
                if (cfg.adversarial) batch_alpha.push_back(alphas[i]);
            }
            const auto step_seed = mix_seed(mix_seed(cfg.seed, 2000 + epoch), b);
            Gradients grads;
            double clean_loss = 0.0, adv_loss = 0.0;
            if (cfg.adversarial) {
                auto step = adversarial_step(model, batch, batch_alpha, cfg.perturbation, opts, step_seed,
                                             cfg.adversarial_only_grad);
                clean_loss = step.clean_loss;
                adv_loss = step.adversarial_loss;
                if (step.degenerate_gradient) ++rep.degenerate_steps;
                grads = std::move(step.grads);
            } else {
                auto g = batch_gradients(model, batch, opts, step_seed);
                clean_loss = g.mean_loss;
                grads = std::move(g.grads);
            }
            if (!std::isfinite(clean_loss) || !std::isfinite(adv_loss) || !grads.all_finite()) {
                nlohmann::json diag{{"epoch", epoch}, {"batch", b}, {"clean_loss", clean_loss},
                                    {"adversarial_loss", adv_loss}, {"config", cfg.to_json()}};
                throw TrainingError("non-finite loss or gradient; diagnostic: " + diag.dump());
            }
            const double n = static_cast<double>(batch.size());
            clean_sum += clean_loss * n;
            adv_sum += adv_loss * n;
            clip_global_norm(grads, cfg.grad_clip);
            adam.step(model, grads, !cfg.freeze_encoder);
        }
        rep.mean_clean_loss = clean_sum / static_cast<double>(rows.size());
        if (cfg.adversarial) rep.mean_adversarial_loss = adv_sum / static_cast<double>(rows.size());

        bool reached = false;
        if (ds.has_split(Split::dev)) {
            const auto current = snapshot(epoch);
            const auto metrics = evaluate_split(current, ds, Split::dev);
            reached = cfg.stop_at_dev_f1.has_value();
            for (const auto& l : metrics.languages) {
                rep.dev_f1.emplace_back(l.language, l.weighted_f1);
                if (cfg.stop_at_dev_f1 && l.weighted_f1 < *cfg.stop_at_dev_f1) reached = false;
            }
            rep.dev_average = metrics.average();
            if (!best_dev || *rep.dev_average > *best_dev) {
                best_dev = rep.dev_average;
                result.best = current;
                result.best_epoch = epoch;
            }
        }
        result.epochs.push_back(rep);
        if (on_epoch) on_epoch(rep);
        if (reached) break;
    }
    result.last = snapshot(result.epochs.back().epoch);
    if (!best_dev) {
        result.best = result.last;
        result.best_epoch = result.last.epoch;
    }
    return result;
}

}  // namespace lingofuse
