#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "lingofuse/corpus.hpp"
#include "lingofuse/encoder.hpp"
#include "lingofuse/error.hpp"

namespace lingofuse {

struct PerturbationConfig {
    double alpha_specific = 1.5;
    double alpha_other = 1.0;
    double epsilon = 1.0;

    // epsilon = 0 is accepted so the zero-perturbation identity can be exercised.
    void validate() const {
        if (!(alpha_specific > 0.0) || !(alpha_other > 0.0))
            throw ConfigError("alpha_specific and alpha_other must be positive");
        if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    }

    nlohmann::json to_json() const {
        return {{"alpha_specific", alpha_specific}, {"alpha_other", alpha_other}, {"epsilon", epsilon}};
    }
};

/// Training hyperparameters. Defaults are the published fine-tuning setup
/// (Adam, lr 5e-5, dropout 0.5, weight decay 0.001, 128 tokens, batch 64).
struct TrainConfig {
    double learning_rate = 5e-5;
    double dropout = 0.5;
    double weight_decay = 0.001;
    std::string optimizer = "adam";
    std::size_t max_len = kDefaultMaxLen;
    std::size_t batch_size = kDefaultBatchSize;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    PerturbationConfig perturbation;
    std::string backend = "tiny";
    TinyEncoderConfig encoder;

    // Framework switches (the ablation ladder toggles these).
    bool adversarial = true;
    bool language_weighting = true;
    bool descriptors = true;

    bool monolingual_batches = false;
    bool freeze_encoder = false;
    bool adversarial_only_grad = false;
    bool per_sentence_lexicon = false;
    double grad_clip = 1.0;

    // Recognizer overrides; 0 means "same as the classifier".
    std::size_t recognizer_epochs = 0;
    double recognizer_learning_rate = 0.0;

    // Stop once every language reaches this dev weighted-F1 (off when unset).
    std::optional<double> stop_at_dev_f1;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
        if (optimizer != "adam") throw ConfigError("only the adam optimizer is supported");
        if (max_len < 2) throw ConfigError("max_len must be >= 2");
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
        if (epochs == 0) throw ConfigError("epochs must be >= 1");
        if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
        perturbation.validate();
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"learning_rate", learning_rate},
                         {"dropout", dropout},
                         {"weight_decay", weight_decay},
                         {"optimizer", optimizer},
                         {"max_len", max_len},
                         {"batch_size", batch_size},
                         {"epochs", epochs},
                         {"seed", seed},
                         {"alpha_specific", perturbation.alpha_specific},
                         {"alpha_other", perturbation.alpha_other},
                         {"epsilon", perturbation.epsilon},
                         {"backend", backend},
                         {"encoder", encoder.to_json()},
                         {"adversarial", adversarial},
                         {"language_weighting", language_weighting},
                         {"descriptors", descriptors},
                         {"monolingual_batches", monolingual_batches},
                         {"freeze_encoder", freeze_encoder},
                         {"adversarial_only_grad", adversarial_only_grad},
                         {"per_sentence_lexicon", per_sentence_lexicon},
                         {"grad_clip", grad_clip},
                         {"recognizer_epochs", recognizer_epochs},
                         {"recognizer_learning_rate", recognizer_learning_rate}};
        j["stop_at_dev_f1"] = stop_at_dev_f1 ? nlohmann::json(*stop_at_dev_f1) : nlohmann::json(nullptr);
        return j;
    }

    /// Overlays the keys present in `j` on top of `base`. Unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }

    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
        static const std::set<std::string> known{
            "learning_rate", "dropout", "weight_decay", "optimizer", "max_len", "batch_size", "epochs",
            "seed", "alpha_specific", "alpha_other", "epsilon", "backend", "encoder", "adversarial",
            "language_weighting", "descriptors", "monolingual_batches", "freeze_encoder",
            "adversarial_only_grad", "per_sentence_lexicon", "grad_clip", "recognizer_epochs",
            "recognizer_learning_rate", "stop_at_dev_f1"};
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        for (const auto& [k, v] : j.items())
            if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
        TrainConfig c = std::move(base);
        try {
            c.learning_rate = j.value("learning_rate", c.learning_rate);
            c.dropout = j.value("dropout", c.dropout);
            c.weight_decay = j.value("weight_decay", c.weight_decay);
            c.optimizer = j.value("optimizer", c.optimizer);
            c.max_len = j.value("max_len", c.max_len);
            c.batch_size = j.value("batch_size", c.batch_size);
            c.epochs = j.value("epochs", c.epochs);
            c.seed = j.value("seed", c.seed);
            c.perturbation.alpha_specific = j.value("alpha_specific", c.perturbation.alpha_specific);
            c.perturbation.alpha_other = j.value("alpha_other", c.perturbation.alpha_other);
            c.perturbation.epsilon = j.value("epsilon", c.perturbation.epsilon);
            c.backend = j.value("backend", c.backend);
            if (j.contains("encoder")) {
                auto enc = c.encoder.to_json();
                enc.update(j["encoder"]);
                c.encoder = TinyEncoderConfig::from_json(enc);
            }
            c.adversarial = j.value("adversarial", c.adversarial);
            c.language_weighting = j.value("language_weighting", c.language_weighting);
            c.descriptors = j.value("descriptors", c.descriptors);
            c.monolingual_batches = j.value("monolingual_batches", c.monolingual_batches);
            c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
            c.adversarial_only_grad = j.value("adversarial_only_grad", c.adversarial_only_grad);
            c.per_sentence_lexicon = j.value("per_sentence_lexicon", c.per_sentence_lexicon);
            c.grad_clip = j.value("grad_clip", c.grad_clip);
            c.recognizer_epochs = j.value("recognizer_epochs", c.recognizer_epochs);
            c.recognizer_learning_rate = j.value("recognizer_learning_rate", c.recognizer_learning_rate);
            if (j.contains("stop_at_dev_f1"))
                c.stop_at_dev_f1 = j["stop_at_dev_f1"].is_null() ? std::nullopt
                                                                 : std::optional<double>(j["stop_at_dev_f1"].get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("invalid config value: ") + e.what());
        }
        c.validate();
        return c;
    }

    static TrainConfig load(const std::filesystem::path& path) { return load(path, TrainConfig()); }

    static TrainConfig load(const std::filesystem::path& path, TrainConfig base) {
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open config: " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed config " + path.string() + ": " + e.what());
        }
        return from_json(j, std::move(base));
    }
};

}  // namespace lingofuse
