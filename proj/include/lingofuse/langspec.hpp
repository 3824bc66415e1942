#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/config.hpp"
#include "lingofuse/corpus.hpp"
#include "lingofuse/lexicon.hpp"
#include "lingofuse/model.hpp"
#include "lingofuse/optim.hpp"

namespace lingofuse {

/// Encoder plus one softmax head over the dataset's languages.
struct LanguageRecognizer {
    FrameworkModel model;
    std::vector<LanguageId> languages;
    std::size_t max_len = kDefaultMaxLen;

    std::size_t language_index(const std::string& code) const {
        for (const auto& l : languages)
            if (l.code == code) return l.index;
        throw RangeError("recognizer does not know language '" + code + "'");
    }

    TokenizedExample tokenize(const std::string& text) const {
        return lingofuse::tokenize(model.encoder().vocab(), text, max_len);
    }

    RowVector probabilities(const TokenizedExample& tok) const { return model.probabilities(tok, 0); }

    nlohmann::json to_json() const {
        nlohmann::json langs = nlohmann::json::array();
        for (const auto& l : languages) langs.push_back(l.code);
        return {{"version", 1}, {"languages", langs}, {"max_len", max_len}, {"model", model.to_json()}};
    }

    static LanguageRecognizer from_json(const nlohmann::json& j) {
        std::vector<LanguageId> langs;
        const auto codes = j.at("languages").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < codes.size(); ++i) langs.push_back({codes[i], i});
        return {FrameworkModel::from_json(j.at("model")), std::move(langs), j.at("max_len").get<std::size_t>()};
    }
};

struct RecognizerEpoch {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

struct RecognizerTraining {
    LanguageRecognizer recognizer;
    std::vector<RecognizerEpoch> history;
};

inline std::vector<std::string> train_texts(const MultilingualDataset& ds) {
    std::vector<std::string> texts;
    for (const auto& ex : ds.examples(Split::train)) texts.push_back(ex.text);
    return texts;
}

/// Fresh (untrained) recognizer over the dataset's languages.
inline LanguageRecognizer make_recognizer(const MultilingualDataset& ds, const TrainConfig& cfg) {
    auto tiny = cfg.encoder;
    tiny.max_len = cfg.max_len;
    tiny.seed = mix_seed(cfg.seed, 101);
    auto encoder = make_backend(cfg.backend, Vocabulary::build(train_texts(ds)), tiny);
    FrameworkModel model(std::move(encoder), {ds.num_languages()}, false, mix_seed(cfg.seed, 102));
    model.set_classifier_dropout(cfg.dropout);
    return {std::move(model), ds.languages(), cfg.max_len};
}

/// Accuracy of the recognizer at predicting each example's language.
inline double recognizer_accuracy(const LanguageRecognizer& rec, const std::vector<Example>& examples) {
    if (examples.empty()) throw ConfigError("cannot measure accuracy on an empty example set");
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        const auto tok = rec.tokenize(ex.text);
        if (rec.model.predict(tok, 0) == rec.language_index(ex.language.code)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

/// Supervised language identification on the train split. Trains clean (no
/// perturbation); epochs and learning rate fall back to the classifier's.
inline RecognizerTraining train_recognizer(const MultilingualDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (!ds.has_split(Split::train)) throw ConfigError("train split is empty");
    RecognizerTraining out{make_recognizer(ds, cfg), {}};
    auto& rec = out.recognizer;
    const auto& rows = ds.examples(Split::train);
    std::vector<PreparedExample> prepared;
    prepared.reserve(rows.size());
    for (const auto& ex : rows) prepared.push_back({rec.tokenize(ex.text), 0, ex.language.index});

    const std::size_t epochs = cfg.recognizer_epochs ? cfg.recognizer_epochs : cfg.epochs;
    const double lr = cfg.recognizer_learning_rate > 0.0 ? cfg.recognizer_learning_rate : cfg.learning_rate;
    Adam adam(lr, cfg.weight_decay);
    ForwardOptions opts{true, cfg.dropout, 0};
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto batches = make_batches(ds, Split::train, cfg.batch_size, mix_seed(cfg.seed ^ 0x5eedULL, epoch));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<const PreparedExample*> batch;
            for (auto i : batches[b]) batch.push_back(&prepared[i]);
            auto g = batch_gradients(rec.model, batch, opts, mix_seed(mix_seed(cfg.seed, 7 + epoch), b));
            if (!std::isfinite(g.mean_loss))
                throw TrainingError("recognizer loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b));
            loss_sum += g.mean_loss * static_cast<double>(batch.size());
            clip_global_norm(g.grads, cfg.grad_clip);
            adam.step(rec.model, g.grads, !cfg.freeze_encoder);
        }
        out.history.push_back({epoch, loss_sum / static_cast<double>(rows.size()), recognizer_accuracy(rec, rows)});
    }
    return out;
}

/// I_w = O_y(S) - O_y(S with w masked), one record per aligned word.
inline SentenceSaliency language_info(const LanguageRecognizer& rec, const Example& sentence) {
    SentenceSaliency s;
    s.language = sentence.language.code;
    s.text = sentence.text;
    const auto y = static_cast<Eigen::Index>(rec.language_index(sentence.language.code));
    const auto tok = rec.tokenize(sentence.text);
    s.base_probability = rec.probabilities(tok)(y);
    for (std::size_t w = 0; w < tok.num_words(); ++w) {
        const double masked = rec.probabilities(mask_word(tok, w))(y);
        s.records.push_back({w, tok.words[w], s.base_probability - masked});
    }
    sort_records(s.records);
    return s;
}

inline std::vector<SentenceSaliency> language_info(const LanguageRecognizer& rec, const std::vector<Example>& sentences) {
    std::vector<SentenceSaliency> out;
    out.reserve(sentences.size());
    for (const auto& ex : sentences) out.push_back(language_info(rec, ex));
    return out;
}

/// Recognizer -> saliency over the train split -> lexicon.
struct LexiconBuild {
    LanguageRecognizer recognizer;
    std::vector<RecognizerEpoch> history;
    std::vector<SentenceSaliency> saliencies;
    LanguageLexicon lexicon;
};

inline LexiconBuild prepare_lexicon(const MultilingualDataset& ds, const TrainConfig& cfg) {
    auto trained = train_recognizer(ds, cfg);
    auto sal = language_info(trained.recognizer, ds.examples(Split::train));
    auto lex = extract_lexicon(sal);
    return {std::move(trained.recognizer), std::move(trained.history), std::move(sal), std::move(lex)};
}

}  // namespace lingofuse
