#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lingofuse/config.hpp"
#include "lingofuse/corpus.hpp"
#include "lingofuse/langspec.hpp"
#include "lingofuse/report.hpp"
#include "lingofuse/trainer.hpp"

namespace lingofuse {

inline const std::vector<std::string>& ablation_row_labels() {
    static const std::vector<std::string> labels{
        "Multilingual",
        "Multilingual + adversarial training",
        "Multilingual + adversarial training + language-specific words extraction",
        "Multilingual + adversarial training + language-specific words extraction + language descriptor",
    };
    return labels;
}

/// Config of ablation rung `rung` (0..3) derived from `base`.
inline TrainConfig ablation_config(const TrainConfig& base, std::size_t rung) {
    TrainConfig c = base;
    c.adversarial = rung >= 1;
    c.language_weighting = rung >= 2;
    c.descriptors = rung >= 3;
    return c;
}

struct ExperimentOptions {
    Split eval_split = Split::dev;
    // Evaluate the best-dev checkpoint (default) or the final epoch.
    bool use_best = true;
    std::function<void(const std::string&)> log;
};

struct AblationResult {
    ComparisonTable table;
    std::vector<MetricsReport> metrics;
};

/// Trains the four ladder variants (baseline, +adversarial with uniform weights,
/// +language-specific weighting, +descriptors) and tabulates per-language
/// weighted-F1 with the average column.
inline AblationResult run_ablation(const MultilingualDataset& ds, const TrainConfig& base, const LanguageLexicon& lexicon,
                                   const ExperimentOptions& opts = {}) {
    AblationResult res;
    for (std::size_t rung = 0; rung < 4; ++rung) {
        if (opts.log) opts.log("ablation: " + ablation_row_labels()[rung]);
        const auto cfg = ablation_config(base, rung);
        const auto trained = train(ds, cfg, &lexicon);
        auto metrics = evaluate_split(opts.use_best ? trained.best : trained.last, ds, opts.eval_split);
        res.metrics.push_back(std::move(metrics));
    }
    res.table = table_from_metrics("Ablation (" + to_string(opts.eval_split) + " weighted-F1)", ablation_row_labels(),
                                   res.metrics);
    return res;
}

inline AblationResult run_ablation(const MultilingualDataset& ds, const TrainConfig& base,
                                   const ExperimentOptions& opts = {}) {
    const auto lex = prepare_lexicon(ds, base);
    return run_ablation(ds, base, lex.lexicon, opts);
}

inline const std::vector<double>& default_sweep_alphas() {
    static const std::vector<double> alphas{1.1, 1.2, 1.3, 1.4, 1.5};
    return alphas;
}

/// Trains the full framework once per alpha_specific value.
inline SweepResult alpha_sweep(const MultilingualDataset& ds, const TrainConfig& base, const LanguageLexicon& lexicon,
                               const std::vector<double>& alphas = default_sweep_alphas(),
                               const ExperimentOptions& opts = {}) {
    if (alphas.empty()) throw ConfigError("alpha sweep needs at least one value");
    for (double a : alphas)
        if (!(a > 0.0)) throw ConfigError("alpha values must be positive");
    SweepResult res;
    for (const auto& l : ds.languages()) res.languages.push_back(l.code);
    for (double a : alphas) {
        if (opts.log) opts.log("sweep: alpha_specific = " + std::to_string(a));
        auto cfg = base;
        cfg.adversarial = true;
        cfg.language_weighting = true;
        cfg.perturbation.alpha_specific = a;
        const auto trained = train(ds, cfg, &lexicon);
        const auto metrics = evaluate_split(opts.use_best ? trained.best : trained.last, ds, opts.eval_split);
        SweepRow row{a, {}};
        for (const auto& code : res.languages) row.f1.push_back(metrics.language(code).weighted_f1);
        res.rows.push_back(std::move(row));
    }
    return res;
}

}  // namespace lingofuse
