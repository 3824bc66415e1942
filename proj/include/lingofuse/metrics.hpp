#pragma once

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"

namespace lingofuse {

/// Fixed-point formatting with half-up rounding on the decimal value, so
/// 0.77795 renders as 0.7780 even though its binary value sits just below.
inline std::string format_fixed(double v, int precision) {
    const double scale = std::pow(10.0, precision);
    const double rounded = std::floor(std::abs(v) * scale + 0.5 + 1e-9) / scale;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, std::copysign(rounded, v));
    return buf;
}


struct ClassCounts {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t support = 0;  // number of gold instances
};

struct ConfusionCounts {
    std::vector<ClassCounts> classes;

    std::size_t total_support() const {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.support;
        return n;
    }
};

inline ConfusionCounts confusion_counts(const std::vector<std::size_t>& golds, const std::vector<std::size_t>& preds,
                                        std::size_t num_labels) {
    if (golds.size() != preds.size())
        throw ShapeError("gold (" + std::to_string(golds.size()) + ") and prediction (" + std::to_string(preds.size()) +
                         ") sequences differ in length");
    ConfusionCounts cc;
    cc.classes.resize(num_labels);
    for (std::size_t i = 0; i < golds.size(); ++i) {
        if (golds[i] >= num_labels || preds[i] >= num_labels) throw RangeError("label index outside the label set");
        ++cc.classes[golds[i]].support;
        if (golds[i] == preds[i]) {
            ++cc.classes[golds[i]].true_positives;
        } else {
            ++cc.classes[preds[i]].false_positives;
            ++cc.classes[golds[i]].false_negatives;
        }
    }
    return cc;
}

struct PerClassF1 {
    std::vector<double> f1;
    std::vector<std::size_t> support;
    std::vector<bool> zero_support;  // flagged: F1 forced to 0
};

/// F1_c = 2 P_c R_c / (P_c + R_c), and 0 when P_c + R_c = 0.
inline PerClassF1 per_class_f1(const std::vector<std::size_t>& golds, const std::vector<std::size_t>& preds,
                               std::size_t num_labels) {
    const auto cc = confusion_counts(golds, preds, num_labels);
    PerClassF1 out;
    for (const auto& c : cc.classes) {
        const double tp = static_cast<double>(c.true_positives);
        const double p = (c.true_positives + c.false_positives) ? tp / static_cast<double>(c.true_positives + c.false_positives) : 0.0;
        const double r = c.support ? tp / static_cast<double>(c.support) : 0.0;
        out.f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
        out.support.push_back(c.support);
        out.zero_support.push_back(c.support == 0);
    }
    return out;
}

/// Support-weighted mean of per-class F1.
inline double weighted_f1(const std::vector<std::size_t>& golds, const std::vector<std::size_t>& preds,
                          std::size_t num_labels) {
    if (golds.empty()) throw ConfigError("weighted_f1 needs at least one gold label");
    const auto pc = per_class_f1(golds, preds, num_labels);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < pc.f1.size(); ++c) {
        num += static_cast<double>(pc.support[c]) * pc.f1[c];
        den += static_cast<double>(pc.support[c]);
    }
    return num / den;
}

struct LanguageMetrics {
    std::string language;
    std::vector<std::string> labels;
    std::vector<double> per_class_f1;
    std::vector<std::size_t> support;
    std::vector<bool> zero_support;
    double weighted_f1 = 0.0;
    std::size_t examples = 0;
};

inline LanguageMetrics language_metrics(std::string language, std::vector<std::string> labels,
                                        const std::vector<std::size_t>& golds, const std::vector<std::size_t>& preds) {
    LanguageMetrics m;
    m.language = std::move(language);
    const auto pc = per_class_f1(golds, preds, labels.size());
    m.labels = std::move(labels);
    m.per_class_f1 = pc.f1;
    m.support = pc.support;
    m.zero_support = pc.zero_support;
    m.weighted_f1 = weighted_f1(golds, preds, m.labels.size());
    m.examples = golds.size();
    return m;
}

/// Per-language weighted-F1 plus the unweighted cross-language average.
struct MetricsReport {
    std::string split;
    std::vector<LanguageMetrics> languages;
    nlohmann::json provenance = nlohmann::json::object();

    double average() const {
        if (languages.empty()) return 0.0;
        double s = 0.0;
        for (const auto& l : languages) s += l.weighted_f1;
        return s / static_cast<double>(languages.size());
    }

    const LanguageMetrics& language(const std::string& code) const {
        for (const auto& l : languages)
            if (l.language == code) return l;
        throw RangeError("no metrics for language '" + code + "'");
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"split", split}, {"average_weighted_f1", average()}, {"provenance", provenance}};
        j["languages"] = nlohmann::json::array();
        for (const auto& l : languages) {
            nlohmann::json lj{{"language", l.language}, {"weighted_f1", l.weighted_f1}, {"examples", l.examples}};
            lj["classes"] = nlohmann::json::array();
            for (std::size_t c = 0; c < l.labels.size(); ++c)
                lj["classes"].push_back({{"label", l.labels[c]},
                                         {"f1", l.per_class_f1[c]},
                                         {"support", l.support[c]},
                                         {"zero_support", static_cast<bool>(l.zero_support[c])}});
            j["languages"].push_back(std::move(lj));
        }
        return j;
    }

    std::string to_markdown() const {
        std::ostringstream os;
        os << "| Language | Weighted-F1 |\n|---|---:|\n";
        for (const auto& l : languages) os << "| " << l.language << " | " << format_fixed(l.weighted_f1, 4) << " |\n";
        os << "| Average | " << format_fixed(average(), 4) << " |\n";
        for (const auto& l : languages) {
            os << "\n**" << l.language << "** per-class F1\n\n| Label | F1 | Support |\n|---|---:|---:|\n";
            for (std::size_t c = 0; c < l.labels.size(); ++c) {
                os << "| " << l.labels[c] << " | " << format_fixed(l.per_class_f1[c], 4) << (l.zero_support[c] ? " (no support)" : "") << " | "
                   << l.support[c] << " |\n";
            }
        }
        return os.str();
    }
};

}  // namespace lingofuse
