#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"
#include "lingofuse/metrics.hpp"

namespace lingofuse {

/// Rows of per-language scores with an unweighted Average column.
struct ComparisonRow {
    std::string label;
    std::vector<double> values;
    std::optional<double> reported_average;  // a published average, kept for cross-checking

    double average() const {
        if (values.empty()) return 0.0;
        double s = 0.0;
        for (double v : values) s += v;
        return s / static_cast<double>(values.size());
    }
};

struct ComparisonTable {
    std::string title;
    std::string row_header = "Model";
    std::vector<std::string> columns;
    std::vector<ComparisonRow> rows;
    int precision = 4;
    // Render languages as rows and models as columns, with a trailing Average row.
    bool transposed = false;

    void add_row(std::string label, std::vector<double> values, std::optional<double> reported = std::nullopt) {
        if (values.size() != columns.size())
            throw ShapeError("row '" + label + "' has " + std::to_string(values.size()) + " values for " +
                             std::to_string(columns.size()) + " columns");
        rows.push_back({std::move(label), std::move(values), reported});
    }

    const ComparisonRow& row(const std::string& label) const {
        for (const auto& r : rows)
            if (r.label == label) return r;
        throw RangeError("no row '" + label + "'");
    }

    /// Displayed value (rounded to `precision`), shared by every renderer.
    double shown(double v) const { return std::stod(format_fixed(v, precision)); }

    std::string to_markdown() const {
        std::ostringstream os;
        if (!title.empty()) os << "### " << title << "\n\n";
        if (!transposed) {
            os << "| " << row_header;
            for (const auto& c : columns) os << " | " << c;
            os << " | Average |\n|---";
            for (std::size_t i = 0; i <= columns.size(); ++i) os << "|---:";
            os << "|\n";
            for (const auto& r : rows) {
                os << "| " << r.label;
                for (double v : r.values) os << " | " << format_fixed(v, precision);
                os << " | " << format_fixed(r.average(), precision) << " |\n";
            }
            return os.str();
        }
        os << "| " << row_header;
        for (const auto& r : rows) os << " | " << r.label;
        os << " |\n|---";
        for (std::size_t i = 0; i < rows.size(); ++i) os << "|---:";
        os << "|\n";
        for (std::size_t c = 0; c < columns.size(); ++c) {
            os << "| " << columns[c];
            for (const auto& r : rows) os << " | " << format_fixed(r.values[c], precision);
            os << " |\n";
        }
        if (!columns.empty()) {
            os << "| Average";
            for (const auto& r : rows) os << " | " << format_fixed(r.average(), precision);
            os << " |\n";
        }
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"title", title}, {"row_header", row_header}, {"columns", columns},
                         {"precision", precision}, {"transposed", transposed}};
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json rj{{"label", r.label}, {"average", shown(r.average())}};
            rj["values"] = nlohmann::json::array();
            for (double v : r.values) rj["values"].push_back(shown(v));
            if (r.reported_average) {
                rj["reported_average"] = *r.reported_average;
                rj["reported_average_matches"] =
                    format_fixed(*r.reported_average, precision) == format_fixed(r.average(), precision);
            }
            j["rows"].push_back(std::move(rj));
        }
        return j;
    }

    static ComparisonTable from_json(const nlohmann::json& j) {
        ComparisonTable t;
        try {
            t.title = j.value("title", std::string());
            t.row_header = j.value("row_header", std::string("Model"));
            t.columns = j.at("columns").get<std::vector<std::string>>();
            t.precision = j.value("precision", 4);
            t.transposed = j.value("transposed", false);
            for (const auto& r : j.at("rows")) {
                std::optional<double> rep;
                if (r.contains("reported_average") && !r["reported_average"].is_null())
                    rep = r["reported_average"].get<double>();
                t.add_row(r.at("label").get<std::string>(), r.at("values").get<std::vector<double>>(), rep);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("invalid comparison table: ") + e.what());
        }
        return t;
    }

    /// One SVG bar chart per language column; bars are the rows.
    std::vector<std::pair<std::string, std::string>> to_svg_charts() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const int bar_w = 40, gap = 20, h = 200, top = 30, left = 40;
            const int width = left + static_cast<int>(rows.size()) * (bar_w + gap) + gap;
            std::ostringstream os;
            os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << (h + top + 60)
               << "\">\n<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << columns[c] << "</text>\n";
            os << "<line x1=\"" << left << "\" y1=\"" << top + h << "\" x2=\"" << width << "\" y2=\"" << top + h
               << "\" stroke=\"black\"/>\n";
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const double v = std::clamp(rows[r].values[c], 0.0, 1.0);
                const int bh = static_cast<int>(std::lround(v * h));
                const int x = left + gap + static_cast<int>(r) * (bar_w + gap);
                os << "<rect x=\"" << x << "\" y=\"" << top + h - bh << "\" width=\"" << bar_w << "\" height=\"" << bh
                   << "\" fill=\"steelblue\"><title>" << rows[r].label << "</title></rect>\n";
                os << "<text x=\"" << x << "\" y=\"" << top + h - bh - 4 << "\" font-size=\"10\">"
                   << format_fixed(rows[r].values[c], precision) << "</text>\n";
                os << "<text x=\"" << x << "\" y=\"" << top + h + 14 << "\" font-size=\"10\">R" << r + 1 << "</text>\n";
            }
            os << "</svg>\n";
            out.emplace_back(columns[c], os.str());
        }
        return out;
    }
};

inline ComparisonTable table_from_metrics(const std::string& title, const std::vector<std::string>& row_labels,
                                          const std::vector<MetricsReport>& reports) {
    if (row_labels.size() != reports.size()) throw ShapeError("one row label per metrics report is required");
    ComparisonTable t;
    t.title = title;
    if (!reports.empty())
        for (const auto& l : reports.front().languages) t.columns.push_back(l.language);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::vector<double> values;
        for (const auto& c : t.columns) values.push_back(reports[i].language(c).weighted_f1);
        t.add_row(row_labels[i], std::move(values));
    }
    return t;
}

/// Writes `<stem>.md`, `<stem>.json` and, with charts on, `<stem>_<language>.svg`.
/// Format is one of markdown, json, svg, all.
inline std::vector<std::filesystem::path> render_report(const ComparisonTable& table, const std::string& format,
                                                        const std::filesystem::path& dir,
                                                        const std::string& stem = "report", bool charts = false) {
    if (format != "markdown" && format != "json" && format != "svg" && format != "all")
        throw ConfigError("unknown report format '" + format + "' (expected markdown, json, svg or all)");
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    if (format == "markdown" || format == "all") {
        written.push_back(dir / (stem + ".md"));
        std::ofstream(written.back()) << table.to_markdown();
    }
    if (format == "json" || format == "all") {
        written.push_back(dir / (stem + ".json"));
        std::ofstream(written.back()) << table.to_json().dump(2) << '\n';
    }
    if (format == "svg" || charts) {
        for (const auto& [lang, svg] : table.to_svg_charts()) {
            written.push_back(dir / (stem + "_" + lang + ".svg"));
            std::ofstream(written.back()) << svg;
        }
    }
    return written;
}

struct SweepRow {
    double alpha = 0.0;
    std::vector<double> f1;  // per language
    double average() const {
        double s = 0.0;
        for (double v : f1) s += v;
        return f1.empty() ? 0.0 : s / static_cast<double>(f1.size());
    }
};

struct SweepResult {
    std::vector<std::string> languages;
    std::vector<SweepRow> rows;

    ComparisonTable to_table(const std::string& title = "Language-specific weight sweep") const {
        ComparisonTable t;
        t.title = title;
        t.row_header = "Threshold";
        t.columns = languages;
        for (const auto& r : rows) {
            std::ostringstream label;
            label << r.alpha;
            t.add_row(label.str(), r.f1);
        }
        return t;
    }
};

}  // namespace lingofuse
