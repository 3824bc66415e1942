// Command-line front end: corpus tools, lexicon extraction, training,
// evaluation, prediction, ablation, the alpha sweep and report rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lingofuse/lingofuse.hpp"

namespace fs = std::filesystem;
using namespace lingofuse;

namespace {

struct SharedFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<double> alpha;
    std::optional<double> epsilon;
    std::optional<std::size_t> epochs;
    std::optional<double> learning_rate;
    std::optional<double> dropout;
    std::string out = "out";
    bool charts = false;
    bool monolingual_batches = false;
    bool freeze_encoder = false;
    bool adversarial_only_grad = false;
    bool per_sentence_lexicon = false;
    bool quiet = false;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
    cmd->add_option("--config", f.config, "JSON training config (unknown keys are rejected)");
    cmd->add_option("--seed", f.seed, "Master seed");
    cmd->add_option("--backend", f.backend, "Encoder backend: tiny or pretrained:<name>");
    cmd->add_option("--alpha", f.alpha, "Weight for language-specific words");
    cmd->add_option("--epsilon", f.epsilon, "Perturbation radius");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--lr", f.learning_rate, "Learning rate");
    cmd->add_option("--dropout", f.dropout, "Dropout probability");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_flag("--charts", f.charts, "Also write one SVG bar chart per language");
    cmd->add_flag("--monolingual-batches", f.monolingual_batches, "Draw each batch from a single language");
    cmd->add_flag("--freeze-encoder", f.freeze_encoder, "Train heads and descriptors only");
    cmd->add_flag("--adversarial-only-grad", f.adversarial_only_grad, "Update from the perturbed pass only");
    cmd->add_flag("--per-sentence-lexicon", f.per_sentence_lexicon, "Weight words by their own sentence's saliency");
    cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress output");
}

TrainConfig resolve_config(const SharedFlags& f) {
    TrainConfig c = f.config.empty() ? TrainConfig() : TrainConfig::load(f.config);
    if (f.seed) c.seed = *f.seed;
    if (f.backend) c.backend = *f.backend;
    if (f.alpha) c.perturbation.alpha_specific = *f.alpha;
    if (f.epsilon) c.perturbation.epsilon = *f.epsilon;
    if (f.epochs) c.epochs = *f.epochs;
    if (f.learning_rate) c.learning_rate = *f.learning_rate;
    if (f.dropout) c.dropout = *f.dropout;
    c.monolingual_batches = c.monolingual_batches || f.monolingual_batches;
    c.freeze_encoder = c.freeze_encoder || f.freeze_encoder;
    c.adversarial_only_grad = c.adversarial_only_grad || f.adversarial_only_grad;
    c.per_sentence_lexicon = c.per_sentence_lexicon || f.per_sentence_lexicon;
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << text;
}

void log_line(const SharedFlags& f, const std::string& msg) {
    if (!f.quiet) std::cerr << msg << '\n';
}

void write_metrics(const MetricsReport& report, const fs::path& dir) {
    write_text(dir / "report.json", report.to_json().dump(2) + "\n");
    write_text(dir / "report.md", report.to_markdown());
}

LanguageLexicon obtain_lexicon(const MultilingualDataset& ds, const TrainConfig& cfg, const std::string& lexicon_path,
                               const fs::path& out, const SharedFlags& f) {
    if (!lexicon_path.empty()) {
        // Saliency JSONL keeps per-sentence records; the TSV holds only the aggregate.
        if (fs::path(lexicon_path).extension() == ".jsonl") return extract_lexicon(load_saliency_jsonl(lexicon_path));
        if (cfg.per_sentence_lexicon)
            throw ConfigError("--per-sentence-lexicon needs the saliency.jsonl from extract-lexicon, not a TSV lexicon");
        return LanguageLexicon::load_tsv(lexicon_path);
    }
    log_line(f, "building language-specific lexicon");
    auto built = prepare_lexicon(ds, cfg);
    fs::create_directories(out);
    built.lexicon.save_tsv(out / "lexicon.tsv");
    return std::move(built.lexicon);
}

Split split_option(const std::string& s) {
    try {
        return parse_split(s);
    } catch (const std::exception&) {
        throw ConfigError("unknown split '" + s + "' (expected train, dev or test)");
    }
}

std::vector<std::string> table_files(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lingofuse: multilingual classification with language-weighted adversarial training"};
    app.require_subcommand(1);
    SharedFlags f;
    std::string data, lexicon_path, checkpoint, split = "dev", input, format = "all", alphas_csv;
    std::size_t synth_train = 1000, synth_dev = 200, synth_test = 200;
    bool use_last = false;

    auto* synth = app.add_subcommand("synth", "Write the seeded synthetic code-mixed corpus");
    add_shared(synth, f);
    synth->add_option("--train-per-language", synth_train);
    synth->add_option("--dev-per-language", synth_dev);
    synth->add_option("--test-per-language", synth_test);

    auto* stats = app.add_subcommand("stats", "Per-language, per-split label distribution");
    add_shared(stats, f);
    stats->add_option("--data", data, "Dataset manifest")->required();

    auto* extract = app.add_subcommand("extract-lexicon", "Train the language recognizer and extract specific words");
    add_shared(extract, f);
    extract->add_option("--data", data, "Dataset manifest")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the framework");
    add_shared(train_cmd, f);
    train_cmd->add_option("--data", data, "Dataset manifest")->required();
    train_cmd->add_option("--lexicon", lexicon_path, "lexicon.tsv or saliency.jsonl from extract-lexicon (built on the fly if absent)");

    auto* eval_cmd = app.add_subcommand("evaluate", "Weighted-F1 of a checkpoint on a split");
    add_shared(eval_cmd, f);
    eval_cmd->add_option("--data", data, "Dataset manifest")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    eval_cmd->add_option("--split", split, "dev or test");

    auto* predict_cmd = app.add_subcommand("predict", "Label raw sentences with a checkpoint");
    add_shared(predict_cmd, f);
    predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    predict_cmd->add_option("--input", input, "TSV of language<TAB>text")->required();

    auto* ablate = app.add_subcommand("ablate", "Run the four-rung ablation ladder");
    add_shared(ablate, f);
    ablate->add_option("--data", data, "Dataset manifest")->required();
    ablate->add_option("--lexicon", lexicon_path, "lexicon.tsv or saliency.jsonl (built on the fly if absent)");
    ablate->add_option("--split", split, "Evaluation split");
    ablate->add_flag("--final", use_last, "Evaluate the final epoch instead of the best dev epoch");

    auto* sweep = app.add_subcommand("sweep-alpha", "Train once per alpha value and tabulate");
    add_shared(sweep, f);
    sweep->add_option("--data", data, "Dataset manifest")->required();
    sweep->add_option("--lexicon", lexicon_path, "lexicon.tsv or saliency.jsonl (built on the fly if absent)");
    sweep->add_option("--alphas", alphas_csv, "Comma-separated values (default 1.1,1.2,1.3,1.4,1.5)");
    sweep->add_option("--split", split, "Evaluation split");
    sweep->add_flag("--final", use_last, "Evaluate the final epoch instead of the best dev epoch");

    auto* report = app.add_subcommand("report", "Render a comparison table JSON as markdown, JSON and charts");
    add_shared(report, f);
    report->add_option("--input", input, "Comparison table JSON")->required();
    report->add_option("--format", format, "markdown, json, svg or all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << nlohmann::json{{"error", "usage_error"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        const fs::path out = f.out;
        if (synth->parsed()) {
            SyntheticCorpusConfig sc;
            if (f.seed) sc.seed = *f.seed;
            sc.train_per_language = synth_train;
            sc.dev_per_language = synth_dev;
            sc.test_per_language = synth_test;
            write_dataset(make_synthetic_corpus(sc), out);
            log_line(f, "wrote " + (out / "manifest.json").string());
        } else if (stats->parsed()) {
            const auto rep = dataset_stats(load_dataset(data));
            write_text(out / "stats.json", rep.to_json().dump(2) + "\n");
            write_text(out / "stats.md", rep.to_markdown());
            std::cout << rep.to_markdown();
        } else if (extract->parsed()) {
            const auto cfg = resolve_config(f);
            const auto ds = load_dataset(data);
            auto built = prepare_lexicon(ds, cfg);
            fs::create_directories(out);
            nlohmann::json hist = nlohmann::json::array();
            for (const auto& e : built.history)
                hist.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"train_accuracy", e.train_accuracy}});
            nlohmann::json summary{{"history", hist}};
            if (ds.has_split(Split::dev))
                summary["dev_accuracy"] = recognizer_accuracy(built.recognizer, ds.examples(Split::dev));
            for (const auto& lang : built.lexicon.languages())
                summary["lexicon_size"][lang] = built.lexicon.words(lang).size();
            write_text(out / "recognizer.json", built.recognizer.to_json().dump() + "\n");
            save_saliency_jsonl(built.saliencies, out / "saliency.jsonl");
            built.lexicon.save_tsv(out / "lexicon.tsv");
            write_text(out / "recognizer_summary.json", summary.dump(2) + "\n");
            std::cout << summary.dump(2) << '\n';
        } else if (train_cmd->parsed()) {
            const auto cfg = resolve_config(f);
            const auto ds = load_dataset(data);
            std::optional<LanguageLexicon> lex;
            if (cfg.adversarial && cfg.language_weighting) lex = obtain_lexicon(ds, cfg, lexicon_path, out, f);
            fs::create_directories(out);
            std::ofstream epochs_log(out / "epochs.jsonl");
            const auto result = train(ds, cfg, lex ? &*lex : nullptr, [&](const EpochReport& r) {
                epochs_log << r.to_json().dump() << '\n';
                epochs_log.flush();
                log_line(f, r.to_json().dump());
            });
            result.best.save(out / "best");
            result.last.save(out / "final");
            if (ds.has_split(Split::dev)) {
                auto ev = evaluate_predictions(result.best, ds, Split::dev);
                write_metrics(ev.report, out);
                save_predictions_tsv(ev.predictions, out / "predictions_dev.tsv");
                std::cout << ev.report.to_markdown();
            }
        } else if (eval_cmd->parsed()) {
            const auto ckpt = Checkpoint::load(checkpoint);
            const auto ds = load_dataset(data);
            const auto ev = evaluate_predictions(ckpt, ds, split_option(split));
            write_metrics(ev.report, out);
            save_predictions_tsv(ev.predictions, out / "predictions.tsv");
            std::cout << ev.report.to_markdown();
        } else if (predict_cmd->parsed()) {
            const auto ckpt = Checkpoint::load(checkpoint);
            std::ifstream in(input);
            if (!in) throw LoadError("cannot open input: " + input);
            fs::create_directories(out);
            std::ofstream pred_out(out / "predictions.tsv");
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (trim(line).empty()) continue;
                const auto tab = line.find('\t');
                if (tab == std::string::npos)
                    throw SchemaError(input + ":" + std::to_string(line_no) + ": expected language<TAB>text");
                const auto code = trim(line.substr(0, tab));
                const auto text = trim(line.substr(tab + 1));
                const auto head = ckpt.head_for(code);
                const auto tok = tokenize(ckpt.model.encoder().vocab(), text, ckpt.config.max_len);
                const auto label = ckpt.schemas[head].labels[ckpt.model.predict(tok, head)];
                pred_out << code << '\t' << text << '\t' << label << '\n';
            }
            log_line(f, "wrote " + (out / "predictions.tsv").string());
        } else if (ablate->parsed()) {
            const auto cfg = resolve_config(f);
            const auto ds = load_dataset(data);
            const auto lex = obtain_lexicon(ds, cfg, lexicon_path, out, f);
            ExperimentOptions opts{split_option(split), !use_last, [&](const std::string& m) { log_line(f, m); }};
            const auto res = run_ablation(ds, cfg, lex, opts);
            render_report(res.table, "all", out, "report", f.charts);
            std::cout << res.table.to_markdown();
        } else if (sweep->parsed()) {
            const auto cfg = resolve_config(f);
            const auto ds = load_dataset(data);
            std::vector<double> alphas = default_sweep_alphas();
            if (!alphas_csv.empty()) {
                alphas.clear();
                std::stringstream ss(alphas_csv);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    try {
                        alphas.push_back(std::stod(item));
                    } catch (const std::exception&) {
                        throw ConfigError("invalid alpha value '" + item + "'");
                    }
                }
            }
            const auto lex = obtain_lexicon(ds, cfg, lexicon_path, out, f);
            ExperimentOptions opts{split_option(split), !use_last, [&](const std::string& m) { log_line(f, m); }};
            const auto res = alpha_sweep(ds, cfg, lex, alphas, opts);
            const auto table = res.to_table();
            render_report(table, "all", out, "report", f.charts);
            std::cout << table.to_markdown();
        } else if (report->parsed()) {
            std::ifstream in(input);
            if (!in) throw LoadError("cannot open table: " + input);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("malformed table JSON " + input + ": " + e.what());
            }
            const auto table = ComparisonTable::from_json(j);
            const auto written = render_report(table, format, out, "report", f.charts);
            log_line(f, nlohmann::json{{"written", table_files(written)}}.dump());
            std::cout << table.to_markdown();
        }
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "internal_error"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
