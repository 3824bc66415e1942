#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace lftest;

namespace {

const MultilingualDataset& corpus() {
    static const auto ds = make_synthetic_corpus(small_corpus(120, 40, 40));
    return ds;
}

const LanguageLexicon& lexicon() {
    static const auto lex = prepare_lexicon(corpus(), fast_config(2)).lexicon;
    return lex;
}

}  // namespace

TEST(TrainConfig, DefaultsFollowPublishedSetup) {
    const TrainConfig c;
    EXPECT_EQ(c.learning_rate, 5e-5);
    EXPECT_EQ(c.dropout, 0.5);
    EXPECT_EQ(c.weight_decay, 0.001);
    EXPECT_EQ(c.optimizer, "adam");
    EXPECT_EQ(c.max_len, 128u);
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.perturbation.alpha_specific, 1.5);
    EXPECT_EQ(c.perturbation.alpha_other, 1.0);
    EXPECT_EQ(c.perturbation.epsilon, 1.0);
    EXPECT_EQ(c.epochs, 20u);
    EXPECT_EQ(c.grad_clip, 1.0);
    EXPECT_EQ(c.encoder.hidden, 64u);
    EXPECT_EQ(c.encoder.layers, 2u);
    EXPECT_EQ(c.encoder.heads, 4u);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
    auto c = fast_config(3);
    c.stop_at_dev_f1 = 0.9;
    c.perturbation.alpha_specific = 1.3;
    const auto back = TrainConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"learning_rat", 1.0}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"dropout", 1.5}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"optimizer", "sgd"}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"epsilon", -1.0}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"batch_size", "big"}}), ConfigError);
    const auto partial = TrainConfig::from_json(nlohmann::json{{"epochs", 4}, {"encoder", {{"hidden", 32}}}});
    EXPECT_EQ(partial.epochs, 4u);
    EXPECT_EQ(partial.encoder.hidden, 32u);
    EXPECT_EQ(partial.encoder.heads, 4u);
    EXPECT_EQ(partial.learning_rate, 5e-5);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
    auto cfg = fast_config(1);
    cfg.learning_rate = 0.0;
    const auto res = train(corpus(), cfg, &lexicon());
    // Rebuild the initial model exactly as train() does.
    std::vector<std::string> texts;
    for (const auto& ex : corpus().examples(Split::train)) texts.push_back(ex.text);
    auto tiny = cfg.encoder;
    tiny.max_len = cfg.max_len;
    tiny.seed = mix_seed(cfg.seed, 1);
    const FrameworkModel init(make_backend("tiny", Vocabulary::build(texts), tiny), {5, 5, 5}, true,
                              mix_seed(cfg.seed, 2));
    EXPECT_EQ(byte_hash(res.last.model.encoder().parameters()), byte_hash(init.encoder().parameters()));
    EXPECT_EQ(byte_hash(res.last.model.head_params()), byte_hash(init.head_params()));
}

TEST(Train, MissingLexiconIsConfigError) {
    EXPECT_THROW(train(corpus(), fast_config(1), nullptr), ConfigError);
    auto cfg = fast_config(1);
    cfg.language_weighting = false;
    EXPECT_NO_THROW(train(corpus(), cfg, nullptr));
}

TEST(Train, DeterministicEpochReports) {
    const auto a = train(corpus(), fast_config(2), &lexicon());
    const auto b = train(corpus(), fast_config(2), &lexicon());
    ASSERT_EQ(a.epochs.size(), 2u);
    EXPECT_EQ(a.epochs, b.epochs);
    EXPECT_TRUE(a.last.model.parameters_equal(b.last.model));
    auto other = fast_config(2);
    other.seed = 1;
    EXPECT_NE(train(corpus(), other, &lexicon()).epochs, a.epochs);
}

TEST(Train, LossDecreasesOverEpochs) {
    const auto res = train(corpus(), fast_config(6), &lexicon());
    ASSERT_EQ(res.epochs.size(), 6u);
    EXPECT_LT(res.epochs[5].mean_clean_loss, res.epochs[0].mean_clean_loss);
    EXPECT_TRUE(res.epochs[0].mean_adversarial_loss.has_value());
    EXPECT_TRUE(res.epochs[0].dev_average.has_value());
    EXPECT_EQ(res.epochs[0].dev_f1.size(), 3u);
}

TEST(Train, StopsOnceTargetReached) {
    auto cfg = fast_config(20);
    cfg.stop_at_dev_f1 = 0.0;
    const auto res = train(corpus(), cfg, &lexicon());
    EXPECT_EQ(res.epochs.size(), 1u);
}

TEST(Train, FreezeEncoderTouchesOnlyHeads) {
    auto cfg = fast_config(1);
    cfg.freeze_encoder = true;
    const auto res = train(corpus(), cfg, &lexicon());
    auto zero = cfg;
    zero.learning_rate = 0.0;
    const auto init = train(corpus(), zero, &lexicon());
    EXPECT_EQ(res.last.model.encoder().parameters(), init.last.model.encoder().parameters());
    EXPECT_FALSE(res.last.model.head_params() == init.last.model.head_params());
}

TEST(Train, OptionalModesRun) {
    auto cfg = fast_config(1);
    cfg.monolingual_batches = true;
    cfg.adversarial_only_grad = true;
    cfg.per_sentence_lexicon = true;
    const auto res = train(corpus(), cfg, &lexicon());
    EXPECT_TRUE(std::isfinite(res.epochs[0].mean_clean_loss));
}

TEST(Train, NonFiniteLossAborts) {
    auto cfg = fast_config(3);
    cfg.learning_rate = 1e300;
    cfg.weight_decay = 0.0;
    try {
        train(corpus(), cfg, &lexicon());
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("diagnostic"), std::string::npos);
    }
}

TEST(Evaluate, EchoingGoldScoresOne) {
    const auto& ds = corpus();
    const auto ev = evaluate_with([](const Example& ex, std::size_t) { return ex.label_index; }, ds.languages(),
                                  ds.schemas(), ds, Split::test);
    ASSERT_EQ(ev.report.languages.size(), 3u);
    for (const auto& l : ev.report.languages) EXPECT_EQ(l.weighted_f1, 1.0);
    EXPECT_EQ(ev.report.average(), 1.0);
    EXPECT_EQ(ev.predictions.size(), ds.examples(Split::test).size());
}

TEST(Evaluate, MatchesMetricOracleAndAverage) {
    const auto res = train(corpus(), fast_config(1), &lexicon());
    const auto ev = evaluate_predictions(res.last, corpus(), Split::test);
    double sum = 0.0;
    for (const auto& l : ev.report.languages) {
        std::vector<std::size_t> g, p;
        const auto& schema = corpus().schema(corpus().find_language(l.language).index);
        for (const auto& pr : ev.predictions) {
            if (pr.language != l.language) continue;
            g.push_back(*schema.find(pr.gold));
            p.push_back(*schema.find(pr.pred));
        }
        EXPECT_EQ(l.weighted_f1, weighted_f1(g, p, schema.size()));
        sum += l.weighted_f1;
    }
    EXPECT_DOUBLE_EQ(ev.report.average(), sum / 3.0);
    EXPECT_EQ(ev.report.provenance["learning_rate"], 1e-3);
    EXPECT_EQ(ev.report.provenance["weight_decay"], 0.001);
    EXPECT_EQ(ev.report.provenance["batch_size"], 32);
}

TEST(Evaluate, EmptySplitIsError) {
    auto cfg = small_corpus(30, 10, 0);
    const auto ds = make_synthetic_corpus(cfg);
    const auto res = train(ds, fast_config(1), &lexicon());
    EXPECT_THROW(evaluate_split(res.last, ds, Split::test), ConfigError);
}

TEST(Checkpoint, RoundTripReproducesMetrics) {
    TempDir dir;
    const auto res = train(corpus(), fast_config(2), &lexicon());
    res.best.save(dir / "best");
    const auto back = Checkpoint::load(dir / "best");
    EXPECT_TRUE(back.model.parameters_equal(res.best.model));
    EXPECT_EQ(back.epoch, res.best.epoch);
    EXPECT_EQ(back.config.to_json(), res.best.config.to_json());
    const auto a = evaluate_split(res.best, corpus(), Split::test);
    const auto b = evaluate_split(back, corpus(), Split::test);
    for (std::size_t i = 0; i < a.languages.size(); ++i)
        EXPECT_NEAR(a.languages[i].weighted_f1, b.languages[i].weighted_f1, 1e-6);
    EXPECT_THROW(Checkpoint::load(dir / "missing"), LoadError);
    write_file(dir / "bad" / "weights.json", "{\"version\": 99}");
    EXPECT_THROW(Checkpoint::load(dir / "bad"), LoadError);
}

TEST(Ablation, GridShapeAndBaselineIdentity) {
    auto base = fast_config(1);
    const auto res = run_ablation(corpus(), base, lexicon());
    ASSERT_EQ(res.table.rows.size(), 4u);
    EXPECT_EQ(res.table.columns.size(), 3u);
    for (std::size_t r = 0; r < 4; ++r) {
        EXPECT_EQ(res.table.rows[r].label, ablation_row_labels()[r]);
        for (double v : res.table.rows[r].values) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_NE(res.table.to_markdown().find("| Average |"), std::string::npos);

    auto plain = base;
    plain.adversarial = plain.language_weighting = plain.descriptors = false;
    const auto direct = evaluate_split(train(corpus(), plain).best, corpus(), Split::dev);
    for (std::size_t i = 0; i < direct.languages.size(); ++i)
        EXPECT_EQ(res.table.rows[0].values[i], direct.languages[i].weighted_f1);

    EXPECT_FALSE(ablation_config(base, 0).adversarial);
    EXPECT_TRUE(ablation_config(base, 1).adversarial);
    EXPECT_FALSE(ablation_config(base, 1).language_weighting);
    EXPECT_TRUE(ablation_config(base, 2).language_weighting);
    EXPECT_FALSE(ablation_config(base, 2).descriptors);
    EXPECT_TRUE(ablation_config(base, 3).descriptors);
}

TEST(AlphaSweep, DefaultsAndSingleValue) {
    EXPECT_EQ(default_sweep_alphas(), (std::vector<double>{1.1, 1.2, 1.3, 1.4, 1.5}));
    const auto res = alpha_sweep(corpus(), fast_config(1), lexicon(), {1.5});
    ASSERT_EQ(res.rows.size(), 1u);
    EXPECT_EQ(res.rows[0].alpha, 1.5);
    EXPECT_EQ(res.rows[0].f1.size(), 3u);
    auto one = fast_config(1);
    one.perturbation.alpha_specific = 1.5;
    const auto direct = evaluate_split(train(corpus(), one, &lexicon()).best, corpus(), Split::dev);
    EXPECT_EQ(res.rows[0].f1[0], direct.languages[0].weighted_f1);
    EXPECT_THROW(alpha_sweep(corpus(), fast_config(1), lexicon(), {}), ConfigError);
    EXPECT_THROW(alpha_sweep(corpus(), fast_config(1), lexicon(), {1.2, -1.0}), ConfigError);
}

TEST(Optimizer, ClipGlobalNorm) {
    auto model = tiny_model();
    auto g = model.zero_gradients();
    g.heads[1].setConstant(3.0);
    const double before = std::sqrt(g.squared_norm());
    EXPECT_EQ(clip_global_norm(g, 1.0), before);
    EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-12);
    auto small = model.zero_gradients();
    small.heads[1](0, 0) = 0.5;
    auto copy = small;
    clip_global_norm(small, 1.0);
    EXPECT_TRUE(small == copy);
}
