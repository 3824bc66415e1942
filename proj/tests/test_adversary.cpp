#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace lftest;

namespace {

std::vector<PreparedExample> toy_batch(const FrameworkModel& model) {
    const auto& v = model.encoder().vocab();
    return {{tokenize(v, "the cat sat the", 16), 0, 1},
            {tokenize(v, "ml_a ml_b en_x unknownword", 16), 1, 2},
            {tokenize(v, "ta_a ta_c en_y", 16), 2, 0}};
}

std::vector<const PreparedExample*> pointers(const std::vector<PreparedExample>& v) {
    std::vector<const PreparedExample*> out;
    for (const auto& e : v) out.push_back(&e);
    return out;
}

std::vector<AlphaMap> alphas_for(const std::vector<PreparedExample>& batch, const std::unordered_set<std::string>& words,
                                 const PerturbationConfig& cfg) {
    std::vector<AlphaMap> out;
    for (const auto& e : batch) out.push_back(build_alpha_map(e.tok, words, cfg));
    return out;
}

double max_abs_diff(const Gradients& a, const Gradients& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.encoder.size(); ++i)
        m = std::max(m, (a.encoder[i] - b.encoder[i]).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < a.heads.size(); ++i) m = std::max(m, (a.heads[i] - b.heads[i]).cwiseAbs().maxCoeff());
    return m;
}

}  // namespace

TEST(AlphaMap, EmptyLexiconIsUniform) {
    const auto tok = tokenize(small_vocab(), "the cat sat", 16);
    const PerturbationConfig cfg;
    const auto a = build_alpha_map(tok, LanguageLexicon(), "ml", "the cat sat", cfg);
    EXPECT_EQ(a.weights, std::vector<double>(tok.size(), 1.0));
}

TEST(AlphaMap, SpecificWordGetsAlphaSpecific) {
    const auto vocab = Vocabulary::build(std::vector<std::string>{"x y z"});
    const auto tok = tokenize(vocab, "x y z", 16);
    const auto a = build_alpha_map(tok, {"y"}, PerturbationConfig());
    EXPECT_EQ(a.weights, (std::vector<double>{1.0, 1.0, 1.5, 1.0, 1.0}));
}

TEST(AlphaMap, MultiTokenWordAllTokensWeighted) {
    const auto vocab = Vocabulary::build(std::vector<std::string>{"ab cd"});
    const auto tok = tokenize(vocab, "ab dcba", 16);
    ASSERT_EQ(tok.word_alignment[1].size(), 4u);
    const auto a = build_alpha_map(tok, {"dcba"}, PerturbationConfig());
    EXPECT_EQ(a.weights, (std::vector<double>{1.0, 1.0, 1.5, 1.5, 1.5, 1.5, 1.0}));
}

TEST(AlphaMap, PerSentenceReadingUsesOwnRetainedWords) {
    const auto vocab = Vocabulary::build(std::vector<std::string>{"x y z w"});
    LanguageLexicon lex = extract_lexicon({{"ml", "x y", 1, {{1, "y", 0.2}}}, {"ml", "z w", 1, {{0, "z", 0.3}}}});
    const auto tok = tokenize(vocab, "x y", 16);
    const PerturbationConfig cfg;
    EXPECT_EQ(build_alpha_map(tok, lex, "ml", "x y", cfg, true).weights, (std::vector<double>{1, 1, 1.5, 1}));
    const auto other = tokenize(vocab, "z y", 16);
    // Aggregate: both z and y are specific. Per-sentence: unknown sentence, nothing is.
    EXPECT_EQ(build_alpha_map(other, lex, "ml", "z y", cfg).weights, (std::vector<double>{1, 1.5, 1.5, 1}));
    EXPECT_EQ(build_alpha_map(other, lex, "ml", "z y", cfg, true).weights, (std::vector<double>{1, 1, 1, 1}));
}

TEST(Perturbation, HandCase) {
    Matrix g(2, 2);
    g << 3, 0, 0, 4;
    const auto r = perturbation(GradientTensor{{g}}, AlphaMap{{1.5, 1.0}}, 1.0);
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.blocks[0](0, 0), 0.9, 1e-12);
    EXPECT_NEAR(r.blocks[0](0, 1), 0.0, 1e-12);
    EXPECT_NEAR(r.blocks[0](1, 0), 0.0, 1e-12);
    EXPECT_NEAR(r.blocks[0](1, 1), 0.8, 1e-12);
}

TEST(Perturbation, ZeroGradientIsDegenerate) {
    const auto r = perturbation(GradientTensor{{Matrix::Zero(3, 4)}}, AlphaMap{{1.5, 1.0, 1.0}}, 1.0);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.blocks[0].norm(), 0.0);
}

TEST(Perturbation, HomogeneousInEpsilon) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    Matrix g(5, 3);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = d(rng);
    const AlphaMap a{{1.0, 1.5, 1.0, 1.5, 1.2}};
    const auto r1 = perturbation(GradientTensor{{g}}, a, 0.7);
    const auto r2 = perturbation(GradientTensor{{g}}, a, 1.4);
    EXPECT_EQ(r2.blocks[0], 2.0 * r1.blocks[0]);
}

TEST(Perturbation, ShapeMismatch) {
    EXPECT_THROW(perturbation(GradientTensor{{Matrix::Ones(2, 2)}}, AlphaMap{{1.0}}, 1.0), ShapeError);
    std::vector<AlphaMap> two{AlphaMap{{1.0, 1.0}}, AlphaMap{{1.0, 1.0}}};
    EXPECT_THROW(perturbation(GradientTensor{{Matrix::Ones(2, 2)}}, two, 1.0), ShapeError);
}

TEST(Perturbation, NormIdentityDirectionAndUniformFgm) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int trial = 0; trial < 1000; ++trial) {
        GradientTensor g;
        std::vector<AlphaMap> alpha;
        const auto blocks = 1 + rng() % 4;
        const auto dim = static_cast<Eigen::Index>(1 + rng() % 6);
        for (std::size_t b = 0; b < blocks; ++b) {
            const auto rows = static_cast<Eigen::Index>(1 + rng() % 5);
            Matrix m(rows, dim);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
            g.blocks.push_back(m);
            AlphaMap a;
            for (Eigen::Index t = 0; t < rows; ++t) a.weights.push_back(u(rng));
            alpha.push_back(a);
        }
        const double eps = u(rng);
        const auto r = perturbation(g, alpha, eps);
        const double gn = g.norm();
        for (std::size_t b = 0; b < blocks; ++b)
            for (Eigen::Index t = 0; t < g.blocks[b].rows(); ++t) {
                const double expected = alpha[b].weights[static_cast<std::size_t>(t)] * eps * g.blocks[b].row(t).norm() / gn;
                EXPECT_NEAR(r.blocks[b].row(t).norm(), expected, 1e-12 * std::max(1.0, expected));
                const double cosine = r.blocks[b].row(t).dot(g.blocks[b].row(t)) /
                                      (r.blocks[b].row(t).norm() * g.blocks[b].row(t).norm());
                EXPECT_NEAR(cosine, 1.0, 1e-12);
            }
        // Uniform alpha reduces to plain FGM: eps * g / ||g||.
        std::vector<AlphaMap> uniform;
        for (const auto& blk : g.blocks) uniform.push_back(AlphaMap{std::vector<double>(static_cast<std::size_t>(blk.rows()), 1.0)});
        const auto plain = perturbation(g, uniform, eps);
        for (std::size_t b = 0; b < blocks; ++b)
            EXPECT_LT((plain.blocks[b] - eps * g.blocks[b] / gn).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(EmbeddingGuard, RestoresTouchedRows) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    auto& table = model.encoder().token_embeddings();
    const Matrix before = table;
    PerturbationTensor r;
    for (const auto& e : batch) r.blocks.push_back(Matrix::Ones(static_cast<Eigen::Index>(e.tok.size()), table.cols()));
    {
        EmbeddingPerturbationGuard guard(table, ptrs, r);
        EXPECT_NE(table, before);
        // "the" occurs twice in the first sentence: its row receives both perturbations.
        const auto the = *model.encoder().vocab().find("the");
        EXPECT_NEAR((table.row(the) - before.row(the)).maxCoeff(), 2.0, 1e-12);
        guard.restore();
        EXPECT_EQ(byte_hash(table), byte_hash(before));
    }
    {
        EmbeddingPerturbationGuard guard(table, ptrs, r);
    }  // destructor restores as well
    EXPECT_EQ(table, before);
}

TEST(EmbeddingGuard, DetectsForeignModification) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    auto& table = model.encoder().token_embeddings();
    PerturbationTensor r;
    for (const auto& e : batch) r.blocks.push_back(Matrix::Zero(static_cast<Eigen::Index>(e.tok.size()), table.cols()));
    EmbeddingPerturbationGuard guard(table, ptrs, r);
    const auto untouched = *model.encoder().vocab().find("kn_a");
    table(untouched, 0) += 1.0;
    EXPECT_THROW(guard.restore(), IntegrityError);
}

TEST(AdversarialStep, ZeroEpsilonDoublesCleanGradients) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    PerturbationConfig cfg;
    cfg.epsilon = 0.0;
    const auto alpha = alphas_for(batch, {"cat", "ml_a"}, cfg);
    for (const ForwardOptions opts : {ForwardOptions{}, ForwardOptions{true, 0.2, 0}}) {
        const auto clean = batch_gradients(model, ptrs, opts, 42);
        const auto step = adversarial_step(model, ptrs, alpha, cfg, opts, 42);
        EXPECT_EQ(step.adversarial_loss, step.clean_loss);
        EXPECT_EQ(step.clean_loss, clean.mean_loss);
        auto doubled = clean.grads;
        doubled.scale(2.0);
        EXPECT_TRUE(step.grads == doubled);
    }
}

TEST(AdversarialStep, EqualsSumOfIndependentPasses) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    const PerturbationConfig cfg;
    const auto alpha = alphas_for(batch, {"cat", "ml_b", "ta_a"}, cfg);
    const ForwardOptions opts{true, 0.1, 0};
    const auto step = adversarial_step(model, ptrs, alpha, cfg, opts, 9);

    // Recompute by hand: clean pass, perturbation, perturbed table, second pass.
    const auto clean = batch_gradients(model, ptrs, opts, 9);
    const auto r = perturbation(GradientTensor{clean.d_embeddings}, alpha, cfg.epsilon);
    FrameworkModel perturbed = model;
    auto& table = perturbed.encoder().token_embeddings();
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t t = 0; t < batch[b].tok.size(); ++t)
            table.row(batch[b].tok.ids[t]) += r.blocks[b].row(static_cast<Eigen::Index>(t));
    const auto adv = batch_gradients(perturbed, ptrs, opts, 9);
    auto sum = clean.grads;
    sum += adv.grads;
    EXPECT_LT(max_abs_diff(step.grads, sum), 1e-6);
    EXPECT_NEAR(step.adversarial_loss, adv.mean_loss, 1e-12);
    EXPECT_GT(step.adversarial_loss, step.clean_loss);  // ascent direction raises the loss

    const auto only = adversarial_step(model, ptrs, alpha, cfg, opts, 9, true);
    EXPECT_LT(max_abs_diff(only.grads, adv.grads), 1e-6);
}

TEST(AdversarialStep, TableIsByteIdenticalAfterEveryStep) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    const PerturbationConfig cfg;
    const auto alpha = alphas_for(batch, {"the", "en_x"}, cfg);
    const auto hash = byte_hash(model.encoder().token_embeddings());
    for (std::uint64_t s = 0; s < 100; ++s) {
        adversarial_step(model, ptrs, alpha, cfg, {true, 0.1, 0}, s);
        ASSERT_EQ(byte_hash(model.encoder().token_embeddings()), hash);
    }
}

TEST(AdversarialStep, ShapeErrors) {
    auto model = tiny_model();
    auto batch = toy_batch(model);
    const auto ptrs = pointers(batch);
    const PerturbationConfig cfg;
    std::vector<AlphaMap> short_alpha{AlphaMap{{1.0}}};
    EXPECT_THROW(adversarial_step(model, ptrs, short_alpha, cfg, {}, 0), ShapeError);
}
