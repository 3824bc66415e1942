#include <gtest/gtest.h>

#include <cmath>

#include <random>

#include "test_support.hpp"

using namespace lftest;

namespace {

TokenizedExample sample_tok(const Vocabulary& v) { return tokenize(v, "the cat sat ml_a unknown", 16); }

// Weighted sum over every hidden state; exercises all positions in backward.
double probe_loss(const TinyEncoder& enc, const TokenizedExample& tok, const Matrix& emb, const Matrix& w) {
    return enc.encode_embeddings(tok, emb, {}).hidden.cwiseProduct(w).sum();
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

}  // namespace

TEST(Embed, ZeroTablesGiveZeroTensor) {
    auto enc = tiny_encoder();
    for (std::size_t i : {TinyEncoder::kToken, TinyEncoder::kSegment, TinyEncoder::kPosition})
        enc->parameters()[i].setZero();
    const auto e = enc->embed(sample_tok(enc->vocab()));
    EXPECT_EQ(e.values.norm(), 0.0);
}

TEST(Embed, ToyTablesHandSum) {
    auto enc = tiny_encoder(Vocabulary(), tiny_config(2, 1, 1, 2, 2));
    auto& p = enc->parameters();
    p[TinyEncoder::kToken].setZero();
    p[TinyEncoder::kToken].row(Vocabulary::kCls) << 1, 0;
    p[TinyEncoder::kToken].row(Vocabulary::kSep) << 0, 1;
    p[TinyEncoder::kSegment].row(0) << 1, 1;
    p[TinyEncoder::kPosition] << 0, 2, 2, 0;
    const auto e = enc->embed(tokenize(enc->vocab(), "", 2));
    Matrix expected(2, 2);
    expected << 2, 3, 3, 2;
    EXPECT_EQ(e.values, expected);
}

TEST(Embed, ShapeAndVocabularyBound) {
    auto enc = tiny_encoder();
    const auto tok = sample_tok(enc->vocab());
    const auto e = enc->embed(tok);
    EXPECT_EQ(e.rows(), tok.size());
    EXPECT_EQ(e.dim(), enc->hidden_size());
    auto bad = tok;
    bad.ids[1] = static_cast<TokenId>(enc->vocab().size());
    EXPECT_THROW(enc->embed(bad), RangeError);
}

TEST(Encode, SentenceIsClsRow) {
    auto enc = tiny_encoder();
    const auto out = enc->encode(sample_tok(enc->vocab()));
    EXPECT_EQ(out.sentence, RowVector(out.hidden.row(0)));
}

TEST(Encode, DeterministicWithoutDropout) {
    auto enc = tiny_encoder();
    const auto tok = sample_tok(enc->vocab());
    EXPECT_EQ(enc->encode(tok).hidden, enc->encode(tok).hidden);
    auto other = tiny_encoder();
    EXPECT_EQ(other->encode(tok).hidden, enc->encode(tok).hidden);
}

TEST(Encode, DropoutFollowsSeed) {
    auto enc = tiny_encoder();
    const auto tok = sample_tok(enc->vocab());
    const ForwardOptions a{true, 0.3, 1}, b{true, 0.3, 2};
    EXPECT_EQ(enc->encode(tok, a).hidden, enc->encode(tok, a).hidden);
    EXPECT_NE(enc->encode(tok, a).hidden, enc->encode(tok, b).hidden);
    const ForwardOptions eval{false, 0.3, 1};
    EXPECT_EQ(enc->encode(tok, eval).hidden, enc->encode(tok).hidden);
}

TEST(Encode, PaddingIsInert) {
    auto enc = tiny_encoder();
    std::mt19937_64 rng(21);
    const std::vector<std::string> pool{"the", "cat", "sat", "ml_a", "kn_b", "zz", "en_x"};
    for (int trial = 0; trial < 50; ++trial) {
        std::string text;
        const auto n = rng() % 8;
        for (std::size_t i = 0; i < n; ++i) text += pool[rng() % pool.size()] + " ";
        const auto tok = tokenize(enc->vocab(), text, 12);
        const auto base = enc->encode(tok);
        const auto padded = enc->encode(pad_to(tok, tok.size() + 1 + rng() % (16 - tok.size())));
        EXPECT_LT((padded.sentence - base.sentence).cwiseAbs().maxCoeff(), 1e-6);
        const auto rows = static_cast<Eigen::Index>(tok.size());
        EXPECT_LT((padded.hidden.topRows(rows) - base.hidden).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Encode, TooLongSequenceRejected) {
    auto enc = tiny_encoder();
    auto tok = tokenize(enc->vocab(), "the cat", 16);
    tok = pad_to(tok, 17);
    EXPECT_THROW(enc->encode(tok), RangeError);
}

TEST(Encode, GradientWrtEmbeddingsMatchesFiniteDifferences) {
    auto enc = tiny_encoder();
    const auto tok = pad_to(sample_tok(enc->vocab()), 9);
    Matrix emb = enc->embed(tok).values;
    const Matrix w = random_matrix(emb.rows(), emb.cols(), 4);
    const auto out = enc->encode_embeddings(tok, emb, {});
    auto grads = enc->parameters().zeros_like();
    const Matrix d_emb = enc->backward(tok, out, w, grads);

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(emb.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto numeric = numeric_gradient(emb, idx, [&] { return probe_loss(*enc, tok, emb, w); });
    std::vector<double> analytic;
    for (auto i : idx) analytic.push_back(d_emb.data()[i]);
    EXPECT_LT(relative_error(analytic, numeric), 1e-4);
    // Padded rows receive no gradient.
    for (Eigen::Index t = static_cast<Eigen::Index>(sample_tok(enc->vocab()).size()); t < emb.rows(); ++t)
        EXPECT_EQ(d_emb.row(t).norm(), 0.0);
}

TEST(Encode, GradientWrtEveryParameterTensor) {
    auto enc = tiny_encoder();
    const auto tok = sample_tok(enc->vocab());
    const Matrix w = random_matrix(static_cast<Eigen::Index>(tok.size()), 8, 9);
    auto grads = enc->parameters().zeros_like();
    const auto out = enc->encode(tok);
    enc->backward(tok, out, w, grads);
    auto& params = enc->parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto idx = sample_indices(params[p].size(), 12, p);
        const auto numeric = numeric_gradient(params[p], idx, [&] { return enc->encode(tok).hidden.cwiseProduct(w).sum(); });
        std::vector<double> analytic;
        for (auto i : idx) analytic.push_back(grads[p].data()[i]);
        // The key bias adds the same q.b_k to every score in a row, so softmax
        // cancels it and its true gradient is zero; compare absolutely there.
        if (params.name(p).ends_with(".bk")) {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                EXPECT_LT(std::abs(analytic[i]), 1e-12) << params.name(p);
                EXPECT_LT(std::abs(numeric[i]), 1e-8) << params.name(p);
            }
            continue;
        }
        EXPECT_LT(relative_error(analytic, numeric), 1e-4) << params.name(p);
    }
}

TEST(Backends, SelectionAndRegistry) {
    const auto vocab = small_vocab();
    EXPECT_EQ(make_backend("tiny", vocab, tiny_config())->name(), "tiny");
    EXPECT_THROW(make_backend("pretrained:missing", vocab, tiny_config()), ConfigError);
    EXPECT_THROW(make_backend("bert", vocab, tiny_config()), ConfigError);
    register_pretrained_backend("fake", [](const Vocabulary& v, const nlohmann::json&) {
        return std::unique_ptr<EncoderBackend>(tiny_encoder(v, tiny_config(4, 1, 1, 4, 8)));
    });
    EXPECT_EQ(make_backend("pretrained:fake", vocab, tiny_config())->hidden_size(), 4u);
}

TEST(Backends, JsonRoundTripIsExact) {
    auto enc = tiny_encoder();
    const auto back = backend_from_json(enc->to_json());
    const auto tok = sample_tok(enc->vocab());
    EXPECT_EQ(back->encode(tok).hidden, enc->encode(tok).hidden);
    EXPECT_EQ(back->parameters(), enc->parameters());
}

TEST(Backends, InvalidConfig) {
    EXPECT_THROW(TinyEncoder(small_vocab(), tiny_config(6, 4)), ConfigError);
}
