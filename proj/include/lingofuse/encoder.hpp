#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/error.hpp"
#include "lingofuse/params.hpp"
#include "lingofuse/tokenizer.hpp"

namespace lingofuse {

/// Summed input representation: row t is token(t) + segment(t) + position(t).
struct EmbeddingTensor {
    Matrix values;
    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

struct ForwardOptions {
    bool train = false;
    double dropout = 0.0;
    std::uint64_t dropout_seed = 0;

    bool dropout_active() const { return train && dropout > 0.0; }
};

struct ForwardCache {
    virtual ~ForwardCache() = default;
};

struct EncoderOutput {
    Matrix hidden;       // tokens x hidden_size
    RowVector sentence;  // CLS pooled, equals hidden.row(0)
    std::shared_ptr<const ForwardCache> cache;
};

/// Contract every encoder backend satisfies: tokenizer vocabulary, summed
/// input embeddings, CLS pooling, a backward pass that returns the gradient
/// with respect to the embedding tensor, and read/write access to the token
/// embedding table.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual std::string name() const = 0;
    virtual const Vocabulary& vocab() const = 0;
    virtual std::size_t hidden_size() const = 0;
    virtual std::size_t max_len() const = 0;

    virtual EmbeddingTensor embed(const TokenizedExample& tok) const = 0;

    /// Runs the layers on an explicit embedding tensor (normally `embed(tok)`).
    virtual EncoderOutput encode_embeddings(const TokenizedExample& tok, const Matrix& embeddings,
                                            const ForwardOptions& opts) const = 0;

    /// Accumulates parameter gradients into `grads` (layout of parameters())
    /// and returns dLoss/dEmbeddingTensor.
    virtual Matrix backward(const TokenizedExample& tok, const EncoderOutput& out, const Matrix& d_hidden,
                            ParamSet& grads) const = 0;

    virtual ParamSet& parameters() = 0;
    virtual const ParamSet& parameters() const = 0;
    virtual std::size_t token_embedding_index() const = 0;

    virtual std::unique_ptr<EncoderBackend> clone() const = 0;
    virtual nlohmann::json to_json() const = 0;

    EncoderOutput encode(const TokenizedExample& tok, const ForwardOptions& opts = {}) const {
        return encode_embeddings(tok, embed(tok).values, opts);
    }

    Matrix& token_embeddings() { return parameters()[token_embedding_index()]; }
    const Matrix& token_embeddings() const { return parameters()[token_embedding_index()]; }
};

struct TinyEncoderConfig {
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn = 128;
    std::size_t max_len = kDefaultMaxLen;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"hidden", hidden}, {"layers", layers}, {"heads", heads},
                {"ffn", ffn},       {"max_len", max_len}, {"seed", seed}};
    }

    static TinyEncoderConfig from_json(const nlohmann::json& j) {
        TinyEncoderConfig c;
        c.hidden = j.value("hidden", c.hidden);
        c.layers = j.value("layers", c.layers);
        c.heads = j.value("heads", c.heads);
        c.ffn = j.value("ffn", c.ffn);
        c.max_len = j.value("max_len", c.max_len);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    Matrix xhat;
    Vector inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, LayerNormCache& cache) {
    const auto n = x.rows();
    const auto d = static_cast<double>(x.cols());
    cache.xhat.resize(n, x.cols());
    cache.inv_std.resize(n);
    Matrix out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).sum() / d;
        const double var = (x.row(i).array() - mu).square().sum() / d;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.inv_std(i) = inv;
        cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
        out.row(i) = cache.xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    }
    return out;
}

inline Matrix layer_norm_backward(const Matrix& dy, const Matrix& gamma, const LayerNormCache& cache,
                                  Matrix& d_gamma, Matrix& d_beta) {
    const auto d = static_cast<double>(dy.cols());
    d_gamma.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    d_beta.row(0) += dy.colwise().sum();
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const RowVector dxhat = dy.row(i).cwiseProduct(gamma.row(0));
        const double m1 = dxhat.sum() / d;
        const double m2 = dxhat.dot(cache.xhat.row(i)) / d;
        dx.row(i) = cache.inv_std(i) * (dxhat.array() - m1 - cache.xhat.row(i).array() * m2);
    }
    return dx;
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::bernoulli_distribution keep(1.0 - p);
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? scale : 0.0;
    return m;
}

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace detail

/// Small post-LN transformer encoder (BERT layout) used as the reference
/// backend. Double precision throughout so gradients can be checked against
/// finite differences.
class TinyEncoder final : public EncoderBackend {
public:
    enum Slot : std::size_t { kToken = 0, kSegment, kPosition, kEmbGamma, kEmbBeta, kFirstLayer };
    enum LayerSlot : std::size_t {
        kWq = 0, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
        kLn1Gamma, kLn1Beta, kW1, kB1, kW2, kB2, kLn2Gamma, kLn2Beta, kLayerSlots
    };

    TinyEncoder(Vocabulary vocab, TinyEncoderConfig cfg) : vocab_(std::move(vocab)), cfg_(cfg) {
        if (cfg_.hidden == 0 || cfg_.heads == 0 || cfg_.hidden % cfg_.heads != 0)
            throw ConfigError("hidden size must be a positive multiple of the head count");
        if (cfg_.max_len < 2) throw ConfigError("max_len must be >= 2");
        const auto m = static_cast<Eigen::Index>(cfg_.hidden);
        const auto f = static_cast<Eigen::Index>(cfg_.ffn);
        std::mt19937_64 rng(cfg_.seed);
        const double emb_std = 1.0 / std::sqrt(static_cast<double>(m));
        params_.add("token_embeddings", detail::normal_matrix(static_cast<Eigen::Index>(vocab_.size()), m, emb_std, rng));
        params_.add("segment_embeddings", detail::normal_matrix(2, m, emb_std, rng));
        params_.add("position_embeddings", detail::normal_matrix(static_cast<Eigen::Index>(cfg_.max_len), m, emb_std, rng));
        params_.add("embedding_ln.gamma", Matrix::Ones(1, m));
        params_.add("embedding_ln.beta", Matrix::Zero(1, m));
        const double w_std = 1.0 / std::sqrt(static_cast<double>(m));
        const double w2_std = 1.0 / std::sqrt(static_cast<double>(f));
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (const char* n : {"wq", "wk", "wv", "wo"}) {
                params_.add(p + n, detail::normal_matrix(m, m, w_std, rng));
                params_.add(p + "b" + std::string(n + 1), Matrix::Zero(1, m));
            }
            params_.add(p + "ln1.gamma", Matrix::Ones(1, m));
            params_.add(p + "ln1.beta", Matrix::Zero(1, m));
            params_.add(p + "w1", detail::normal_matrix(m, f, w_std, rng));
            params_.add(p + "b1", Matrix::Zero(1, f));
            params_.add(p + "w2", detail::normal_matrix(f, m, w2_std, rng));
            params_.add(p + "b2", Matrix::Zero(1, m));
            params_.add(p + "ln2.gamma", Matrix::Ones(1, m));
            params_.add(p + "ln2.beta", Matrix::Zero(1, m));
        }
    }

    std::string name() const override { return "tiny"; }
    const Vocabulary& vocab() const override { return vocab_; }
    std::size_t hidden_size() const override { return cfg_.hidden; }
    std::size_t max_len() const override { return cfg_.max_len; }
    const TinyEncoderConfig& config() const { return cfg_; }

    ParamSet& parameters() override { return params_; }
    const ParamSet& parameters() const override { return params_; }
    std::size_t token_embedding_index() const override { return kToken; }

    std::unique_ptr<EncoderBackend> clone() const override { return std::make_unique<TinyEncoder>(*this); }

    nlohmann::json to_json() const override {
        return {{"backend", "tiny"}, {"config", cfg_.to_json()}, {"vocab", vocab_.to_json()}, {"weights", params_.to_json()}};
    }

    static std::unique_ptr<TinyEncoder> from_json(const nlohmann::json& j) {
        auto enc = std::make_unique<TinyEncoder>(Vocabulary::from_json(j.at("vocab")),
                                                 TinyEncoderConfig::from_json(j.at("config")));
        enc->params_.load_json(j.at("weights"));
        return enc;
    }

    EmbeddingTensor embed(const TokenizedExample& tok) const override {
        check_lengths(tok);
        const auto n = static_cast<Eigen::Index>(tok.size());
        EmbeddingTensor e{Matrix(n, static_cast<Eigen::Index>(cfg_.hidden))};
        const auto& tokens = params_[kToken];
        const auto& segments = params_[kSegment];
        const auto& positions = params_[kPosition];
        for (Eigen::Index t = 0; t < n; ++t) {
            const auto id = tok.ids[static_cast<std::size_t>(t)];
            const auto seg = tok.segment_ids[static_cast<std::size_t>(t)];
            const auto pos = tok.position_ids[static_cast<std::size_t>(t)];
            if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
                throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(vocab_.size()));
            if (seg < 0 || seg >= segments.rows()) throw RangeError("segment id out of range");
            if (pos < 0 || pos >= positions.rows()) throw RangeError("position id out of range");
            e.values.row(t) = tokens.row(id) + segments.row(seg) + positions.row(pos);
        }
        return e;
    }

    EncoderOutput encode_embeddings(const TokenizedExample& tok, const Matrix& embeddings,
                                    const ForwardOptions& opts) const override {
        check_lengths(tok);
        if (embeddings.rows() != static_cast<Eigen::Index>(tok.size()) ||
            embeddings.cols() != static_cast<Eigen::Index>(cfg_.hidden))
            throw ShapeError("embedding tensor shape does not match the tokenized example");
        auto cache = std::make_shared<Cache>();
        std::mt19937_64 rng(opts.dropout_seed);
        const bool drop = opts.dropout_active();

        Matrix x = detail::layer_norm(embeddings, params_[kEmbGamma], params_[kEmbBeta], cache->emb_ln);
        if (drop) {
            cache->emb_drop = detail::dropout_mask(x.rows(), x.cols(), opts.dropout, rng);
            x = x.cwiseProduct(cache->emb_drop);
        }
        cache->layers.resize(cfg_.layers);
        for (std::size_t l = 0; l < cfg_.layers; ++l)
            x = layer_forward(l, x, tok.attention_mask, opts, rng, cache->layers[l]);

        EncoderOutput out;
        out.sentence = x.row(0);
        out.hidden = std::move(x);
        out.cache = std::move(cache);
        return out;
    }

    Matrix backward(const TokenizedExample& tok, const EncoderOutput& out, const Matrix& d_hidden,
                    ParamSet& grads) const override {
        const auto* cache = dynamic_cast<const Cache*>(out.cache.get());
        if (cache == nullptr) throw ConfigError("encoder output was not produced by this backend");
        if (!grads.same_layout(params_)) throw ShapeError("gradient buffer layout mismatch");
        Matrix d = d_hidden;
        for (std::size_t l = cfg_.layers; l-- > 0;) d = layer_backward(l, d, cache->layers[l], grads);
        if (cache->emb_drop.size() > 0) d = d.cwiseProduct(cache->emb_drop);
        Matrix d_emb = detail::layer_norm_backward(d, params_[kEmbGamma], cache->emb_ln, grads[kEmbGamma], grads[kEmbBeta]);
        for (std::size_t t = 0; t < tok.size(); ++t) {
            const auto row = static_cast<Eigen::Index>(t);
            grads[kToken].row(tok.ids[t]) += d_emb.row(row);
            grads[kSegment].row(tok.segment_ids[t]) += d_emb.row(row);
            grads[kPosition].row(tok.position_ids[t]) += d_emb.row(row);
        }
        return d_emb;
    }

private:
    struct LayerCache {
        Matrix x, q, k, v, ctx;
        std::vector<Matrix> probs;
        Matrix attn_drop, ffn_drop;
        detail::LayerNormCache ln1, ln2;
        Matrix z1, pre, act;
    };

    struct Cache final : ForwardCache {
        detail::LayerNormCache emb_ln;
        Matrix emb_drop;
        std::vector<LayerCache> layers;
    };

    void check_lengths(const TokenizedExample& tok) const {
        if (tok.size() > cfg_.max_len)
            throw RangeError("sequence of " + std::to_string(tok.size()) + " tokens exceeds backend maximum " +
                             std::to_string(cfg_.max_len));
        if (tok.attention_mask.size() != tok.size() || tok.segment_ids.size() != tok.size() ||
            tok.position_ids.size() != tok.size())
            throw ShapeError("tokenized example has inconsistent field lengths");
        if (tok.ids.empty() || tok.ids[0] != Vocabulary::kCls || tok.attention_mask[0] == 0)
            throw ShapeError("tokenized example must start with an attended [CLS] token");
    }

    std::size_t slot(std::size_t layer, LayerSlot s) const { return kFirstLayer + layer * kLayerSlots + s; }
    const Matrix& p(std::size_t layer, LayerSlot s) const { return params_[slot(layer, s)]; }

    Matrix layer_forward(std::size_t l, const Matrix& x, const std::vector<std::uint8_t>& mask,
                         const ForwardOptions& opts, std::mt19937_64& rng, LayerCache& c) const {
        const auto n = x.rows();
        const auto heads = static_cast<Eigen::Index>(cfg_.heads);
        const auto dh = static_cast<Eigen::Index>(cfg_.hidden / cfg_.heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        c.x = x;
        c.q = (x * p(l, kWq)).rowwise() + p(l, kBq).row(0);
        c.k = (x * p(l, kWk)).rowwise() + p(l, kBk).row(0);
        c.v = (x * p(l, kWv)).rowwise() + p(l, kBv).row(0);
        c.ctx.resize(n, x.cols());
        c.probs.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index h = 0; h < heads; ++h) {
            Matrix s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
            Matrix& prob = c.probs[static_cast<std::size_t>(h)];
            prob.resize(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j < n; ++j)
                    if (mask[static_cast<std::size_t>(j)]) mx = std::max(mx, s(i, j));
                double z = 0.0;
                for (Eigen::Index j = 0; j < n; ++j) {
                    const double e = mask[static_cast<std::size_t>(j)] ? std::exp(s(i, j) - mx) : 0.0;
                    prob(i, j) = e;
                    z += e;
                }
                prob.row(i) /= z;
            }
            c.ctx.middleCols(h * dh, dh) = prob * c.v.middleCols(h * dh, dh);
        }
        Matrix a = (c.ctx * p(l, kWo)).rowwise() + p(l, kBo).row(0);
        if (opts.dropout_active()) {
            c.attn_drop = detail::dropout_mask(a.rows(), a.cols(), opts.dropout, rng);
            a = a.cwiseProduct(c.attn_drop);
        }
        c.z1 = detail::layer_norm(x + a, p(l, kLn1Gamma), p(l, kLn1Beta), c.ln1);
        c.pre = (c.z1 * p(l, kW1)).rowwise() + p(l, kB1).row(0);
        c.act = c.pre.unaryExpr([](double v) { return detail::gelu(v); });
        Matrix f = (c.act * p(l, kW2)).rowwise() + p(l, kB2).row(0);
        if (opts.dropout_active()) {
            c.ffn_drop = detail::dropout_mask(f.rows(), f.cols(), opts.dropout, rng);
            f = f.cwiseProduct(c.ffn_drop);
        }
        return detail::layer_norm(c.z1 + f, p(l, kLn2Gamma), p(l, kLn2Beta), c.ln2);
    }

    Matrix layer_backward(std::size_t l, const Matrix& d_out, const LayerCache& c, ParamSet& g) const {
        const auto heads = static_cast<Eigen::Index>(cfg_.heads);
        const auto dh = static_cast<Eigen::Index>(cfg_.hidden / cfg_.heads);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        Matrix d_y2 = detail::layer_norm_backward(d_out, p(l, kLn2Gamma), c.ln2, g[slot(l, kLn2Gamma)],
                                                  g[slot(l, kLn2Beta)]);
        Matrix d_f = c.ffn_drop.size() > 0 ? Matrix(d_y2.cwiseProduct(c.ffn_drop)) : d_y2;
        g[slot(l, kW2)].noalias() += c.act.transpose() * d_f;
        g[slot(l, kB2)].row(0) += d_f.colwise().sum();
        Matrix d_pre = d_f * p(l, kW2).transpose();
        d_pre = d_pre.cwiseProduct(c.pre.unaryExpr([](double v) { return detail::gelu_grad(v); }));
        g[slot(l, kW1)].noalias() += c.z1.transpose() * d_pre;
        g[slot(l, kB1)].row(0) += d_pre.colwise().sum();
        Matrix d_z1 = d_y2;
        d_z1.noalias() += d_pre * p(l, kW1).transpose();

        Matrix d_y1 = detail::layer_norm_backward(d_z1, p(l, kLn1Gamma), c.ln1, g[slot(l, kLn1Gamma)],
                                                  g[slot(l, kLn1Beta)]);
        Matrix d_x = d_y1;
        Matrix d_a = c.attn_drop.size() > 0 ? Matrix(d_y1.cwiseProduct(c.attn_drop)) : d_y1;
        g[slot(l, kWo)].noalias() += c.ctx.transpose() * d_a;
        g[slot(l, kBo)].row(0) += d_a.colwise().sum();
        Matrix d_ctx = d_a * p(l, kWo).transpose();

        Matrix d_q(c.q.rows(), c.q.cols()), d_k(c.k.rows(), c.k.cols()), d_v(c.v.rows(), c.v.cols());
        for (Eigen::Index h = 0; h < heads; ++h) {
            const Matrix& prob = c.probs[static_cast<std::size_t>(h)];
            const auto dc = d_ctx.middleCols(h * dh, dh);
            Matrix d_prob = dc * c.v.middleCols(h * dh, dh).transpose();
            d_v.middleCols(h * dh, dh) = prob.transpose() * dc;
            Matrix d_s = prob.cwiseProduct(
                (d_prob.colwise() - d_prob.cwiseProduct(prob).rowwise().sum()));
            d_s *= scale;
            d_q.middleCols(h * dh, dh) = d_s * c.k.middleCols(h * dh, dh);
            d_k.middleCols(h * dh, dh) = d_s.transpose() * c.q.middleCols(h * dh, dh);
        }
        g[slot(l, kWq)].noalias() += c.x.transpose() * d_q;
        g[slot(l, kBq)].row(0) += d_q.colwise().sum();
        g[slot(l, kWk)].noalias() += c.x.transpose() * d_k;
        g[slot(l, kBk)].row(0) += d_k.colwise().sum();
        g[slot(l, kWv)].noalias() += c.x.transpose() * d_v;
        g[slot(l, kBv)].row(0) += d_v.colwise().sum();
        d_x.noalias() += d_q * p(l, kWq).transpose();
        d_x.noalias() += d_k * p(l, kWk).transpose();
        d_x.noalias() += d_v * p(l, kWv).transpose();
        return d_x;
    }

    Vocabulary vocab_;
    TinyEncoderConfig cfg_;
    ParamSet params_;
};

// ---------------------------------------------------------------------------
// Backend selection: `tiny` or `pretrained:<name>`.

using BackendFactory = std::function<std::unique_ptr<EncoderBackend>(const Vocabulary&, const nlohmann::json&)>;

/// Registry for pretrained-encoder adapters. An adapter registered under
/// `<name>` is selected with `backend: pretrained:<name>`.
inline std::map<std::string, BackendFactory>& pretrained_registry() {
    static std::map<std::string, BackendFactory> registry;
    return registry;
}

inline void register_pretrained_backend(const std::string& name, BackendFactory factory) {
    pretrained_registry()[name] = std::move(factory);
}

inline std::unique_ptr<EncoderBackend> make_backend(const std::string& selector, const Vocabulary& vocab,
                                                    const TinyEncoderConfig& tiny_cfg,
                                                    const nlohmann::json& options = nlohmann::json::object()) {
    if (selector == "tiny") return std::make_unique<TinyEncoder>(vocab, tiny_cfg);
    const std::string prefix = "pretrained:";
    if (selector.rfind(prefix, 0) == 0) {
        const auto name = selector.substr(prefix.size());
        auto it = pretrained_registry().find(name);
        if (it == pretrained_registry().end())
            throw ConfigError("pretrained backend '" + name +
                              "' is not registered; link an adapter and call register_pretrained_backend()");
        return it->second(vocab, options);
    }
    throw ConfigError("unknown backend '" + selector + "' (expected tiny or pretrained:<name>)");
}

inline std::unique_ptr<EncoderBackend> backend_from_json(const nlohmann::json& j) {
    const auto backend = j.at("backend").get<std::string>();
    if (backend == "tiny") return TinyEncoder::from_json(j);
    throw LoadError("cannot restore encoder backend '" + backend + "' from a checkpoint");
}

}  // namespace lingofuse
