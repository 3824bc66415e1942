#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "lingofuse/config.hpp"
#include "lingofuse/error.hpp"
#include "lingofuse/lexicon.hpp"
#include "lingofuse/model.hpp"
#include "lingofuse/params.hpp"
#include "lingofuse/tokenizer.hpp"

namespace lingofuse {

/// Per-token perturbation weight.
struct AlphaMap {
    std::vector<double> weights;
    std::size_t size() const { return weights.size(); }
    bool operator==(const AlphaMap&) const = default;
};

/// Tokens of words in `specific_words` get alpha_specific; everything else,
/// including [CLS], [SEP] and padding, gets alpha_other.
inline AlphaMap build_alpha_map(const TokenizedExample& tok, const std::unordered_set<std::string>& specific_words,
                                const PerturbationConfig& cfg) {
    AlphaMap a{std::vector<double>(tok.size(), cfg.alpha_other)};
    for (std::size_t w = 0; w < tok.num_words(); ++w) {
        if (!specific_words.count(tok.words[w])) continue;
        const auto r = tok.word_alignment[w];
        for (std::size_t t = r.begin; t < r.end; ++t) a.weights[t] = cfg.alpha_specific;
    }
    return a;
}

/// Looks the words up in the per-language aggregate, or in the sentence's own
/// retained list when `per_sentence` is set.
inline AlphaMap build_alpha_map(const TokenizedExample& tok, const LanguageLexicon& lexicon, const std::string& language,
                                const std::string& text, const PerturbationConfig& cfg, bool per_sentence = false) {
    if (!per_sentence) return build_alpha_map(tok, lexicon.word_set(language), cfg);
    std::unordered_set<std::string> words;
    if (const auto* s = lexicon.sentence(language, text))
        for (const auto& r : s->retained) words.insert(r.word);
    return build_alpha_map(tok, words, cfg);
}

/// g: per-example blocks of per-token gradient rows. The L2 norm is taken over
/// the concatenation of all blocks.
struct GradientTensor {
    std::vector<Matrix> blocks;

    double norm() const {
        double acc = 0.0;
        for (const auto& b : blocks) acc += b.squaredNorm();
        return std::sqrt(acc);
    }
};

struct PerturbationTensor {
    std::vector<Matrix> blocks;
    bool degenerate = false;  // set when ||g|| == 0; all blocks are then zero
};

/// r^t = alpha_t * epsilon * g^t / ||g||_2
inline PerturbationTensor perturbation(const GradientTensor& g, std::span<const AlphaMap> alpha, double epsilon) {
    if (g.blocks.size() != alpha.size())
        throw ShapeError("gradient has " + std::to_string(g.blocks.size()) + " blocks but " +
                         std::to_string(alpha.size()) + " alpha maps were given");
    for (std::size_t b = 0; b < g.blocks.size(); ++b)
        if (static_cast<std::size_t>(g.blocks[b].rows()) != alpha[b].size())
            throw ShapeError("alpha map " + std::to_string(b) + " has " + std::to_string(alpha[b].size()) +
                             " entries for " + std::to_string(g.blocks[b].rows()) + " tokens");
    PerturbationTensor r;
    const double norm = g.norm();
    r.degenerate = !(norm > 0.0);
    r.blocks.reserve(g.blocks.size());
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
        Matrix block = Matrix::Zero(g.blocks[b].rows(), g.blocks[b].cols());
        if (!r.degenerate)
            for (Eigen::Index t = 0; t < block.rows(); ++t)
                block.row(t) = (alpha[b].weights[static_cast<std::size_t>(t)] * epsilon / norm) * g.blocks[b].row(t);
        r.blocks.push_back(std::move(block));
    }
    return r;
}

inline PerturbationTensor perturbation(const GradientTensor& g, const AlphaMap& alpha, double epsilon) {
    return perturbation(g, std::span<const AlphaMap>(&alpha, 1), epsilon);
}

/// Adds each r^t to the token-embedding row of token t and restores the
/// touched rows on destruction. restore() verifies the table hash.
class EmbeddingPerturbationGuard {
public:
    EmbeddingPerturbationGuard(Matrix& table, std::span<const PreparedExample* const> batch, const PerturbationTensor& r)
        : table_(table), hash_(byte_hash(table)) {
        for (std::size_t b = 0; b < batch.size(); ++b)
            for (auto id : batch[b]->tok.ids)
                if (!saved_.count(id)) saved_.emplace(id, table_.row(id));
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& ids = batch[b]->tok.ids;
            for (std::size_t t = 0; t < ids.size(); ++t) table_.row(ids[t]) += r.blocks[b].row(static_cast<Eigen::Index>(t));
        }
    }

    EmbeddingPerturbationGuard(const EmbeddingPerturbationGuard&) = delete;
    EmbeddingPerturbationGuard& operator=(const EmbeddingPerturbationGuard&) = delete;

    ~EmbeddingPerturbationGuard() {
        if (!restored_) put_back();
    }

    void restore() {
        put_back();
        if (byte_hash(table_) != hash_)
            throw IntegrityError("token embedding table differs from its snapshot after restore");
    }

private:
    void put_back() {
        for (const auto& [id, row] : saved_) table_.row(id) = row;
        restored_ = true;
    }

    Matrix& table_;
    std::uint64_t hash_;
    std::map<TokenId, RowVector> saved_;
    bool restored_ = false;
};

struct AdversarialStepResult {
    double clean_loss = 0.0;
    double adversarial_loss = 0.0;
    Gradients grads;  // clean + adversarial (or adversarial only)
    bool degenerate_gradient = false;
};

/// Clean forward/backward, perturb the embedding rows of the batch's tokens
/// along the weighted normalized gradient, adversarial forward/backward with
/// the same dropout masks, then restore the table bit-exactly.
inline AdversarialStepResult adversarial_step(FrameworkModel& model, std::span<const PreparedExample* const> batch,
                                              std::span<const AlphaMap> alpha, const PerturbationConfig& cfg,
                                              const ForwardOptions& opts, std::uint64_t step_seed,
                                              bool adversarial_only_grad = false) {
    cfg.validate();
    if (alpha.size() != batch.size()) throw ShapeError("one alpha map is required per batch example");
    AdversarialStepResult res;
    auto clean = batch_gradients(model, batch, opts, step_seed);
    res.clean_loss = clean.mean_loss;

    GradientTensor g{std::move(clean.d_embeddings)};
    const auto r = perturbation(g, alpha, cfg.epsilon);
    res.degenerate_gradient = r.degenerate;

    BatchGradients adv;
    {
        EmbeddingPerturbationGuard guard(model.encoder().token_embeddings(), batch, r);
        adv = batch_gradients(model, batch, opts, step_seed);
        guard.restore();
    }
    res.adversarial_loss = adv.mean_loss;
    if (adversarial_only_grad) {
        res.grads = std::move(adv.grads);
    } else {
        res.grads = std::move(clean.grads);
        res.grads += adv.grads;
    }
    return res;
}

}  // namespace lingofuse
