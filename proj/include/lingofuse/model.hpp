#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingofuse/encoder.hpp"
#include "lingofuse/error.hpp"
#include "lingofuse/fusion.hpp"
#include "lingofuse/params.hpp"

namespace lingofuse {

/// Gradient buffers for every trainable tensor of a FrameworkModel.
struct Gradients {
    ParamSet encoder;
    ParamSet heads;

    Gradients& operator+=(const Gradients& o) {
        encoder += o.encoder;
        heads += o.heads;
        return *this;
    }
    double squared_norm() const { return encoder.squared_norm() + heads.squared_norm(); }
    void scale(double s) {
        encoder.scale(s);
        heads.scale(s);
    }
    bool all_finite() const { return encoder.all_finite() && heads.all_finite(); }
    bool operator==(const Gradients&) const = default;
};

/// One tokenized training/evaluation item routed to head `head`.
struct PreparedExample {
    TokenizedExample tok;
    std::size_t head = 0;
    std::size_t gold = 0;
};

/// Shared encoder with one affine head per task. With descriptors enabled,
/// head i reads h = [S; N_i^new]; otherwise h = S.
class FrameworkModel {
public:
    FrameworkModel(std::unique_ptr<EncoderBackend> encoder, std::vector<std::size_t> head_labels,
                   bool use_descriptors, std::uint64_t seed)
        : encoder_(std::move(encoder)), head_labels_(std::move(head_labels)), use_descriptors_(use_descriptors) {
        if (!encoder_) throw ConfigError("model requires an encoder backend");
        if (head_labels_.empty()) throw ConfigError("model requires at least one head");
        const auto m = encoder_->hidden_size();
        if (use_descriptors_)
            heads_.add("descriptors", DescriptorMatrix::gaussian(head_labels_.size(), m, seed ^ 0x9e3779b97f4a7c15ULL).values);
        const auto in = static_cast<Eigen::Index>(head_input_size());
        std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
        for (std::size_t h = 0; h < head_labels_.size(); ++h) {
            if (head_labels_[h] == 0) throw ConfigError("head " + std::to_string(h) + " has no labels");
            Matrix w(static_cast<Eigen::Index>(head_labels_[h]), in);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
            heads_.add("head" + std::to_string(h) + ".weight", std::move(w));
            heads_.add("head" + std::to_string(h) + ".bias", Matrix::Zero(static_cast<Eigen::Index>(head_labels_[h]), 1));
        }
    }

    FrameworkModel(const FrameworkModel& o)
        : encoder_(o.encoder_->clone()), heads_(o.heads_), head_labels_(o.head_labels_),
          use_descriptors_(o.use_descriptors_), classifier_dropout_(o.classifier_dropout_) {}
    FrameworkModel& operator=(const FrameworkModel& o) {
        if (this != &o) *this = FrameworkModel(o);
        return *this;
    }
    FrameworkModel(FrameworkModel&&) noexcept = default;
    FrameworkModel& operator=(FrameworkModel&&) noexcept = default;

    EncoderBackend& encoder() { return *encoder_; }
    const EncoderBackend& encoder() const { return *encoder_; }
    ParamSet& head_params() { return heads_; }
    const ParamSet& head_params() const { return heads_; }

    bool uses_descriptors() const { return use_descriptors_; }
    std::size_t num_heads() const { return head_labels_.size(); }
    std::size_t labels(std::size_t head) const { return head_labels_.at(head); }
    std::size_t head_input_size() const { return encoder_->hidden_size() * (use_descriptors_ ? 2 : 1); }

    /// Dropout applied to the classifier input h during training.
    double classifier_dropout() const { return classifier_dropout_; }
    void set_classifier_dropout(double p) { classifier_dropout_ = p; }

    Matrix& descriptors() {
        if (!use_descriptors_) throw ConfigError("model has no language descriptors");
        return heads_[0];
    }
    const Matrix& descriptors() const {
        if (!use_descriptors_) throw ConfigError("model has no language descriptors");
        return heads_[0];
    }
    Matrix& head_weight(std::size_t h) { return heads_[weight_slot(h)]; }
    Matrix& head_bias(std::size_t h) { return heads_[weight_slot(h) + 1]; }
    const Matrix& head_weight(std::size_t h) const { return heads_[weight_slot(h)]; }
    const Matrix& head_bias(std::size_t h) const { return heads_[weight_slot(h) + 1]; }

    Gradients zero_gradients() const { return {encoder_->parameters().zeros_like(), heads_.zeros_like()}; }

    /// Fused classifier input for head `head` given the sentence vector.
    RowVector fused_input(const RowVector& sentence, std::size_t head) const {
        if (!use_descriptors_) return sentence;
        return fuse(sentence, refine_descriptor(heads_[0], head).values);
    }

    RowVector logits(const TokenizedExample& tok, std::size_t head) const {
        check_head(head);
        const auto out = encoder_->encode(tok);
        return classify(fused_input(out.sentence, head), head_weight(head), head_bias(head));
    }

    RowVector probabilities(const TokenizedExample& tok, std::size_t head) const {
        return softmax(logits(tok, head));
    }

    std::size_t predict(const TokenizedExample& tok, std::size_t head) const {
        Eigen::Index best = 0;
        logits(tok, head).maxCoeff(&best);
        return static_cast<std::size_t>(best);
    }

    /// Forward + backward for one example. Gradients of `scale * loss` are
    /// accumulated into `grads`; `d_embeddings` (if given) receives
    /// d(scale * loss)/d(embedding tensor). `embeddings` overrides the lookup.
    /// Returns the unscaled loss.
    double accumulate(const PreparedExample& ex, const ForwardOptions& opts, double scale, Gradients& grads,
                      Matrix* d_embeddings = nullptr, const Matrix* embeddings = nullptr) const {
        check_head(ex.head);
        const Matrix emb = embeddings ? *embeddings : encoder_->embed(ex.tok).values;
        const auto out = encoder_->encode_embeddings(ex.tok, emb, opts);
        RefinedDescriptor refined;
        RowVector h;
        if (use_descriptors_) {
            refined = refine_descriptor(heads_[0], ex.head);
            h = fuse(out.sentence, refined.values);
        } else {
            h = out.sentence;
        }
        RowVector drop_mask;
        if (opts.dropout_active() && classifier_dropout_ > 0.0) {
            std::mt19937_64 rng(opts.dropout_seed ^ 0xd1b54a32d192ed03ULL);
            std::bernoulli_distribution keep(1.0 - classifier_dropout_);
            drop_mask.resize(h.size());
            for (Eigen::Index i = 0; i < h.size(); ++i) drop_mask(i) = keep(rng) ? 1.0 / (1.0 - classifier_dropout_) : 0.0;
            h = h.cwiseProduct(drop_mask);
        }
        const auto& w = head_weight(ex.head);
        const RowVector z = classify(h, w, head_bias(ex.head));
        const double value = loss(z, ex.gold);

        const RowVector dz = scale * loss_gradient(z, ex.gold);
        const auto slot = weight_slot(ex.head);
        grads.heads[slot].noalias() += dz.transpose() * h;
        grads.heads[slot + 1] += dz.transpose();
        RowVector dh = dz * w;
        if (drop_mask.size() > 0) dh = dh.cwiseProduct(drop_mask);
        const auto m = static_cast<Eigen::Index>(encoder_->hidden_size());
        if (use_descriptors_) refine_descriptor_backward(heads_[0], ex.head, refined, dh.tail(m), grads.heads[0]);
        Matrix d_hidden = Matrix::Zero(out.hidden.rows(), out.hidden.cols());
        d_hidden.row(0) = dh.head(m);
        Matrix d_emb = encoder_->backward(ex.tok, out, d_hidden, grads.encoder);
        if (d_embeddings) *d_embeddings = std::move(d_emb);
        return value;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["encoder"] = encoder_->to_json();
        j["head_labels"] = head_labels_;
        j["descriptors"] = use_descriptors_;
        j["classifier_dropout"] = classifier_dropout_;
        j["heads"] = heads_.to_json();
        return j;
    }

    static FrameworkModel from_json(const nlohmann::json& j) {
        FrameworkModel m(backend_from_json(j.at("encoder")), j.at("head_labels").get<std::vector<std::size_t>>(),
                         j.at("descriptors").get<bool>(), 0);
        m.classifier_dropout_ = j.value("classifier_dropout", 0.0);
        m.heads_.load_json(j.at("heads"));
        return m;
    }

    bool parameters_equal(const FrameworkModel& o) const {
        return encoder_->parameters() == o.encoder_->parameters() && heads_ == o.heads_;
    }

private:
    std::size_t weight_slot(std::size_t head) const { return (use_descriptors_ ? 1 : 0) + 2 * head; }
    void check_head(std::size_t head) const {
        if (head >= head_labels_.size())
            throw RangeError("no classification head " + std::to_string(head) + " (model has " +
                             std::to_string(head_labels_.size()) + ")");
    }

    std::unique_ptr<EncoderBackend> encoder_;
    ParamSet heads_;
    std::vector<std::size_t> head_labels_;
    bool use_descriptors_ = false;
    double classifier_dropout_ = 0.0;
};

/// splitmix64 step; used to derive per-example dropout seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct BatchGradients {
    double mean_loss = 0.0;
    Gradients grads;
    std::vector<Matrix> d_embeddings;  // per example, gradient of the mean loss
};

/// Gradients of the mean loss over `batch`. Example k uses dropout seed
/// mix_seed(step_seed, k), so two calls with the same seed see the same masks.
inline BatchGradients batch_gradients(const FrameworkModel& model, std::span<const PreparedExample* const> batch,
                                      ForwardOptions opts, std::uint64_t step_seed,
                                      const std::vector<Matrix>* embedding_overrides = nullptr) {
    if (batch.empty()) throw ConfigError("empty batch");
    BatchGradients out;
    out.grads = model.zero_gradients();
    out.d_embeddings.resize(batch.size());
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        opts.dropout_seed = mix_seed(step_seed, k);
        const Matrix* emb = embedding_overrides ? &(*embedding_overrides)[k] : nullptr;
        total += model.accumulate(*batch[k], opts, scale, out.grads, &out.d_embeddings[k], emb);
    }
    out.mean_loss = total / static_cast<double>(batch.size());
    return out;
}

}  // namespace lingofuse
