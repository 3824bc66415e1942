#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lingofuse/error.hpp"
#include "lingofuse/params.hpp"

namespace lingofuse {

/// Language descriptor matrix N (one row per language, width = encoder hidden size).
struct DescriptorMatrix {
    Matrix values;

    std::size_t languages() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

    static DescriptorMatrix gaussian(std::size_t languages, std::size_t dim, std::uint64_t seed, double std = 0.02) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, std);
        DescriptorMatrix n{Matrix(static_cast<Eigen::Index>(languages), static_cast<Eigen::Index>(dim))};
        for (Eigen::Index i = 0; i < n.values.size(); ++i) n.values.data()[i] = dist(rng);
        return n;
    }
};

struct RefinedDescriptor {
    RowVector weights;  // softmax(N_i N^T), length n
    RowVector values;   // weights * N, length m
};

inline RowVector softmax(const RowVector& z) {
    const double mx = z.maxCoeff();
    RowVector e = (z.array() - mx).exp().matrix();
    return e / e.sum();
}

/// N_i^new = softmax(N_i N^T) N. No temperature scaling inside the softmax.
inline RefinedDescriptor refine_descriptor(const Matrix& n, std::size_t i) {
    if (i >= static_cast<std::size_t>(n.rows()))
        throw RangeError("language index " + std::to_string(i) + " out of range for " + std::to_string(n.rows()) +
                         " descriptors");
    const auto row = static_cast<Eigen::Index>(i);
    RefinedDescriptor r;
    r.weights = softmax((n * n.row(row).transpose()).transpose());
    // w N written as N_i + w (N - 1 N_i); equal since the weights sum to one, and
    // exact when every row equals N_i.
    r.values = n.row(row) + r.weights * (n.rowwise() - n.row(row));
    return r;
}

inline RefinedDescriptor refine_descriptor(const DescriptorMatrix& n, std::size_t i) {
    return refine_descriptor(n.values, i);
}

/// Accumulates dLoss/dN given dLoss/dN_i^new.
inline void refine_descriptor_backward(const Matrix& n, std::size_t i, const RefinedDescriptor& r,
                                       const RowVector& d_values, Matrix& d_n) {
    const auto row = static_cast<Eigen::Index>(i);
    // values = w N
    d_n.noalias() += r.weights.transpose() * d_values;
    const RowVector d_w = (n * d_values.transpose()).transpose();
    // w = softmax(s)
    const double dot = d_w.dot(r.weights);
    const RowVector d_s = r.weights.cwiseProduct((d_w.array() - dot).matrix());
    // s_j = N_j . N_i
    d_n.noalias() += d_s.transpose() * n.row(row);
    d_n.row(row).noalias() += d_s * n;
}

/// h = [S; d]
inline RowVector fuse(const RowVector& sentence, const RowVector& descriptor) {
    if (sentence.size() != descriptor.size())
        throw ShapeError("sentence vector (" + std::to_string(sentence.size()) + ") and descriptor (" +
                         std::to_string(descriptor.size()) + ") differ in dimension");
    RowVector h(sentence.size() + descriptor.size());
    h << sentence, descriptor;
    return h;
}

/// One affine head per task/language: logits = W h + b.
struct HeadParams {
    Matrix weight;  // labels x input
    Matrix bias;    // labels x 1

    std::size_t labels() const { return static_cast<std::size_t>(weight.rows()); }
};

inline RowVector classify(const RowVector& h, const Matrix& weight, const Matrix& bias) {
    if (h.size() != weight.cols())
        throw ShapeError("fused vector has " + std::to_string(h.size()) + " entries, head expects " +
                         std::to_string(weight.cols()));
    return (weight * h.transpose() + bias).transpose();
}

inline RowVector classify(const RowVector& h, const HeadParams& head) { return classify(h, head.weight, head.bias); }

/// Negative log-likelihood of `gold` under softmax(logits).
inline double loss(const RowVector& logits, std::size_t gold) {
    if (gold >= static_cast<std::size_t>(logits.size()))
        throw RangeError("gold index " + std::to_string(gold) + " outside " + std::to_string(logits.size()) +
                         " classes");
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    return lse - logits(static_cast<Eigen::Index>(gold));
}

/// d loss / d logits = softmax(logits) - onehot(gold)
inline RowVector loss_gradient(const RowVector& logits, std::size_t gold) {
    if (gold >= static_cast<std::size_t>(logits.size())) throw RangeError("gold index out of range");
    RowVector g = softmax(logits);
    g(static_cast<Eigen::Index>(gold)) -= 1.0;
    return g;
}

}  // namespace lingofuse
