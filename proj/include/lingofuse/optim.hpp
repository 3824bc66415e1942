#pragma once

#include <cmath>
#include <vector>

#include "lingofuse/error.hpp"
#include "lingofuse/model.hpp"
#include "lingofuse/params.hpp"

namespace lingofuse {

/// Adam with decoupled weight decay (p <- p - lr * wd * p before the Adam step).
class Adam {
public:
    Adam(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(FrameworkModel& model, const Gradients& grads, bool update_encoder = true) {
        if (t_ == 0) {
            m_ = model.zero_gradients();
            v_ = model.zero_gradients();
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        if (update_encoder) update(model.encoder().parameters(), grads.encoder, m_.encoder, v_.encoder, c1, c2);
        update(model.head_params(), grads.heads, m_.heads, v_.heads, c1, c2);
    }

    double learning_rate() const { return lr_; }
    long steps() const { return t_; }

private:
    void update(ParamSet& params, const ParamSet& grads, ParamSet& m, ParamSet& v, double c1, double c2) const {
        if (!params.same_layout(grads)) throw ShapeError("optimizer: gradient layout mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i].array();
            const auto g = grads[i].array();
            auto mi = m[i].array();
            auto vi = v[i].array();
            mi = beta1_ * mi + (1.0 - beta1_) * g;
            vi = beta2_ * vi + (1.0 - beta2_) * g.square();
            if (wd_ > 0.0) p -= (lr_ * wd_) * p;
            p -= lr_ * (mi / c1) / ((vi / c2).sqrt() + eps_);
        }
    }

    double lr_, wd_, beta1_, beta2_, eps_;
    long t_ = 0;
    Gradients m_, v_;
};

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
inline double clip_global_norm(Gradients& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
    return norm;
}

}  // namespace lingofuse
