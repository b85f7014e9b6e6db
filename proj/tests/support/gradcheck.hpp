#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gradflow/graph.hpp"
#include "gradflow/model.hpp"

namespace gradcheck {

using gradflow::DenseMatrix;

struct Result {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
    std::size_t skipped = 0;  ///< entries whose ±h step crossed an activation kink
};

/// Floor for the relative-error denominator so that vanishing gradients are
/// compared in absolute terms instead of amplifying round-off.
inline constexpr double kScaleFloor = 1e-6;

namespace detail {

inline double loss(const gradflow::Model& m, const gradflow::Graph& g, gradflow::Tape* keep = nullptr) {
    gradflow::Tape t = gradflow::forward(m, g);
    const double l = gradflow::masked_cross_entropy(t.logits, g.labels(), g.train_mask()).loss;
    if (keep) *keep = std::move(t);
    return l;
}

inline bool has_kink(gradflow::ActivationKind k) {
    return k == gradflow::ActivationKind::Relu || k == gradflow::ActivationKind::LeakyRelu;
}

inline bool same_signs(const gradflow::Tape& a, const gradflow::Tape& b) {
    for (std::size_t l = 0; l < a.pre.size(); ++l) {
        const auto va = a.pre[l].values();
        const auto vb = b.pre[l].values();
        for (std::size_t i = 0; i < va.size(); ++i) {
            if ((va[i] > 0.0) != (vb[i] > 0.0)) return false;
        }
    }
    return true;
}

}  // namespace detail

/// Compares the tape's parameter gradients for the masked training loss with
/// central differences of step `h`. Per parameter matrix the error is
/// max |analytic − numeric| / max(max |numeric|, kScaleFloor).
inline Result check_model(gradflow::Model model, const gradflow::Graph& g, double h = 1e-5) {
    gradflow::Tape base = gradflow::forward(model, g);
    const auto lr = gradflow::masked_cross_entropy(base.logits, g.labels(), g.train_mask());
    gradflow::backward(base, model, g, lr.grad);

    std::vector<std::pair<std::string, DenseMatrix*>> params;
    std::vector<const DenseMatrix*> analytic;
    params.emplace_back("input_proj", &model.input_proj);
    analytic.push_back(&base.grad_input_proj);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        params.emplace_back("W" + std::to_string(l), &model.layers[l]);
        analytic.push_back(&base.grad_w[l]);
    }
    params.emplace_back("readout", &model.readout);
    analytic.push_back(&base.grad_readout);

    const bool kinked = detail::has_kink(model.config.activation.kind);
    Result res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        DenseMatrix& w = *params[p].second;
        const DenseMatrix& a = *analytic[p];
        double diff = 0.0, scale = kScaleFloor;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double& x = w.values()[i];
            const double saved = x;
            gradflow::Tape up_t, down_t;
            x = saved + h;
            const double up = detail::loss(model, g, &up_t);
            x = saved - h;
            const double down = detail::loss(model, g, &down_t);
            x = saved;
            if (kinked && !(detail::same_signs(base, up_t) && detail::same_signs(base, down_t))) {
                ++res.skipped;
                continue;
            }
            const double num = (up - down) / (2.0 * h);
            diff = std::max(diff, std::abs(num - a.values()[i]));
            scale = std::max(scale, std::abs(num));
            ++res.checked;
        }
        const double rel = diff / scale;
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_param = params[p].first;
        }
    }
    return res;
}

}  // namespace gradcheck
