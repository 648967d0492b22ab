#pragma once

#include <stdexcept>

#include "spap/ops.hpp"

namespace spap::train {

/// −mean log σ(d_real) − mean log(1 − σ(d_fake)), from logits.
inline Tensor d_loss(Graph& g, const Tensor& d_real, const Tensor& d_fake) {
    const Tensor real_term = ops::mean(g, ops::log_sigmoid(g, d_real));
    const Tensor fake_term = ops::mean(g, ops::log_sigmoid(g, ops::scale(g, d_fake, -1.0)));
    return ops::scale(g, ops::add(g, real_term, fake_term), -1.0);
}

/// Non-saturating −mean log σ(d_fake) by default; `minimax` gives the literal
/// mean log(1 − σ(d_fake)) to be minimized.
inline Tensor g_loss(Graph& g, const Tensor& d_fake, bool minimax = false) {
    if (minimax) return ops::mean(g, ops::log_sigmoid(g, ops::scale(g, d_fake, -1.0)));
    return ops::scale(g, ops::mean(g, ops::log_sigmoid(g, d_fake)), -1.0);
}

struct GanLosses {
    Tensor loss_d;
    Tensor loss_g;
};

inline GanLosses gan_losses(Graph& g, const Tensor& d_real, const Tensor& d_fake, bool minimax = false) {
    return {d_loss(g, d_real, d_fake), g_loss(g, d_fake, minimax)};
}

/// mean |a − b|.
inline Tensor l1(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("l1: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    return ops::mean(g, ops::abs(g, ops::sub(g, a, b)));
}

}  // namespace spap::train
