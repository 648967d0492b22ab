#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/graph.hpp"

namespace spap::nn {

enum class NormKind { batch, instance };

inline const char* to_string(NormKind k) { return k == NormKind::batch ? "batch" : "instance"; }

/// Per-channel affine normalization. Batch kind pools statistics over
/// (N, H, W) and tracks running estimates; instance kind pools over (H, W)
/// per sample and has no running state.
struct NormParams {
    NormKind kind = NormKind::batch;
    Tensor gamma_scale;  // (C)
    Tensor beta_shift;   // (C)
    Tensor running_mean; // (C), batch kind only
    Tensor running_var;  // (C), batch kind only
    double momentum = 0.9;
    double epsilon = 1e-5;

    static NormParams make(NormKind kind, std::size_t channels) {
        NormParams p;
        p.kind = kind;
        p.gamma_scale = Tensor::filled({channels}, 1.0, true);
        p.beta_shift = Tensor::zeros({channels}, true);
        if (kind == NormKind::batch) {
            p.running_mean = Tensor({channels});
            p.running_var = Tensor::filled({channels}, 1.0);
        }
        return p;
    }
};

/// Normalizes x (NCHW) then applies gamma_scale·x̂ + beta_shift. In batch
/// training mode the running statistics move by
/// r ← momentum·r + (1 - momentum)·batch_stat (unbiased variance).
inline Tensor normalize(Graph& g, const Tensor& x, NormParams& p, bool training) {
    if (x.rank() != 4) throw std::invalid_argument("normalize: input must be NCHW, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (p.gamma_scale.numel() != c || p.beta_shift.numel() != c) {
        throw std::invalid_argument("normalize: channel mismatch, input " + shape_str(x.shape()) + " vs params " +
                                    std::to_string(p.gamma_scale.numel()));
    }
    if (!(p.epsilon > 0.0)) throw std::invalid_argument("normalize: epsilon must be positive");

    const bool batch = p.kind == NormKind::batch;
    const bool use_running = batch && !training;
    // A group is one statistic: channel c (batch) or (sample, channel) (instance).
    const std::size_t groups = batch ? c : n * c;
    const std::size_t count = batch ? n * hw : hw;
    if (!use_running && count < 2) {
        throw std::invalid_argument("normalize: fewer than 2 elements per statistic for input " + shape_str(x.shape()));
    }

    auto xv = x.values();
    auto for_group = [&](std::size_t grp, auto&& fn) {
        if (batch) {
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t base = (s * c + grp) * hw;
                for (std::size_t i = 0; i < hw; ++i) fn(base + i);
            }
        } else {
            const std::size_t base = grp * hw;
            for (std::size_t i = 0; i < hw; ++i) fn(base + i);
        }
    };

    std::vector<double> mean(groups), inv_std(groups);
    for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t ch = grp % c;
        if (use_running) {
            mean[grp] = p.running_mean.values()[ch];
            inv_std[grp] = 1.0 / std::sqrt(p.running_var.values()[ch] + p.epsilon);
            continue;
        }
        double m = 0.0;
        for_group(grp, [&](std::size_t i) { m += xv[i]; });
        m /= static_cast<double>(count);
        double v = 0.0;
        for_group(grp, [&](std::size_t i) { v += (xv[i] - m) * (xv[i] - m); });
        v /= static_cast<double>(count);
        mean[grp] = m;
        inv_std[grp] = 1.0 / std::sqrt(v + p.epsilon);
        if (batch && training) {
            const double unbiased = v * static_cast<double>(count) / static_cast<double>(count - 1);
            auto rm = p.running_mean.values();
            auto rv = p.running_var.values();
            rm[ch] = p.momentum * rm[ch] + (1.0 - p.momentum) * m;
            rv[ch] = p.momentum * rv[ch] + (1.0 - p.momentum) * unbiased;
        }
    }

    Tensor xhat(x.shape());
    Tensor out(x.shape());
    {
        auto hv = xhat.values();
        auto ov = out.values();
        auto gv = p.gamma_scale.values();
        auto bv = p.beta_shift.values();
        for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t ch = grp % c;
            for_group(grp, [&](std::size_t i) {
                hv[i] = (xv[i] - mean[grp]) * inv_std[grp];
                ov[i] = gv[ch] * hv[i] + bv[ch];
            });
        }
    }

    const Tensor gamma = p.gamma_scale;
    return g.record(
        batch ? "batch_norm" : "instance_norm", {x, p.gamma_scale, p.beta_shift}, out,
        [=](std::span<const double> go, std::span<const std::span<double>> gi) {
            auto hv = xhat.values();
            auto gv = gamma.values();
            const double m = static_cast<double>(count);
            for (std::size_t grp = 0; grp < groups; ++grp) {
                const std::size_t ch = grp % c;
                double sum_g = 0.0, sum_gh = 0.0;
                auto visit = [&](auto&& fn) {
                    if (batch) {
                        for (std::size_t s = 0; s < n; ++s) {
                            const std::size_t base = (s * c + grp) * hw;
                            for (std::size_t i = 0; i < hw; ++i) fn(base + i);
                        }
                    } else {
                        for (std::size_t i = 0; i < hw; ++i) fn(grp * hw + i);
                    }
                };
                visit([&](std::size_t i) {
                    sum_g += go[i];
                    sum_gh += go[i] * hv[i];
                });
                if (!gi[1].empty()) gi[1][ch] += sum_gh;
                if (!gi[2].empty()) gi[2][ch] += sum_g;
                if (gi[0].empty()) continue;
                const double scale = gv[ch] * inv_std[grp];
                if (use_running) {
                    visit([&](std::size_t i) { gi[0][i] += scale * go[i]; });
                } else {
                    visit([&](std::size_t i) { gi[0][i] += scale * (go[i] - sum_g / m - hv[i] * sum_gh / m); });
                }
            }
        });
}

}  // namespace spap::nn
