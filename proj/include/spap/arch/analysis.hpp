#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/arch/spec.hpp"

namespace spap::arch {

struct RfRow {
    std::string label;
    LayerKind kind;
    std::size_t rf = 1;    // receptive field in input pixels (one side)
    std::size_t jump = 1;  // input-pixel distance between adjacent outputs
    FeatureShape shape;
};

struct RfReport {
    std::vector<RfRow> rows;
    std::size_t final_rf = 1;
    std::size_t final_jump = 1;
    std::string stopped_at;  // label of the fully connected layer that ended the walk, if any
};

/// Extra extent a SPAP block adds, in units of the incoming jump. The
/// attention gates see a neighbourhood of the running accumulator, so every
/// fusion widens the path by the gate kernels on top of the widest branch
/// folded in so far.
inline std::size_t spap_extent(const pyramid::SpapConfig& cfg) {
    const auto order = pyramid::cascade_branches(cfg);
    const std::size_t gate = (cfg.gate.hidden_kernel - 1) + (cfg.gate.out_kernel - 1);
    std::size_t acc = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t ext = order[i].rate * (order[i].kernel - 1);
        acc = i == 0 ? ext : std::max(acc, ext) + gate;
    }
    return acc;
}

/// Standard recurrence r ← r + (k_eff − 1)·j, j ← j·s, taking the widest path
/// through parallel branches. Stops at the first linear or reshape layer (the
/// field of the last spatial map). Norm layers count as pointwise.
inline RfReport receptive_field(const ArchSpec& spec) {
    for (const auto& l : spec.layers) {
        if (l.kind == LayerKind::deconv) {
            throw std::invalid_argument("receptive field is defined for conv stacks only; layer '" + l.label +
                                        "' is a deconv");
        }
    }
    RfReport rep;
    std::size_t r = 1, j = 1;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (l.kind == LayerKind::linear || l.kind == LayerKind::reshape) {
            rep.stopped_at = l.label;
            break;
        }
        switch (l.kind) {
            case LayerKind::conv:
                r += (nn::effective_kernel(l.k, l.d) - 1) * j;
                j *= l.s;
                break;
            case LayerKind::atrous_disc: {
                std::size_t widest = l.k;
                for (auto rate : l.rates) widest = std::max(widest, nn::effective_kernel(l.k, rate));
                r += (widest - 1) * j;
                j *= l.s;
                break;
            }
            case LayerKind::spap: r += spap_extent(l.spap) * j; break;
            case LayerKind::resblock: r += 4 * l.n * j; break;
            default: break;
        }
        rep.rows.push_back({l.label, l.kind, r, j, spec.shapes[i]});
    }
    rep.final_rf = r;
    rep.final_jump = j;
    return rep;
}

struct ParamRow {
    std::string label;
    LayerKind kind;
    std::uint64_t count = 0;
    FeatureShape shape;
};

struct ParamReport {
    std::vector<ParamRow> rows;
    std::uint64_t total = 0;
};

inline std::uint64_t conv_params(std::uint64_t k, std::uint64_t cin, std::uint64_t cout) { return k * k * cin * cout + cout; }

inline std::uint64_t spap_params(const pyramid::SpapConfig& cfg) {
    const std::uint64_t c = cfg.channels, h = cfg.gate.hidden_for(cfg.channels);
    std::uint64_t total = 1;  // gamma
    for (const auto& b : pyramid::cascade_branches(cfg)) total += conv_params(b.kernel, c, c);
    const std::uint64_t gates = cfg.branch_count() - 1;
    total += gates * (conv_params(cfg.gate.hidden_kernel, 2 * c, h) + conv_params(cfg.gate.out_kernel, h, 1));
    return total;
}

/// Exact learnable-parameter count per layer (weights, biases, norm affine,
/// SPAP gamma). Running statistics and spectral-norm vectors are buffers and
/// are not counted.
inline ParamReport param_count(const ArchSpec& spec) {
    ParamReport rep;
    FeatureShape in = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const FeatureShape out = spec.shapes[i];
        std::uint64_t n = 0;
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::deconv: n = conv_params(l.k, in.c, l.c); break;
            case LayerKind::atrous_disc: n = (1 + l.rates.size()) * conv_params(l.k, in.c, l.c); break;
            case LayerKind::linear: n = static_cast<std::uint64_t>(in.numel()) * l.c + l.c; break;
            case LayerKind::norm: n = 2 * in.c; break;
            case LayerKind::spap: n = spap_params(l.spap); break;
            case LayerKind::resblock:
                n = l.n * (2 * conv_params(3, in.c, in.c) + (l.norm ? 4 * in.c : 0));
                break;
            case LayerKind::activation:
            case LayerKind::reshape: break;
        }
        if (l.norm && l.kind != LayerKind::norm && l.kind != LayerKind::resblock) n += 2 * out.c;
        rep.rows.push_back({l.label, l.kind, n, out});
        rep.total += n;
        in = out;
    }
    return rep;
}

}  // namespace spap::arch
