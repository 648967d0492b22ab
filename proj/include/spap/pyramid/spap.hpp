#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/nn/activation.hpp"
#include "spap/nn/conv.hpp"
#include "spap/nn/init.hpp"
#include "spap/ops.hpp"

namespace spap::pyramid {

enum class CascadeOrder { coarse_to_fine, fine_to_coarse };

inline const char* to_string(CascadeOrder o) {
    return o == CascadeOrder::coarse_to_fine ? "coarse_to_fine" : "fine_to_coarse";
}

/// Attention gate: concat(f_a, f_b) → conv(hidden_kernel) to hidden channels
/// → lrelu(slope) → conv(out_kernel, same padding) to 1 channel → sigmoid.
struct AttentionGateSpec {
    std::size_t hidden_channels = 0;  // 0 means max(1, channels / 2)
    std::size_t hidden_kernel = 1;
    std::size_t out_kernel = 3;
    double slope = 0.1;

    std::size_t hidden_for(std::size_t channels) const {
        return hidden_channels ? hidden_channels : std::max<std::size_t>(1, channels / 2);
    }
    friend bool operator==(const AttentionGateSpec&, const AttentionGateSpec&) = default;
};

struct SpapConfig {
    std::vector<std::size_t> rates{3, 5, 7};
    bool include_rate1_3x3 = true;
    bool include_1x1 = true;
    CascadeOrder order = CascadeOrder::coarse_to_fine;
    std::size_t channels = 0;
    AttentionGateSpec gate;
    double gamma_init = 0.0;

    friend bool operator==(const SpapConfig&, const SpapConfig&) = default;

    void validate() const {
        for (std::size_t i = 0; i < rates.size(); ++i) {
            if (rates[i] < 2) throw std::invalid_argument("spap: atrous rates must be >= 2");
            if (i && rates[i] <= rates[i - 1]) throw std::invalid_argument("spap: atrous rates must be strictly increasing");
        }
        if (channels == 0) throw std::invalid_argument("spap: channels must be positive");
        if (branch_count() < 2) throw std::invalid_argument("spap: at least two branches are needed to fuse");
        if (gate.hidden_kernel % 2 == 0 || gate.out_kernel % 2 == 0) {
            throw std::invalid_argument("spap: gate kernels must be odd");
        }
    }

    std::size_t branch_count() const {
        return rates.size() + (include_rate1_3x3 ? 1 : 0) + (include_1x1 ? 1 : 0);
    }
};

/// One pyramid level: a k×k convolution at the given atrous rate.
struct Branch {
    std::size_t kernel;
    std::size_t rate;

    std::string label() const { return "C" + std::to_string(kernel) + "D" + std::to_string(rate); }
    /// Same-resolution padding rate·(k-1)/2.
    std::size_t pad() const { return rate * (kernel - 1) / 2; }
};

/// Branches in cascade order. Coarse-to-fine runs from the largest rate down
/// to the rate-1 3×3 and then the 1×1; fine-to-coarse is the reverse.
inline std::vector<Branch> cascade_branches(const SpapConfig& cfg) {
    std::vector<Branch> out;
    for (auto it = cfg.rates.rbegin(); it != cfg.rates.rend(); ++it) out.push_back({3, *it});
    if (cfg.include_rate1_3x3) out.push_back({3, 1});
    if (cfg.include_1x1) out.push_back({1, 1});
    if (cfg.order == CascadeOrder::fine_to_coarse) std::reverse(out.begin(), out.end());
    return out;
}

struct GateParams {
    nn::ConvParams hidden;
    nn::ConvParams out;
};

struct SpapParams {
    std::vector<nn::ConvParams> branches;  // cascade order
    std::vector<GateParams> gates;         // one per fusion, branches - 1
    Tensor gamma;                          // single learnable scalar

    static SpapParams init(const SpapConfig& cfg, Rng& rng) {
        cfg.validate();
        SpapParams p;
        const std::size_t c = cfg.channels;
        for (const auto& b : cascade_branches(cfg)) {
            p.branches.push_back(nn::make_conv(c, c, b.kernel, {1, b.pad(), b.rate}, rng));
        }
        const std::size_t hidden = cfg.gate.hidden_for(c);
        for (std::size_t i = 0; i + 1 < p.branches.size(); ++i) {
            GateParams gp;
            gp.hidden = nn::make_conv(2 * c, hidden, cfg.gate.hidden_kernel, {1, cfg.gate.hidden_kernel / 2, 1}, rng);
            gp.out = nn::make_conv(hidden, 1, cfg.gate.out_kernel, {1, cfg.gate.out_kernel / 2, 1}, rng);
            p.gates.push_back(gp);
        }
        p.gamma = Tensor::scalar(cfg.gamma_init, true);
        return p;
    }

    /// Zeroes every gate's final conv so all attention maps start at 0.5.
    void zero_gate_outputs() {
        for (auto& gp : gates) {
            std::fill(gp.out.weight.values().begin(), gp.out.weight.values().end(), 0.0);
            std::fill(gp.out.bias.values().begin(), gp.out.bias.values().end(), 0.0);
        }
    }

    std::vector<nn::ParamRef> parameters(const SpapConfig& cfg, const std::string& prefix) const {
        std::vector<nn::ParamRef> out;
        const auto order = cascade_branches(cfg);
        const auto g = nn::ParamGroup::delayed;
        for (std::size_t i = 0; i < branches.size(); ++i) {
            const std::string b = prefix + "branch." + order[i].label() + ".";
            out.push_back({b + "weight", branches[i].weight, g});
            out.push_back({b + "bias", branches[i].bias, g});
        }
        for (std::size_t i = 0; i < gates.size(); ++i) {
            const std::string b = prefix + "gate" + std::to_string(i) + ".";
            out.push_back({b + "hidden.weight", gates[i].hidden.weight, g});
            out.push_back({b + "hidden.bias", gates[i].hidden.bias, g});
            out.push_back({b + "out.weight", gates[i].out.weight, g});
            out.push_back({b + "out.bias", gates[i].out.bias, g});
        }
        out.push_back({prefix + "gamma", gamma, g});
        return out;
    }
};

/// Per-fusion record for attention inspection.
struct FusionRecord {
    std::size_t step = 0;       // 1-based fusion index
    std::string accumulated;    // label of the first branch folded into the accumulator
    std::string incoming;       // label of the branch merged at this step
    Tensor alpha;               // (N, 1, H, W)
};

struct SpapTrace {
    std::vector<FusionRecord> fusions;
};

/// α = sigmoid(gate(concat(f_a, f_b))), one channel, values in (0, 1).
inline Tensor attention_map(Graph& g, const Tensor& f_a, const Tensor& f_b, const GateParams& gate,
                            const AttentionGateSpec& spec) {
    if (f_a.shape() != f_b.shape()) {
        throw std::invalid_argument("attention_map: shape mismatch " + shape_str(f_a.shape()) + " vs " +
                                    shape_str(f_b.shape()));
    }
    Tensor h = nn::conv2d(g, ops::concat_channels(g, f_a, f_b), gate.hidden);
    h = ops::lrelu(g, h, spec.slope);
    return ops::sigmoid(g, nn::conv2d(g, h, gate.out));
}

/// f_a ⊙ α + f_b ⊙ (1 − α) with one shared 1-channel α: an elementwise convex
/// combination of the two maps.
inline Tensor atten_fuse(Graph& g, const Tensor& f_a, const Tensor& f_b, const Tensor& alpha) {
    if (f_a.shape() != f_b.shape()) {
        throw std::invalid_argument("atten_fuse: shape mismatch " + shape_str(f_a.shape()) + " vs " +
                                    shape_str(f_b.shape()));
    }
    Tensor keep = ops::mul(g, f_a, alpha);
    Tensor take = ops::mul(g, f_b, ops::shift(g, ops::scale(g, alpha, -1.0), 1.0));
    return ops::add(g, keep, take);
}

/// y = γ·o + (1 − γ)·x where o folds the branch outputs pairwise in cascade
/// order: acc ← atten_fuse(acc, f_next, attention_map(acc, f_next)).
inline Tensor spap_forward(Graph& g, const Tensor& x, const SpapConfig& cfg, const SpapParams& params,
                           SpapTrace* trace = nullptr) {
    if (cfg.branch_count() < 2) throw std::invalid_argument("spap: at least two branches are needed to fuse");
    if (x.rank() != 4 || x.dim(1) != cfg.channels) {
        throw std::invalid_argument("spap: input " + shape_str(x.shape()) + " does not have " +
                                    std::to_string(cfg.channels) + " channels");
    }
    const auto order = cascade_branches(cfg);
    if (params.branches.size() != order.size() || params.gates.size() + 1 != order.size()) {
        throw std::invalid_argument("spap: parameters do not match the branch configuration");
    }

    std::vector<Tensor> feats;
    feats.reserve(order.size());
    for (const auto& bp : params.branches) feats.push_back(nn::conv2d(g, x, bp));

    Tensor acc = feats[0];
    for (std::size_t i = 1; i < feats.size(); ++i) {
        Tensor alpha = attention_map(g, acc, feats[i], params.gates[i - 1], cfg.gate);
        if (trace) trace->fusions.push_back({i, order[0].label(), order[i].label(), alpha});
        acc = atten_fuse(g, acc, feats[i], alpha);
    }
    return ops::add(g, ops::scale(g, acc, params.gamma), ops::scale(g, x, ops::one_minus(g, params.gamma)));
}

/// Padding that keeps an atrous branch on the base conv's output grid:
/// pad + (rate − 1)(k − 1)/2.
inline std::size_t compensated_pad(std::size_t kernel, std::size_t pad, std::size_t rate) {
    const std::size_t extra = (rate - 1) * (kernel - 1);
    if (extra % 2 != 0) {
        throw std::invalid_argument("atrous branch: rate " + std::to_string(rate) + " with kernel " +
                                    std::to_string(kernel) + " cannot be padded onto the base grid");
    }
    return pad + extra / 2;
}

/// 0.5·base(x) + 0.5·mean_i(branch_i(x)).
inline Tensor atrous_disc_forward(Graph& g, const Tensor& x, const nn::ConvParams& base,
                                  const std::vector<nn::ConvParams>& branches) {
    if (branches.empty()) throw std::invalid_argument("atrous_disc: empty branch list");
    Tensor base_out = nn::conv2d(g, x, base);
    Tensor total;
    for (const auto& bp : branches) {
        Tensor y = nn::conv2d(g, x, bp);
        if (y.shape() != base_out.shape()) {
            throw std::invalid_argument("atrous_disc: branch output " + shape_str(y.shape()) +
                                        " does not match base output " + shape_str(base_out.shape()));
        }
        total = total.defined() ? ops::add(g, total, y) : y;
    }
    const double w = 0.5 / static_cast<double>(branches.size());
    return ops::add(g, ops::scale(g, base_out, 0.5), ops::scale(g, total, w));
}

}  // namespace spap::pyramid
