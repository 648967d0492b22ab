#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spap/arch/spec.hpp"
#include "spap/nn/checkpoint.hpp"
#include "spap/nn/init.hpp"
#include "spap/nn/spectral.hpp"

namespace spap::arch {

/// SPAP fusion traces keyed by layer label, in layer order.
struct ForwardTrace {
    std::vector<std::pair<std::string, pyramid::SpapTrace>> spap;
};

/// A weight that may be spectrally normalized on use.
struct SnWeight {
    std::string path;  // of the weight
    Tensor weight;
    std::optional<nn::SpectralState> sn;

    // Training mode advances the power iteration first.
    Tensor use(Graph& g, bool training) {
        if (!sn) return weight;
        if (training) nn::power_iterate(*sn, weight, sn->power_iters);
        return nn::apply_spectral_norm(g, weight, *sn);
    }

    /// Normalized weight after `iters` further warm-started power iterations
    /// on a private copy of u; the live state is untouched.
    Tensor settled(std::size_t iters) const {
        if (!sn) return weight.clone();
        nn::SpectralState s = *sn;
        s.u = sn->u.clone();
        nn::power_iterate(s, weight, iters);
        Graph g;
        return nn::apply_spectral_norm(g, weight, s).clone();
    }
};

/// Runnable instance of an ArchSpec. Parameters live under layer-label paths
/// ("conv3.weight", "spap0.gate1.out.bias", ...). Each layer draws its initial
/// values from its own seed stream `init/<scope>/<label>`, so adding a layer
/// leaves every other layer's initialization unchanged.
class Network {
   public:
    Network(ArchSpec spec, std::uint64_t seed, std::string scope = "")
        : spec_(std::move(spec)), scope_(scope.empty() ? spec_.name : std::move(scope)) {
        if (spec_.shapes.size() != spec_.layers.size()) validate(spec_);
        FeatureShape in = spec_.input;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            layers_.push_back(make_layer(spec_.layers[i], in, spec_.shapes[i], seed));
            in = spec_.shapes[i];
        }
    }

    const ArchSpec& spec() const { return spec_; }
    const std::string& scope() const { return scope_; }

    /// x is (N, C, H, W) matching the input header; a vector input (h = w = 1)
    /// may also be given as (N, C).
    Tensor forward(Graph& g, const Tensor& x, bool training, ForwardTrace* trace = nullptr) {
        const auto& in = spec_.input;
        const bool ok4 = x.rank() == 4 && x.dim(1) == in.c && x.dim(2) == in.h && x.dim(3) == in.w;
        const bool ok2 = x.rank() == 2 && in.h == 1 && in.w == 1 && x.dim(1) == in.c;
        if (!ok4 && !ok2) {
            throw std::invalid_argument(spec_.name + ": input " + shape_str(x.shape()) + " does not match (N, " +
                                        std::to_string(in.c) + ", " + std::to_string(in.h) + ", " +
                                        std::to_string(in.w) + ")");
        }
        Tensor h = x;
        for (auto& layer : layers_) h = run(g, layer, h, training, trace);
        return h;
    }

    /// Learnable tensors in a stable order.
    std::vector<nn::ParamRef> parameters() const {
        std::vector<nn::ParamRef> out;
        for (const auto& l : layers_) {
            for (const auto& p : l.params) out.push_back(p);
        }
        return out;
    }

    /// Non-learned state: running norm statistics and spectral-norm vectors.
    std::vector<std::pair<std::string, Tensor>> buffers() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& l : layers_) {
            for (const auto& [path, np] : l.norm_list()) {
                if (np.kind == nn::NormKind::batch) {
                    out.emplace_back(path + ".running_mean", np.running_mean);
                    out.emplace_back(path + ".running_var", np.running_var);
                }
            }
            for (const auto* w : l.sn_weights()) {
                if (w->sn) out.emplace_back(w->path + ".sn_u", w->sn->u);
            }
        }
        return out;
    }

    /// (weight path, weight, state) for every spectrally normalized weight.
    std::vector<const SnWeight*> spectral_weights() const {
        std::vector<const SnWeight*> out;
        for (const auto& l : layers_)
            for (const auto* w : l.sn_weights())
                if (w->sn) out.push_back(w);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.tensor.numel();
        return n;
    }

    void save_into(nn::Checkpoint& ck, const std::string& prefix) const {
        for (const auto& p : parameters()) ck.put(prefix + p.path, p.tensor);
        for (const auto& [path, t] : buffers()) ck.put(prefix + path, t);
    }

    /// Copies values in place (so optimizer state keyed on tensors stays
    /// valid). Every parameter and buffer must be present with its shape.
    void load_from(const nn::Checkpoint& ck, const std::string& prefix) {
        auto copy = [&](const std::string& path, Tensor t) {
            const std::string key = prefix + path;
            if (!ck.contains(key)) throw std::runtime_error("checkpoint does not match architecture: missing '" + key + "'");
            const Tensor& src = ck.at(key);
            if (src.shape() != t.shape()) {
                throw std::runtime_error("checkpoint does not match architecture: '" + key + "' has shape " +
                                         shape_str(src.shape()) + ", expected " + shape_str(t.shape()));
            }
            std::copy(src.values().begin(), src.values().end(), t.values().begin());
        };
        for (const auto& p : parameters()) copy(p.path, p.tensor);
        for (const auto& [path, t] : buffers()) copy(path, t);
    }

   private:
    struct ResUnit {
        SnWeight w1, w2;
        Tensor b1, b2;
        std::optional<nn::NormParams> n1, n2;
    };

    struct Layer {
        LayerSpec spec;
        FeatureShape in, out;
        SnWeight weight;  // conv/deconv/linear/atrous base
        Tensor bias;
        std::vector<SnWeight> branch_w;  // atrous branches
        std::vector<Tensor> branch_b;
        std::optional<nn::NormParams> norm;  // fused or standalone
        pyramid::SpapParams spap;
        std::vector<ResUnit> res;
        std::vector<nn::ParamRef> params;

        // NormParams hold tensor handles, so copies share storage.
        std::vector<std::pair<std::string, nn::NormParams>> norm_list() const {
            std::vector<std::pair<std::string, nn::NormParams>> out;
            const std::string& lab = spec.label;
            if (norm) out.emplace_back(spec.kind == LayerKind::norm ? lab : lab + ".norm", *norm);
            for (std::size_t i = 0; i < res.size(); ++i) {
                const std::string p = lab + ".block" + std::to_string(i);
                if (res[i].n1) out.emplace_back(p + ".norm1", *res[i].n1);
                if (res[i].n2) out.emplace_back(p + ".norm2", *res[i].n2);
            }
            return out;
        }

        std::vector<const SnWeight*> sn_weights() const {
            std::vector<const SnWeight*> out;
            if (weight.weight.defined()) out.push_back(&weight);
            for (const auto& b : branch_w) out.push_back(&b);
            for (const auto& r : res) {
                out.push_back(&r.w1);
                out.push_back(&r.w2);
            }
            return out;
        }
    };

    SnWeight make_weight(const std::string& path, Tensor w, Rng& sn_rng) const {
        SnWeight out{path, std::move(w), std::nullopt};
        if (spec_.spectral) out.sn = nn::SpectralState::for_weight(out.weight, sn_rng);
        return out;
    }

    Layer make_layer(const LayerSpec& ls, const FeatureShape& in, const FeatureShape& out, std::uint64_t seed) const {
        Layer l;
        l.spec = ls;
        l.in = in;
        l.out = out;
        const std::string& lab = ls.label;
        Rng rng = make_rng(seed, "init/" + scope_ + "/" + lab);
        Rng sn_rng = make_rng(seed, "sn/" + scope_ + "/" + lab);
        const auto base = nn::ParamGroup::base;

        switch (ls.kind) {
            case LayerKind::conv:
            case LayerKind::atrous_disc: {
                auto cp = nn::make_conv(in.c, ls.c, ls.k, {ls.s, ls.p, ls.d}, rng);
                l.weight = make_weight(lab + ".weight", cp.weight, sn_rng);
                l.bias = cp.bias;
                if (ls.kind == LayerKind::atrous_disc) {
                    for (auto rate : ls.rates) {
                        auto bp = nn::make_conv(in.c, ls.c, ls.k, {ls.s, pyramid::compensated_pad(ls.k, ls.p, rate), rate}, rng);
                        const std::string path = lab + ".atrous.r" + std::to_string(rate);
                        l.branch_w.push_back(make_weight(path + ".weight", bp.weight, sn_rng));
                        l.branch_b.push_back(bp.bias);
                    }
                }
                break;
            }
            case LayerKind::deconv: {
                auto cp = nn::make_deconv(in.c, ls.c, ls.k, {ls.s, ls.p, 1}, rng);
                l.weight = make_weight(lab + ".weight", cp.weight, sn_rng);
                l.bias = cp.bias;
                break;
            }
            case LayerKind::linear: {
                const std::size_t fan_in = in.numel();
                l.weight = make_weight(lab + ".weight", nn::uniform_fan_in({ls.c, fan_in}, fan_in, rng), sn_rng);
                l.bias = nn::uniform_fan_in({ls.c}, fan_in, rng);
                break;
            }
            case LayerKind::spap: l.spap = pyramid::SpapParams::init(ls.spap, rng); break;
            case LayerKind::resblock:
                for (std::size_t i = 0; i < ls.n; ++i) {
                    const std::string p = lab + ".block" + std::to_string(i);
                    auto c1 = nn::make_conv(in.c, in.c, 3, {1, 1, 1}, rng);
                    auto c2 = nn::make_conv(in.c, in.c, 3, {1, 1, 1}, rng);
                    ResUnit u{make_weight(p + ".conv1.weight", c1.weight, sn_rng), make_weight(p + ".conv2.weight", c2.weight, sn_rng),
                              c1.bias, c2.bias, std::nullopt, std::nullopt};
                    if (ls.norm) {
                        u.n1 = nn::NormParams::make(*ls.norm, in.c);
                        u.n2 = nn::NormParams::make(*ls.norm, in.c);
                    }
                    l.res.push_back(std::move(u));
                }
                break;
            case LayerKind::norm:
            case LayerKind::activation:
            case LayerKind::reshape: break;
        }
        if (ls.norm && ls.kind != LayerKind::resblock) l.norm = nn::NormParams::make(*ls.norm, out.c);

        if (l.weight.weight.defined()) {
            l.params.push_back({lab + ".weight", l.weight.weight, base});
            l.params.push_back({lab + ".bias", l.bias, base});
        }
        for (std::size_t i = 0; i < l.branch_w.size(); ++i) {
            const std::string path = lab + ".atrous.r" + std::to_string(ls.rates[i]);
            l.params.push_back({path + ".weight", l.branch_w[i].weight, nn::ParamGroup::delayed});
            l.params.push_back({path + ".bias", l.branch_b[i], nn::ParamGroup::delayed});
        }
        if (ls.kind == LayerKind::spap) {
            for (auto& p : l.spap.parameters(ls.spap, lab + ".")) l.params.push_back(p);
        }
        for (std::size_t i = 0; i < l.res.size(); ++i) {
            const std::string p = lab + ".block" + std::to_string(i);
            auto& u = l.res[i];
            l.params.push_back({p + ".conv1.weight", u.w1.weight, base});
            l.params.push_back({p + ".conv1.bias", u.b1, base});
            if (u.n1) {
                l.params.push_back({p + ".norm1.scale", u.n1->gamma_scale, base});
                l.params.push_back({p + ".norm1.shift", u.n1->beta_shift, base});
            }
            l.params.push_back({p + ".conv2.weight", u.w2.weight, base});
            l.params.push_back({p + ".conv2.bias", u.b2, base});
            if (u.n2) {
                l.params.push_back({p + ".norm2.scale", u.n2->gamma_scale, base});
                l.params.push_back({p + ".norm2.shift", u.n2->beta_shift, base});
            }
        }
        if (l.norm) {
            const std::string p = ls.kind == LayerKind::norm ? lab : lab + ".norm";
            l.params.push_back({p + ".scale", l.norm->gamma_scale, base});
            l.params.push_back({p + ".shift", l.norm->beta_shift, base});
        }
        return l;
    }

    Tensor run(Graph& g, Layer& l, const Tensor& x, bool training, ForwardTrace* trace) {
        const auto& ls = l.spec;
        Tensor y;
        switch (ls.kind) {
            case LayerKind::conv: y = nn::conv2d(g, x, l.weight.use(g, training), l.bias, {ls.s, ls.p, ls.d}); break;
            case LayerKind::deconv: y = nn::conv_transpose2d(g, x, l.weight.use(g, training), l.bias, {ls.s, ls.p, 1}); break;
            case LayerKind::linear: y = nn::linear(g, x, l.weight.use(g, training), l.bias); break;
            case LayerKind::reshape: y = ops::reshape(g, x, {x.dim(0), ls.c, ls.h, ls.w}); break;
            case LayerKind::atrous_disc: {
                nn::ConvParams base{l.weight.use(g, training), l.bias, {ls.s, ls.p, 1}};
                std::vector<nn::ConvParams> branches;
                for (std::size_t i = 0; i < l.branch_w.size(); ++i) {
                    const std::size_t rate = ls.rates[i];
                    branches.push_back({l.branch_w[i].use(g, training), l.branch_b[i],
                                        {ls.s, pyramid::compensated_pad(ls.k, ls.p, rate), rate}});
                }
                y = pyramid::atrous_disc_forward(g, x, base, branches);
                break;
            }
            case LayerKind::spap: {
                pyramid::SpapTrace* t = nullptr;
                if (trace) {
                    trace->spap.emplace_back(ls.label, pyramid::SpapTrace{});
                    t = &trace->spap.back().second;
                }
                y = pyramid::spap_forward(g, x, ls.spap, l.spap, t);
                break;
            }
            case LayerKind::resblock: {
                y = x;
                for (auto& u : l.res) {
                    Tensor h = nn::conv2d(g, y, u.w1.use(g, training), u.b1, {1, 1, 1});
                    if (u.n1) h = nn::normalize(g, h, *u.n1, training);
                    h = ops::relu(g, h);
                    h = nn::conv2d(g, h, u.w2.use(g, training), u.b2, {1, 1, 1});
                    if (u.n2) h = nn::normalize(g, h, *u.n2, training);
                    y = ops::add(g, y, h);
                }
                break;
            }
            case LayerKind::norm:
            case LayerKind::activation: y = x; break;
        }
        if (l.norm) y = nn::normalize(g, y, *l.norm, training);
        if (ls.act) y = nn::activate(g, y, *ls.act);
        return y;
    }

    ArchSpec spec_;
    std::string scope_;
    std::vector<Layer> layers_;
};

}  // namespace spap::arch
