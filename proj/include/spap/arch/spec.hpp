#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/nn/activation.hpp"
#include "spap/nn/conv.hpp"
#include "spap/nn/norm.hpp"
#include "spap/pyramid/spap.hpp"

namespace spap::arch {

enum class LayerKind { conv, deconv, linear, norm, activation, spap, atrous_disc, reshape, resblock };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::deconv: return "deconv";
        case LayerKind::linear: return "linear";
        case LayerKind::norm: return "norm";
        case LayerKind::activation: return "activation";
        case LayerKind::spap: return "spap";
        case LayerKind::atrous_disc: return "atrous_disc";
        case LayerKind::reshape: return "reshape";
        case LayerKind::resblock: return "resblock";
    }
    return "?";
}

/// Activation shape of one image: (C, H, W). After a linear layer the map is
/// flat, stored as (features, 1, 1).
struct FeatureShape {
    std::size_t c = 0, h = 0, w = 0;
    bool flat = false;

    std::size_t numel() const { return c * h * w; }
    std::string str() const {
        if (flat) return "(" + std::to_string(c) + ")";
        return "(" + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) + ")";
    }
    friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    // conv, deconv, atrous_disc
    std::size_t k = 0, s = 1, p = 0, d = 1;
    std::size_t c = 0;  // output channels; linear: output features; reshape: target c
    std::size_t h = 0, w = 0;  // reshape target
    std::size_t n = 0;  // resblock count
    std::optional<nn::NormKind> norm;  // fused after the op (or the op itself for kind=norm)
    std::optional<nn::Activation> act;  // fused after norm (or the op itself for kind=activation)
    std::vector<std::size_t> rates;  // atrous_disc branches
    pyramid::SpapConfig spap;  // kind=spap; channels filled in by the shape walk
    std::string label;  // parameter path prefix, defaulted per kind
    bool custom_label = false;
    std::size_t line = 0;  // source line, 0 when built in code
};

struct ArchSpec {
    std::string name = "net";
    FeatureShape input;
    bool spectral = false;  // spectral norm on conv/deconv/linear weights
    std::vector<LayerSpec> layers;
    std::vector<FeatureShape> shapes;  // output shape per layer, from validate()

    FeatureShape output() const { return shapes.empty() ? input : shapes.back(); }
};

class ArchError : public std::runtime_error {
   public:
    ArchError(std::size_t line, const std::string& msg, const std::string& file = "")
        : std::runtime_error((file.empty() ? "" : file + ": ") + (line ? "line " + std::to_string(line) + ": " : "") + msg),
          line_(line),
          message_(msg) {}
    std::size_t line() const { return line_; }
    const std::string& message() const { return message_; }

   private:
    std::size_t line_;
    std::string message_;
};

namespace detail {

inline std::size_t parse_uint(const std::string& v, const std::string& key, std::size_t line) {
    std::size_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ArchError(line, "'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

inline double parse_real(const std::string& v, const std::string& key, std::size_t line) {
    double out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ArchError(line, "'" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

inline std::vector<std::size_t> parse_list(const std::string& v, const std::string& key, std::size_t line) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_uint(item, key, line));
    if (out.empty()) throw ArchError(line, "'" + key + "' expects a comma-separated list");
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ArchError(line, "'" + key + "' expects on/off, got '" + v + "'");
}

inline nn::NormKind parse_norm(const std::string& v, std::size_t line) {
    if (v == "batch") return nn::NormKind::batch;
    if (v == "instance") return nn::NormKind::instance;
    throw ArchError(line, "unknown norm '" + v + "' (batch|instance)");
}

inline nn::Activation parse_act(const std::string& v, std::size_t line) {
    if (v == "relu") return {nn::ActKind::relu, 0.0};
    if (v == "tanh") return {nn::ActKind::tanh, 0.0};
    if (v == "sigmoid") return {nn::ActKind::sigmoid, 0.0};
    if (v.rfind("lrelu", 0) == 0) {
        double slope = 0.2;
        if (v.size() > 5) {
            if (v[5] != ':') throw ArchError(line, "bad activation '" + v + "'");
            slope = parse_real(v.substr(6), "act", line);
        }
        if (!(slope > 0.0 && slope < 1.0)) throw ArchError(line, "lrelu slope must be in (0, 1)");
        return {nn::ActKind::lrelu, slope};
    }
    throw ArchError(line, "unknown activation '" + v + "' (relu|lrelu:<slope>|tanh|sigmoid)");
}

inline std::string act_str(const nn::Activation& a) {
    switch (a.kind) {
        case nn::ActKind::relu: return "relu";
        case nn::ActKind::tanh: return "tanh";
        case nn::ActKind::sigmoid: return "sigmoid";
        case nn::ActKind::lrelu: {
            char buf[32];
            auto r = std::to_chars(buf, buf + sizeof(buf), a.slope);
            return "lrelu:" + std::string(buf, r.ptr);
        }
    }
    return "?";
}

inline std::string real_str(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline std::string list_str(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

using KeyValues = std::map<std::string, std::string>;

// Takes a key out of kv so leftovers can be reported as unknown.
inline std::optional<std::string> take(KeyValues& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
}

inline std::string need(KeyValues& kv, const std::string& key, const char* kind, std::size_t line) {
    auto v = take(kv, key);
    if (!v) throw ArchError(line, std::string(kind) + ": missing '" + key + "'");
    return *v;
}

}  // namespace detail

/// Walks the stack, checking every layer's fields and computing output
/// shapes. Also fills SPAP channel counts and default labels.
inline void validate(ArchSpec& spec) {
    using detail::need;
    if (spec.input.c == 0 || spec.input.h == 0 || spec.input.w == 0) throw ArchError(0, "input shape must be positive");
    spec.shapes.clear();
    std::map<std::string, std::size_t> ordinal;
    std::map<std::string, std::size_t> seen;
    FeatureShape cur = spec.input;
    for (auto& l : spec.layers) {
        const std::size_t line = l.line;
        const char* kind = to_string(l.kind);
        auto spatial = [&] {
            if (cur.flat) throw ArchError(line, std::string(kind) + " needs a spatial input, got flat " + cur.str() + "; add a reshape");
        };
        auto check_conv_fields = [&] {
            if (l.k == 0) throw ArchError(line, std::string(kind) + ": k must be >= 1");
            if (l.s == 0) throw ArchError(line, std::string(kind) + ": s must be >= 1");
            if (l.d == 0) throw ArchError(line, std::string(kind) + ": d must be >= 1");
            if (l.c == 0) throw ArchError(line, std::string(kind) + ": c must be >= 1");
        };
        // Base convs and atrous_disc share one counter so their parameter paths
        // line up between a vanilla stack and its atrous variant.
        std::string counter = l.kind == LayerKind::atrous_disc ? "conv" : kind;
        if (!l.custom_label) l.label = counter + std::to_string(ordinal[counter]);
        ++ordinal[counter];
        if (seen[l.label]++) throw ArchError(line, "duplicate label '" + l.label + "'");

        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::atrous_disc: {
                spatial();
                check_conv_fields();
                const nn::ConvOptions o{l.s, l.p, l.d};
                const std::size_t ho = nn::conv_out_size(cur.h, l.k, o), wo = nn::conv_out_size(cur.w, l.k, o);
                if (ho == 0 || wo == 0) {
                    throw ArchError(line, std::string(kind) + ": kernel does not fit input " + cur.str());
                }
                if (l.kind == LayerKind::atrous_disc) {
                    if (l.d != 1) throw ArchError(line, "atrous_disc: the base conv has no dilation");
                    if (l.rates.empty()) throw ArchError(line, "atrous_disc: missing 'rates'");
                    for (auto r : l.rates) {
                        if (r < 2) throw ArchError(line, "atrous_disc: rates must be >= 2");
                        try {
                            pyramid::compensated_pad(l.k, l.p, r);
                        } catch (const std::invalid_argument& e) {
                            throw ArchError(line, e.what());
                        }
                    }
                }
                cur = {l.c, ho, wo, false};
                break;
            }
            case LayerKind::deconv: {
                spatial();
                check_conv_fields();
                if (l.d != 1) throw ArchError(line, "deconv: dilation is not supported");
                const nn::ConvOptions o{l.s, l.p, 1};
                const std::size_t ho = nn::deconv_out_size(cur.h, l.k, o), wo = nn::deconv_out_size(cur.w, l.k, o);
                if (ho == 0 || wo == 0) throw ArchError(line, "deconv: non-positive output size from " + cur.str());
                cur = {l.c, ho, wo, false};
                break;
            }
            case LayerKind::linear:
                if (l.c == 0) throw ArchError(line, "linear: out must be >= 1");
                cur = {l.c, 1, 1, true};
                break;
            case LayerKind::reshape:
                if (l.c == 0 || l.h == 0 || l.w == 0) throw ArchError(line, "reshape: c, h, w must be >= 1");
                if (l.c * l.h * l.w != cur.numel()) {
                    throw ArchError(line, "reshape: " + cur.str() + " has " + std::to_string(cur.numel()) +
                                              " values, target needs " + std::to_string(l.c * l.h * l.w));
                }
                cur = {l.c, l.h, l.w, false};
                break;
            case LayerKind::norm:
                spatial();
                if (!l.norm) throw ArchError(line, "norm: missing 'kind'");
                break;
            case LayerKind::activation:
                if (!l.act) throw ArchError(line, "activation: missing 'kind'");
                break;
            case LayerKind::spap:
                spatial();
                l.spap.channels = cur.c;
                try {
                    l.spap.validate();
                } catch (const std::invalid_argument& e) {
                    throw ArchError(line, e.what());
                }
                break;
            case LayerKind::resblock:
                spatial();
                if (l.n == 0) throw ArchError(line, "resblock: n must be >= 1");
                break;
        }
        if (l.norm && l.kind != LayerKind::norm) spatial();
        spec.shapes.push_back(cur);
    }
}

inline ArchSpec parse_arch(const std::string& text) {
    using namespace detail;
    ArchSpec spec;
    bool have_header = false;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::string kind;
        if (!(ls >> kind)) continue;
        KeyValues kv;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0) throw ArchError(line, "expected key=value, got '" + tok + "'");
            if (!kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
                throw ArchError(line, "duplicate key '" + tok.substr(0, eq) + "'");
            }
        }
        auto finish = [&](const char* what) {
            if (!kv.empty()) throw ArchError(line, std::string(what) + ": unknown key '" + kv.begin()->first + "'");
        };

        if (!have_header) {
            if (kind != "input") throw ArchError(line, "first line must be 'input c=.. h=.. w=..'");
            spec.input.c = parse_uint(need(kv, "c", "input", line), "c", line);
            spec.input.h = parse_uint(need(kv, "h", "input", line), "h", line);
            spec.input.w = parse_uint(need(kv, "w", "input", line), "w", line);
            if (spec.input.c == 0 || spec.input.h == 0 || spec.input.w == 0) {
                throw ArchError(line, "input: c, h, w must be >= 1");
            }
            if (auto v = take(kv, "name")) spec.name = *v;
            if (auto v = take(kv, "spectral")) spec.spectral = parse_bool(*v, "spectral", line);
            finish("input");
            have_header = true;
            continue;
        }

        LayerSpec l;
        l.line = line;
        auto common = [&] {
            if (auto v = take(kv, "norm")) l.norm = parse_norm(*v, line);
            if (auto v = take(kv, "act")) l.act = parse_act(*v, line);
        };
        auto conv_fields = [&](const char* what) {
            l.k = parse_uint(need(kv, "k", what, line), "k", line);
            l.s = parse_uint(need(kv, "s", what, line), "s", line);
            l.p = parse_uint(need(kv, "p", what, line), "p", line);
            l.c = parse_uint(need(kv, "c", what, line), "c", line);
            if (auto v = take(kv, "d")) l.d = parse_uint(*v, "d", line);
            if (l.k == 0) throw ArchError(line, std::string(what) + ": k must be >= 1");
            if (l.s == 0) throw ArchError(line, std::string(what) + ": s must be >= 1");
            if (l.c == 0) throw ArchError(line, std::string(what) + ": c must be >= 1");
            if (l.d == 0) throw ArchError(line, std::string(what) + ": d must be >= 1");
            common();
        };

        if (kind == "conv") {
            l.kind = LayerKind::conv;
            conv_fields("conv");
        } else if (kind == "deconv") {
            l.kind = LayerKind::deconv;
            conv_fields("deconv");
        } else if (kind == "atrous_disc") {
            l.kind = LayerKind::atrous_disc;
            conv_fields("atrous_disc");
            l.rates = parse_list(need(kv, "rates", "atrous_disc", line), "rates", line);
        } else if (kind == "linear") {
            l.kind = LayerKind::linear;
            l.c = parse_uint(need(kv, "out", "linear", line), "out", line);
            common();
        } else if (kind == "reshape") {
            l.kind = LayerKind::reshape;
            l.c = parse_uint(need(kv, "c", "reshape", line), "c", line);
            l.h = parse_uint(need(kv, "h", "reshape", line), "h", line);
            l.w = parse_uint(need(kv, "w", "reshape", line), "w", line);
        } else if (kind == "norm") {
            l.kind = LayerKind::norm;
            l.norm = parse_norm(need(kv, "kind", "norm", line), line);
        } else if (kind == "activation") {
            l.kind = LayerKind::activation;
            l.act = parse_act(need(kv, "kind", "activation", line), line);
        } else if (kind == "resblock") {
            l.kind = LayerKind::resblock;
            l.n = parse_uint(need(kv, "n", "resblock", line), "n", line);
            if (auto v = take(kv, "norm")) l.norm = parse_norm(*v, line);
        } else if (kind == "spap") {
            l.kind = LayerKind::spap;
            auto& cfg = l.spap;
            if (auto v = take(kv, "rates")) cfg.rates = parse_list(*v, "rates", line);
            if (auto v = take(kv, "order")) {
                if (*v == "coarse_to_fine") cfg.order = pyramid::CascadeOrder::coarse_to_fine;
                else if (*v == "fine_to_coarse") cfg.order = pyramid::CascadeOrder::fine_to_coarse;
                else throw ArchError(line, "spap: order must be coarse_to_fine or fine_to_coarse");
            }
            if (auto v = take(kv, "rate1")) cfg.include_rate1_3x3 = parse_bool(*v, "rate1", line);
            if (auto v = take(kv, "pointwise")) cfg.include_1x1 = parse_bool(*v, "pointwise", line);
            if (auto v = take(kv, "gate_hidden")) cfg.gate.hidden_channels = parse_uint(*v, "gate_hidden", line);
            if (auto v = take(kv, "gate_k")) cfg.gate.hidden_kernel = parse_uint(*v, "gate_k", line);
            if (auto v = take(kv, "gate_out_k")) cfg.gate.out_kernel = parse_uint(*v, "gate_out_k", line);
            if (auto v = take(kv, "gate_slope")) cfg.gate.slope = parse_real(*v, "gate_slope", line);
            if (auto v = take(kv, "gamma")) cfg.gamma_init = parse_real(*v, "gamma", line);
        } else {
            throw ArchError(line, "unknown layer kind '" + kind + "'");
        }
        if (auto v = take(kv, "label")) {
            l.label = *v;
            l.custom_label = true;
        }
        finish(kind.c_str());
        spec.layers.push_back(std::move(l));
    }
    if (!have_header) throw ArchError(0, "missing 'input' header line");
    validate(spec);
    return spec;
}

/// Canonical text form; parse(print(s)) reproduces s.
inline std::string print_arch(const ArchSpec& spec) {
    using namespace detail;
    std::ostringstream os;
    os << "input c=" << spec.input.c << " h=" << spec.input.h << " w=" << spec.input.w << " name=" << spec.name;
    if (spec.spectral) os << " spectral=on";
    os << '\n';
    for (const auto& l : spec.layers) {
        os << to_string(l.kind);
        auto fused = [&] {
            if (l.norm) os << " norm=" << nn::to_string(*l.norm);
            if (l.act) os << " act=" << act_str(*l.act);
        };
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::deconv:
            case LayerKind::atrous_disc:
                os << " k=" << l.k << " s=" << l.s << " p=" << l.p << " c=" << l.c;
                if (l.d != 1) os << " d=" << l.d;
                if (l.kind == LayerKind::atrous_disc) os << " rates=" << list_str(l.rates);
                fused();
                break;
            case LayerKind::linear:
                os << " out=" << l.c;
                fused();
                break;
            case LayerKind::reshape: os << " c=" << l.c << " h=" << l.h << " w=" << l.w; break;
            case LayerKind::norm: os << " kind=" << nn::to_string(*l.norm); break;
            case LayerKind::activation: os << " kind=" << act_str(*l.act); break;
            case LayerKind::resblock:
                os << " n=" << l.n;
                if (l.norm) os << " norm=" << nn::to_string(*l.norm);
                break;
            case LayerKind::spap: {
                const auto& c = l.spap;
                os << " rates=" << list_str(c.rates) << " order=" << pyramid::to_string(c.order);
                if (!c.include_rate1_3x3) os << " rate1=off";
                if (!c.include_1x1) os << " pointwise=off";
                if (c.gate.hidden_channels) os << " gate_hidden=" << c.gate.hidden_channels;
                if (c.gate.hidden_kernel != 1) os << " gate_k=" << c.gate.hidden_kernel;
                if (c.gate.out_kernel != 3) os << " gate_out_k=" << c.gate.out_kernel;
                if (c.gate.slope != 0.1) os << " gate_slope=" << real_str(c.gate.slope);
                if (c.gamma_init != 0.0) os << " gamma=" << real_str(c.gamma_init);
                break;
            }
        }
        if (l.custom_label) os << " label=" << l.label;
        os << '\n';
    }
    return os.str();
}

inline ArchSpec load_arch(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open architecture file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_arch(ss.str());
    } catch (const ArchError& e) {
        throw ArchError(e.line(), e.message(), path);
    }
}

/// Same stack on a different input resolution, re-validated.
inline ArchSpec with_input_size(ArchSpec spec, std::size_t h, std::size_t w) {
    spec.input.h = h;
    spec.input.w = w;
    validate(spec);
    return spec;
}

}  // namespace spap::arch
