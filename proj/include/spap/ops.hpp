#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/graph.hpp"

namespace spap::ops {

namespace detail {

enum class Broadcast { none, channel };

// Equal shapes, or `b` is a 1-channel NCHW map spread over a's channels.
inline Broadcast broadcast_rule(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::none;
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() == 4 && sb.size() == 4 && sb[1] == 1 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3]) {
        return Broadcast::channel;
    }
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(sa) + " vs " + shape_str(sb));
}

// Index into b for flat index i of a under the channel broadcast.
struct ChannelIndex {
    std::size_t c, hw;
    std::size_t operator()(std::size_t i) const { return (i / (c * hw)) * hw + i % hw; }
};

template <typename Fwd, typename Bwd>
Tensor unary(Graph& g, const char* name, const Tensor& x, Fwd fwd, Bwd dfdx) {
    Tensor out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    return g.record(name, {x}, out, [x, out, dfdx](std::span<const double> go, std::span<const std::span<double>> gi) {
        auto xv = x.values();
        auto ov = out.values();
        for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i] * dfdx(xv[i], ov[i]);
    });
}

}  // namespace detail

/// a + b (b may be a 1-channel map broadcast over a's channels).
inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    const auto rule = detail::broadcast_rule(a, b, "add");
    Tensor out(a.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    if (rule == detail::Broadcast::none) {
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        return g.record("add", {a, b}, out, [](std::span<const double> go, std::span<const std::span<double>> gi) {
            for (int k = 0; k < 2; ++k) {
                if (gi[k].empty()) continue;
                for (std::size_t i = 0; i < go.size(); ++i) gi[k][i] += go[i];
            }
        });
    }
    const detail::ChannelIndex bi{a.dim(1), a.dim(2) * a.dim(3)};
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[bi(i)];
    return g.record("add", {a, b}, out, [bi](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (!gi[0].empty()) gi[0][i] += go[i];
            if (!gi[1].empty()) gi[1][bi(i)] += go[i];
        }
    });
}

/// a - b, same broadcast rule as add.
inline Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    const auto rule = detail::broadcast_rule(a, b, "sub");
    Tensor out(a.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    const detail::ChannelIndex bi{rule == detail::Broadcast::channel ? a.dim(1) : 1,
                                  rule == detail::Broadcast::channel ? a.dim(2) * a.dim(3) : ov.size()};
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[bi(i)];
    return g.record("sub", {a, b}, out, [bi](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (!gi[0].empty()) gi[0][i] += go[i];
            if (!gi[1].empty()) gi[1][bi(i)] -= go[i];
        }
    });
}

/// Elementwise a ⊙ b (b may be a 1-channel map broadcast over a's channels).
inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    const auto rule = detail::broadcast_rule(a, b, "mul");
    Tensor out(a.shape());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    const detail::ChannelIndex bi{rule == detail::Broadcast::channel ? a.dim(1) : 1,
                                  rule == detail::Broadcast::channel ? a.dim(2) * a.dim(3) : ov.size()};
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[bi(i)];
    return g.record("mul", {a, b}, out, [a, b, bi](std::span<const double> go, std::span<const std::span<double>> gi) {
        auto av = a.values(), bv = b.values();
        for (std::size_t i = 0; i < go.size(); ++i) {
            const std::size_t j = bi(i);
            if (!gi[0].empty()) gi[0][i] += go[i] * bv[j];
            if (!gi[1].empty()) gi[1][j] += go[i] * av[i];
        }
    });
}

/// c · a for a constant c.
inline Tensor scale(Graph& g, const Tensor& a, double c) {
    return detail::unary(g, "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

/// s · a where s is a learnable 1-element tensor.
inline Tensor scale(Graph& g, const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("scale: factor must have one element, got " + shape_str(s.shape()));
    Tensor out(a.shape());
    const double c = s.item();
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
    return g.record("scale", {a, s}, out, [a, s](std::span<const double> go, std::span<const std::span<double>> gi) {
        const double c = s.item();
        auto av = a.values();
        double acc = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (!gi[0].empty()) gi[0][i] += c * go[i];
            acc += go[i] * av[i];
        }
        if (!gi[1].empty()) gi[1][0] += acc;
    });
}

/// a + c for a constant c.
inline Tensor shift(Graph& g, const Tensor& a, double c) {
    return detail::unary(g, "shift", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

/// 1 - s for a learnable 1-element tensor, kept as a scalar tensor.
inline Tensor one_minus(Graph& g, const Tensor& a) {
    return detail::unary(g, "one_minus", a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

inline Tensor sum(Graph& g, const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return g.record("sum", {a}, Tensor::scalar(s), [](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (double& v : gi[0]) v += go[0];
    });
}

inline Tensor mean(Graph& g, const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double n = static_cast<double>(a.numel());
    return g.record("mean", {a}, Tensor::scalar(s / n), [n](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (double& v : gi[0]) v += go[0] / n;
    });
}

inline Tensor abs(Graph& g, const Tensor& a) {
    return detail::unary(g, "abs", a, [](double x) { return std::abs(x); },
                         [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

/// max(x, 0); the derivative at exactly 0 is taken from the negative side (0).
inline Tensor relu(Graph& g, const Tensor& a) {
    return detail::unary(g, "relu", a, [](double x) { return x > 0 ? x : 0.0; },
                         [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// Leaky relu; the derivative at exactly 0 is the negative-side slope.
inline Tensor lrelu(Graph& g, const Tensor& a, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("lrelu: slope must be in (0,1)");
    return detail::unary(g, "lrelu", a, [slope](double x) { return x > 0 ? x : slope * x; },
                         [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(Graph& g, const Tensor& a) {
    return detail::unary(g, "sigmoid", a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(Graph& g, const Tensor& a) {
    return detail::unary(g, "tanh", a, [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

/// log(1 + e^x) without overflow.
inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Tensor softplus(Graph& g, const Tensor& a) {
    return detail::unary(g, "softplus", a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

/// log σ(x) = -softplus(-x).
inline Tensor log_sigmoid(Graph& g, const Tensor& a) {
    return detail::unary(g, "log_sigmoid", a, [](double x) { return -softplus_value(-x); },
                         [](double x, double) { return sigmoid_value(-x); });
}

/// Same values under a new shape with equal element count.
inline Tensor reshape(Graph& g, const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor out(shape, a.vec());
    return g.record("reshape", {a}, out, [](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i];
    });
}

/// Concatenates two NCHW tensors along channels.
inline Tensor concat_channels(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw std::invalid_argument("concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t s = 0; s < n; ++s) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(s * ca * hw), ca * hw,
                    ov.begin() + static_cast<std::ptrdiff_t>(s * (ca + cb) * hw));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(s * cb * hw), cb * hw,
                    ov.begin() + static_cast<std::ptrdiff_t>((s * (ca + cb) + ca) * hw));
    }
    return g.record("concat", {a, b}, out, [n, ca, cb, hw](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = s * (ca + cb) * hw;
            if (!gi[0].empty()) {
                for (std::size_t i = 0; i < ca * hw; ++i) gi[0][s * ca * hw + i] += go[base + i];
            }
            if (!gi[1].empty()) {
                for (std::size_t i = 0; i < cb * hw; ++i) gi[1][s * cb * hw + i] += go[base + ca * hw + i];
            }
        }
    });
}

}  // namespace spap::ops
