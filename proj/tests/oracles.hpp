#pragma once

// Test-only reference implementations. Nothing here shares code with the
// library paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <utility>
#include <random>
#include <vector>

#include "spap/arch/network.hpp"
#include "spap/tensor.hpp"

namespace oracle {

inline spap::Tensor random_tensor(const spap::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    spap::Tensor t(shape);
    for (double& v : t.values()) v = d(rng);
    return t;
}

/// Direct nested-loop dilated cross-correlation, NCHW / OIHW.
inline std::vector<double> conv2d(const spap::Tensor& x, const spap::Tensor& w, const std::vector<double>& bias,
                                  int stride, int pad, int dil, int& ho, int& wo) {
    const int n = static_cast<int>(x.dim(0)), c = static_cast<int>(x.dim(1)), h = static_cast<int>(x.dim(2)),
              wd = static_cast<int>(x.dim(3));
    const int co = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
    ho = (h + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    wo = (wd + 2 * pad - dil * (k - 1) - 1) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n * co * ho * wo), 0.0);
    auto X = x.values();
    auto W = w.values();
    for (int s = 0; s < n; ++s)
        for (int o = 0; o < co; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
                    for (int i = 0; i < c; ++i)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky * dil;
                                const int ix = ox * stride - pad + kx * dil;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += W[static_cast<std::size_t>(((o * c + i) * k + ky) * k + kx)] *
                                       X[static_cast<std::size_t>(((s * c + i) * h + iy) * wd + ix)];
                            }
                    out[static_cast<std::size_t>(((s * co + o) * ho + oy) * wo + ox)] = acc;
                }
    return out;
}

inline double inner(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Largest singular value of w viewed as a (rows x rest) matrix.
inline double spectral_norm(const spap::Tensor& w, std::size_t rows) {
    const std::size_t cols = w.numel() / rows;
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = w.values()[r * cols + c];
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

/// Conv part of a stack with norms stripped (instance norm mixes the whole
/// map) and widths cut to 2 channels, for brute-force influence probing.
inline spap::arch::ArchSpec thin_for_influence(spap::arch::ArchSpec spec) {
    using spap::arch::LayerKind;
    std::vector<spap::arch::LayerSpec> kept;
    for (auto l : spec.layers) {
        if (l.kind == LayerKind::linear || l.kind == LayerKind::reshape) break;
        if (l.kind == LayerKind::norm) continue;
        l.norm.reset();
        if (l.kind == LayerKind::conv || l.kind == LayerKind::atrous_disc) l.c = 2;
        // A zero gamma makes the block an identity.
        if (l.kind == LayerKind::spap) l.spap.gamma_init = 0.5;
        // Keep the map informative where relu would zero half of it.
        if (l.act && l.act->kind == spap::nn::ActKind::relu) l.act = spap::nn::Activation{spap::nn::ActKind::lrelu, 0.3};
        kept.push_back(l);
    }
    spec.layers = kept;
    spec.spectral = false;
    spap::arch::validate(spec);
    return spec;
}

/// Extent (rows, cols) of input pixels that influence the centre output unit,
/// found by perturbing one full input row (then column) at a time and
/// checking whether that unit changes at all.
inline std::pair<std::size_t, std::size_t> influence_extent(const spap::arch::ArchSpec& full, std::uint64_t seed) {
    auto spec = thin_for_influence(full);
    spap::arch::Network net(spec, seed, "influence");
    const std::size_t c = spec.input.c, h = spec.input.h, w = spec.input.w;
    std::mt19937_64 rng(seed);
    spap::Tensor x = random_tensor({1, c, h, w}, rng);
    const auto out = spec.output();
    const std::size_t centre = (out.h / 2) * out.w + out.w / 2;  // channel 0
    auto probe = [&](const spap::Tensor& in) {
        spap::Graph g;
        return net.forward(g, in, false).values()[centre];
    };
    const double y0 = probe(x);
    auto extent = [&](bool rows) {
        std::ptrdiff_t lo = -1, hi = -1;
        const std::size_t n = rows ? h : w;
        for (std::size_t i = 0; i < n; ++i) {
            spap::Tensor p = x.clone();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t j = 0; j < (rows ? w : h); ++j) {
                    const std::size_t r = rows ? i : j, col = rows ? j : i;
                    p.values()[(ch * h + r) * w + col] += 1.0;
                }
            if (probe(p) != y0) {
                if (lo < 0) lo = static_cast<std::ptrdiff_t>(i);
                hi = static_cast<std::ptrdiff_t>(i);
            }
        }
        return lo < 0 ? std::size_t{0} : static_cast<std::size_t>(hi - lo + 1);
    };
    return {extent(true), extent(false)};
}

}  // namespace oracle
