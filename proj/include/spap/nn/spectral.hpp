#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spap/graph.hpp"
#include "spap/rng.hpp"

namespace spap::nn {

/// Persistent left-singular-vector estimate for one weight. The weight is
/// viewed as a (leading dim) x (rest) matrix.
struct SpectralState {
    Tensor u;  // unit vector, length rows
    std::size_t power_iters = 1;

    static SpectralState make(std::size_t rows, Rng& rng, std::size_t power_iters = 1) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> u(rows);
        double norm = 0.0;
        for (auto& v : u) {
            v = normal(rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : u) v /= norm;
        return {Tensor({rows}, std::move(u)), power_iters};
    }

    /// State for a specific weight, converged by `warmup` iterations so the
    /// first training steps already divide by a good estimate of sigma.
    static SpectralState for_weight(const Tensor& w, Rng& rng, std::size_t warmup = kWarmup, std::size_t power_iters = 1);

    static constexpr std::size_t kWarmup = 50;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> matrix_dims(const Tensor& w) {
    const std::size_t rows = w.dim(0);
    return {rows, w.numel() / rows};
}

// v = Wᵀu / ‖Wᵀu‖; returns ‖Wᵀu‖.
inline double right_vector(const Tensor& w, std::span<const double> u, std::vector<double>& v) {
    const auto [rows, cols] = matrix_dims(w);
    auto wv = w.values();
    v.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double ur = u[r];
        const double* row = wv.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) v[j] += ur * row[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw std::invalid_argument("spectral_normalize: weight matrix is zero, sigma undefined");
    for (double& x : v) x /= norm;
    return norm;
}

}  // namespace detail

/// Runs `iters` power iterations (v ← Wᵀu/‖·‖, u ← Wv/‖·‖) in place.
inline void power_iterate(SpectralState& s, const Tensor& w, std::size_t iters) {
    const auto [rows, cols] = detail::matrix_dims(w);
    if (s.u.numel() != rows) throw std::invalid_argument("spectral_normalize: state does not match weight rows");
    auto wv = w.values();
    std::vector<double> v;
    for (std::size_t it = 0; it < iters; ++it) {
        detail::right_vector(w, s.u.values(), v);
        auto u = s.u.values();
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = wv.data() + r * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += row[j] * v[j];
            u[r] = acc;
            norm += acc * acc;
        }
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) throw std::invalid_argument("spectral_normalize: weight matrix is zero, sigma undefined");
        for (auto& x : u) x /= norm;
    }
}

inline SpectralState SpectralState::for_weight(const Tensor& w, Rng& rng, std::size_t warmup, std::size_t power_iters) {
    SpectralState s = make(w.dim(0), rng, power_iters);
    power_iterate(s, w, warmup);
    return s;
}

/// Estimated top singular value σ̂ = uᵀWv with v = Wᵀu/‖Wᵀu‖.
inline double spectral_sigma(const Tensor& w, const SpectralState& s) {
    std::vector<double> v;
    return detail::right_vector(w, s.u.values(), v);
}

/// w / σ̂ with u held constant. Because v maximizes uᵀWv for fixed u, the
/// gradient dσ̂/dW = u vᵀ is exact for this map.
inline Tensor apply_spectral_norm(Graph& g, const Tensor& w, const SpectralState& s) {
    if (s.u.numel() != w.dim(0)) throw std::invalid_argument("spectral_normalize: state does not match weight rows");
    std::vector<double> v;
    const double sigma = detail::right_vector(w, s.u.values(), v);
    Tensor out(w.shape());
    {
        auto wv = w.values();
        auto ov = out.values();
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = wv[i] / sigma;
    }
    const Tensor u = s.u.clone();
    return g.record("spectral_norm", {w}, out,
                    [u, v = std::move(v), sigma, out](std::span<const double> go, std::span<const std::span<double>> gi) {
                        auto ov = out.values();
                        double inner = 0.0;
                        for (std::size_t i = 0; i < go.size(); ++i) inner += go[i] * ov[i];
                        const std::size_t cols = v.size();
                        auto uv = u.values();
                        for (std::size_t i = 0; i < go.size(); ++i) {
                            gi[0][i] += (go[i] - inner * uv[i / cols] * v[i % cols]) / sigma;
                        }
                    });
}

/// One normalization step: power_iters warm-started iterations on a copy of
/// the state, then w / σ̂. Returns the normalized weight and the new state.
inline std::pair<Tensor, SpectralState> spectral_normalize(Graph& g, const Tensor& w, SpectralState s) {
    s.u = s.u.clone();
    power_iterate(s, w, s.power_iters);
    Tensor out = apply_spectral_norm(g, w, s);
    return {out, std::move(s)};
}

}  // namespace spap::nn
