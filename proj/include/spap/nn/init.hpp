#pragma once

#include <cmath>
#include <random>
#include <string>

#include "spap/nn/conv.hpp"
#include "spap/rng.hpp"

namespace spap::nn {

/// Parameters that only start training after the delayed-update step (SPAP
/// blocks and added atrous branches) are kept in a separate group.
enum class ParamGroup { base, delayed };

struct ParamRef {
    std::string path;
    Tensor tensor;
    ParamGroup group = ParamGroup::base;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor uniform_fan_in(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t = Tensor::zeros(shape, true);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

/// Conv weight (out, in, k, k) with bias, fan_in = in·k·k.
inline ConvParams make_conv(std::size_t in, std::size_t out, std::size_t k, const ConvOptions& o, Rng& rng) {
    ConvParams p;
    p.weight = uniform_fan_in({out, in, k, k}, in * k * k, rng);
    p.bias = uniform_fan_in({out}, in * k * k, rng);
    p.opts = o;
    return p;
}

/// Transposed-conv weight (in, out, k, k) with bias, fan_in = in·k·k.
inline ConvParams make_deconv(std::size_t in, std::size_t out, std::size_t k, const ConvOptions& o, Rng& rng) {
    ConvParams p;
    p.weight = uniform_fan_in({in, out, k, k}, in * k * k, rng);
    p.bias = uniform_fan_in({out}, in * k * k, rng);
    p.opts = o;
    return p;
}

}  // namespace spap::nn
