#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "spap/nn/conv.hpp"
#include "spap/ops.hpp"
#include "spap/rng.hpp"

namespace spap::metrics {

/// Frozen random feature extractor standing in for a pretrained classifier:
/// two stride-2 4×4 convs with leaky ReLU, then a global average pool.
class Embedding {
   public:
    static constexpr std::size_t kDefaultDim = 64;

    explicit Embedding(std::uint64_t seed, std::size_t channels = 3, std::size_t dim = kDefaultDim,
                       std::size_t hidden = 32)
        : channels_(channels), dim_(dim) {
        Rng rng = make_rng(seed, "embedding");
        c1_ = make(channels, hidden, rng);
        c2_ = make(hidden, dim, rng);
    }

    std::size_t dim() const { return dim_; }
    std::size_t channels() const { return channels_; }

    /// (N, C, H, W) images → N×D features.
    Eigen::MatrixXd embed(const Tensor& images) const {
        if (images.rank() != 4 || images.dim(1) != channels_ || images.dim(2) < 10 || images.dim(3) < 10) {
            throw std::invalid_argument("embed: expected (N, " + std::to_string(channels_) +
                                        ", H>=10, W>=10) images, got " + shape_str(images.shape()));
        }
        Graph g;
        const Tensor x = images.clone(false);
        Tensor h = ops::lrelu(g, nn::conv2d(g, x, c1_), 0.2);
        h = ops::lrelu(g, nn::conv2d(g, h, c2_), 0.2);
        const std::size_t n = h.dim(0), hw = h.dim(2) * h.dim(3);
        Eigen::MatrixXd f(n, dim_);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < dim_; ++d) {
                double s = 0.0;
                const double* p = h.values().data() + (i * dim_ + d) * hw;
                for (std::size_t k = 0; k < hw; ++k) s += p[k];
                f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = s / static_cast<double>(hw);
            }
        return f;
    }

   private:
    static nn::ConvParams make(std::size_t in, std::size_t out, Rng& rng) {
        nn::ConvParams p;
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(in * 16)));
        p.weight = Tensor({out, in, 4, 4});
        for (double& v : p.weight.values()) v = d(rng);
        p.bias = Tensor({out});
        for (double& v : p.bias.values()) v = 0.1 * d(rng);
        p.opts = {2, 1, 1};
        return p;
    }

    std::size_t channels_, dim_;
    nn::ConvParams c1_, c2_;
};

}  // namespace spap::metrics
