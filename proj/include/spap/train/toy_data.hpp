#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "spap/rng.hpp"
#include "spap/tensor.hpp"

namespace spap::train {

/// Procedural multi-scale images: a few large soft-edged blobs (coarse
/// structure) filled with short-period stripes (fine texture) on a shaded
/// background. Sample i depends only on (seed, i).
struct ToySpec {
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t blobs_min = 1, blobs_max = 3;
    double radius_min = 0.125, radius_max = 0.25;  // fractions of the image size
    std::size_t period_min = 2, period_max = 4;  // stripe period in pixels
    double texture_amp = 0.3;
    double outline_width = 1.5;  // pixels, outline domain only
    std::uint64_t seed = 0;

    void check() const {
        if (image_size < 8) throw std::invalid_argument("toy data: image_size must be >= 8");
        if (channels != 1 && channels != 3) throw std::invalid_argument("toy data: channels must be 1 or 3");
        if (blobs_min < 1 || blobs_max < blobs_min) throw std::invalid_argument("toy data: need 1 <= blobs_min <= blobs_max");
        if (!(radius_min > 0.0 && radius_min <= radius_max)) throw std::invalid_argument("toy data: bad radius range");
        if (period_min < 2 || period_max < period_min) throw std::invalid_argument("toy data: need 2 <= period_min <= period_max");
    }
};

enum class ToyDomain { filled, outline };

namespace detail {

struct Blob {
    double cy, cx, r;
    double color[3];
    std::size_t period;
    int orient;  // 0 rows, 1 columns, 2 diagonal
    double phase;
};

/// One sample into `out` (C·H·W). The outline domain draws the same blobs as
/// the filled one, so the two form ground-truth pairs.
inline void draw_sample(const ToySpec& s, std::size_t index, ToyDomain domain, double* out) {
    Rng rng = make_rng(s.seed, "toy/" + std::to_string(index));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double n = static_cast<double>(s.image_size);
    const std::size_t count = s.blobs_min + static_cast<std::size_t>(u(rng) * (s.blobs_max - s.blobs_min + 1)) % (s.blobs_max - s.blobs_min + 1);
    double bg[3], grad_dir = u(rng) * 2.0 * std::numbers::pi;
    for (double& b : bg) b = -0.9 + 0.3 * u(rng);
    std::vector<Blob> blobs(count);
    for (auto& b : blobs) {
        b.r = n * (s.radius_min + (s.radius_max - s.radius_min) * u(rng));
        b.cy = b.r * 0.5 + (n - b.r) * u(rng);
        b.cx = b.r * 0.5 + (n - b.r) * u(rng);
        for (double& c : b.color) c = -0.1 + 0.9 * u(rng);
        b.period = s.period_min + static_cast<std::size_t>(u(rng) * (s.period_max - s.period_min + 1)) % (s.period_max - s.period_min + 1);
        b.orient = static_cast<int>(u(rng) * 3.0) % 3;
        b.phase = u(rng) * 2.0 * std::numbers::pi;
    }
    const std::size_t hw = s.image_size * s.image_size;
    for (std::size_t y = 0; y < s.image_size; ++y)
        for (std::size_t x = 0; x < s.image_size; ++x) {
            const double shade = 0.15 * ((std::cos(grad_dir) * (y / n - 0.5)) + (std::sin(grad_dir) * (x / n - 0.5)));
            double px[3];
            for (int c = 0; c < 3; ++c) px[c] = bg[c] + shade;
            for (const auto& b : blobs) {
                const double dist = std::hypot(y + 0.5 - b.cy, x + 0.5 - b.cx);
                double m;
                if (domain == ToyDomain::filled) {
                    m = std::clamp(b.r - dist + 0.5, 0.0, 1.0);
                } else {
                    m = std::clamp(s.outline_width * 0.5 - std::abs(dist - b.r) + 0.5, 0.0, 1.0);
                }
                if (m <= 0.0) continue;
                const double coord = b.orient == 0 ? y : b.orient == 1 ? x : (x + y) / std::numbers::sqrt2;
                const double tex = domain == ToyDomain::filled
                                       ? s.texture_amp * std::cos(2.0 * std::numbers::pi * coord / b.period + b.phase)
                                       : 0.0;
                for (int c = 0; c < 3; ++c) px[c] = (1.0 - m) * px[c] + m * (b.color[c] + tex);
            }
            const std::size_t at = y * s.image_size + x;
            if (s.channels == 1) {
                out[at] = std::clamp((px[0] + px[1] + px[2]) / 3.0, -1.0, 1.0);
            } else {
                for (std::size_t c = 0; c < 3; ++c) out[c * hw + at] = std::clamp(px[c], -1.0, 1.0);
            }
        }
}

}  // namespace detail

/// Samples [first, first + n) as an (n, C, S, S) batch in [−1, 1].
inline Tensor gen_toy_dataset(const ToySpec& s, std::size_t n, std::size_t first = 0,
                              ToyDomain domain = ToyDomain::filled) {
    s.check();
    if (n == 0) throw std::invalid_argument("toy data: n must be >= 1");
    const std::size_t per = s.channels * s.image_size * s.image_size;
    Tensor t({n, s.channels, s.image_size, s.image_size});
    for (std::size_t i = 0; i < n; ++i) detail::draw_sample(s, first + i, domain, t.values().data() + i * per);
    return t;
}

}  // namespace spap::train
