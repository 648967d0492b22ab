#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spap/tensor.hpp"

namespace spap::metrics {

namespace detail {

inline void check_same(const char* op, const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(y.shape()));
    }
}

}  // namespace detail

/// 10·log10(max² / MSE) in dB; identical images give +infinity.
inline double psnr(const Tensor& x, const Tensor& y, double max_val) {
    detail::check_same("psnr", x, y);
    if (!(max_val > 0.0)) throw std::invalid_argument("psnr: max_val must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = x.values()[i] - y.values()[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> ssim_taps() {
    std::vector<double> t(kSsimWindow);
    const double c = (kSsimWindow - 1) / 2.0;
    double s = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        t[i] = std::exp(-(i - c) * (i - c) / (2.0 * kSsimSigma * kSsimSigma));
        s += t[i];
    }
    for (double& v : t) v /= s;
    return t;
}

/// Mean SSIM over valid 11×11 Gaussian windows, averaged over channels.
/// Images are (C, H, W) or (H, W).
inline double ssim(const Tensor& x, const Tensor& y, double max_val) {
    detail::check_same("ssim", x, y);
    if (!(max_val > 0.0)) throw std::invalid_argument("ssim: max_val must be positive");
    if (x.rank() != 2 && x.rank() != 3) throw std::invalid_argument("ssim: expected (C,H,W) or (H,W), got " + shape_str(x.shape()));
    const std::size_t c = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    if (h < kSsimWindow || w < kSsimWindow) {
        throw std::invalid_argument("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is smaller than the 11x11 window");
    }
    const double c1 = (0.01 * max_val) * (0.01 * max_val), c2 = (0.03 * max_val) * (0.03 * max_val);
    const auto taps = ssim_taps();
    const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;

    // Separable valid filtering: rows first into (h, ow), then columns.
    auto filter = [&](const std::vector<double>& img) {
        std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t j = 0; j < ow; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < kSsimWindow; ++t) s += taps[t] * img[r * w + j + t];
                rows[r * ow + j] = s;
            }
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < kSsimWindow; ++t) s += taps[t] * rows[(i + t) * ow + j];
                out[i * ow + j] = s;
            }
        return out;
    };

    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> a(h * w), b(h * w), aa(h * w), bb(h * w), ab(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            a[i] = x.values()[ch * h * w + i];
            b[i] = y.values()[ch * h * w + i];
            aa[i] = a[i] * a[i];
            bb[i] = b[i] * b[i];
            ab[i] = a[i] * b[i];
        }
        const auto ma = filter(a), mb = filter(b), saa = filter(aa), sbb = filter(bb), sab = filter(ab);
        double sum = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) {
            const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
            sum += ((2.0 * (ma[i] * mb[i]) + c1) * (2.0 * cov + c2)) /
                   ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(oh * ow);
    }
    return total / static_cast<double>(c);
}

}  // namespace spap::metrics
