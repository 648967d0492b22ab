#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

#include "spap/graph.hpp"

namespace spap::nn {

struct ConvOptions {
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t dilation = 1;
};

/// Convolution parameters. For conv2d the weight is (out, in, k, k); for
/// conv_transpose2d it is (in, out, k, k), i.e. the weight of the conv2d the
/// transposed op is the adjoint of. Bias is optional.
struct ConvParams {
    Tensor weight;
    Tensor bias;
    ConvOptions opts;
};

inline std::size_t effective_kernel(std::size_t k, std::size_t dilation) { return dilation * (k - 1) + 1; }

/// floor((n + 2p - k_eff)/s) + 1, or 0 when the window does not fit.
inline std::size_t conv_out_size(std::size_t n, std::size_t k, const ConvOptions& o) {
    const std::size_t keff = effective_kernel(k, o.dilation);
    if (n + 2 * o.pad < keff) return 0;
    return (n + 2 * o.pad - keff) / o.stride + 1;
}

/// (n - 1)s - 2p + k_eff, or 0 when padding eats the whole output.
inline std::size_t deconv_out_size(std::size_t n, std::size_t k, const ConvOptions& o) {
    const std::size_t full = (n - 1) * o.stride + effective_kernel(k, o.dilation);
    if (full <= 2 * o.pad) return 0;
    return full - 2 * o.pad;
}

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Geometry {
    std::size_t n, c, h, w;    // image side
    std::size_t k;             // square kernel
    ConvOptions o;
    std::size_t ho, wo;        // window grid
    std::size_t rows() const { return c * k * k; }
    std::size_t cols() const { return n * ho * wo; }
};

// cols[(ci*k + ky)*k + kx, (s*ho + oy)*wo + ox] = img[s, ci, oy*st - p + ky*d, ox*st - p + kx*d]
inline void im2col(const double* img, const Geometry& g, double* cols) {
    const std::size_t ncol = g.cols();
    const auto pad = static_cast<std::ptrdiff_t>(g.o.pad);
    for (std::size_t ci = 0; ci < g.c; ++ci) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = cols + ((ci * g.k + ky) * g.k + kx) * ncol;
                for (std::size_t s = 0; s < g.n; ++s) {
                    const double* plane = img + (s * g.c + ci) * g.h * g.w;
                    double* dst = row + s * g.ho * g.wo;
                    for (std::size_t oy = 0; oy < g.ho; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * g.o.stride + ky * g.o.dilation) - pad;
                        double* drow = dst + oy * g.wo;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                            std::fill(drow, drow + g.wo, 0.0);
                            continue;
                        }
                        const double* srow = plane + static_cast<std::size_t>(iy) * g.w;
                        for (std::size_t ox = 0; ox < g.wo; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * g.o.stride + kx * g.o.dilation) - pad;
                            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0
                                                                                          : srow[ix];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds columns back into the image.
inline void col2im(const double* cols, const Geometry& g, double* img) {
    const std::size_t ncol = g.cols();
    const auto pad = static_cast<std::ptrdiff_t>(g.o.pad);
    for (std::size_t ci = 0; ci < g.c; ++ci) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = cols + ((ci * g.k + ky) * g.k + kx) * ncol;
                for (std::size_t s = 0; s < g.n; ++s) {
                    double* plane = img + (s * g.c + ci) * g.h * g.w;
                    const double* src = row + s * g.ho * g.wo;
                    for (std::size_t oy = 0; oy < g.ho; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * g.o.stride + ky * g.o.dilation) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                        double* drow = plane + static_cast<std::size_t>(iy) * g.w;
                        const double* srow = src + oy * g.wo;
                        for (std::size_t ox = 0; ox < g.wo; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * g.o.stride + kx * g.o.dilation) - pad;
                            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

// (n, c, hw) <-> (c, n*hw) channel-major matrix layout.
inline void nchw_to_cm(const double* src, std::size_t n, std::size_t c, std::size_t hw, double* dst) {
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ci = 0; ci < c; ++ci)
            std::copy_n(src + (s * c + ci) * hw, hw, dst + ci * n * hw + s * hw);
}

inline void cm_to_nchw_add(const double* src, std::size_t n, std::size_t c, std::size_t hw, double* dst) {
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double* a = src + ci * n * hw + s * hw;
            double* b = dst + (s * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) b[i] += a[i];
        }
}

inline void check_conv_inputs(const char* op, const Tensor& x, const Tensor& w, const Tensor& b,
                              std::size_t x_channels_dim_of_w, std::size_t out_dim_of_w, const ConvOptions& o) {
    if (x.rank() != 4) throw std::invalid_argument(std::string(op) + ": input must be NCHW, got " + shape_str(x.shape()));
    if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) == 0) {
        throw std::invalid_argument(std::string(op) + ": weight must be (a, b, k, k), got " + shape_str(w.shape()));
    }
    if (o.stride == 0 || o.dilation == 0) throw std::invalid_argument(std::string(op) + ": stride and dilation must be >= 1");
    if (x.dim(1) != w.dim(x_channels_dim_of_w)) {
        throw std::invalid_argument(std::string(op) + ": channel mismatch, input " + shape_str(x.shape()) +
                                    " vs weight " + shape_str(w.shape()));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(out_dim_of_w))) {
        throw std::invalid_argument(std::string(op) + ": bias shape " + shape_str(b.shape()) + " does not match weight " +
                                    shape_str(w.shape()));
    }
}

inline void add_bias(std::span<double> out, const Tensor& b, std::size_t n, std::size_t c, std::size_t hw) {
    if (!b.defined()) return;
    auto bv = b.values();
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ci = 0; ci < c; ++ci) {
            double* p = out.data() + (s * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) p[i] += bv[ci];
        }
}

inline void bias_grad(std::span<const double> go, std::span<double> gb, std::size_t n, std::size_t c, std::size_t hw) {
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double* p = go.data() + (s * c + ci) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += p[i];
            gb[ci] += acc;
        }
}

}  // namespace detail

/// Dilated 2-D cross-correlation. x: (N, Cin, H, W), w: (Cout, Cin, k, k),
/// b: (Cout) or undefined.
inline Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b, const ConvOptions& o) {
    detail::check_conv_inputs("conv2d", x, w, b, 1, 0, o);
    const std::size_t k = w.dim(2);
    const std::size_t ho = conv_out_size(x.dim(2), k, o), wo = conv_out_size(x.dim(3), k, o);
    if (ho == 0 || wo == 0) {
        throw std::invalid_argument("conv2d: non-positive output size for input " + shape_str(x.shape()) +
                                    " with kernel " + std::to_string(k) + ", dilation " + std::to_string(o.dilation));
    }
    const detail::Geometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k, o, ho, wo};
    const std::size_t cout = w.dim(0);

    std::vector<double> cols(geo.rows() * geo.cols());
    detail::im2col(x.values().data(), geo, cols.data());
    std::vector<double> res(cout * geo.cols());
    detail::MapMat(res.data(), cout, geo.cols()).noalias() =
        detail::ConstMapMat(w.values().data(), cout, geo.rows()) * detail::ConstMapMat(cols.data(), geo.rows(), geo.cols());

    Tensor out({geo.n, cout, ho, wo});
    detail::cm_to_nchw_add(res.data(), geo.n, cout, ho * wo, out.values().data());
    detail::add_bias(out.values(), b, geo.n, cout, ho * wo);

    std::vector<Tensor> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return g.record("conv2d", inputs, out,
                    [x, w, geo, cout](std::span<const double> go, std::span<const std::span<double>> gi) {
                        const std::size_t hw = geo.ho * geo.wo;
                        std::vector<double> gm(cout * geo.cols());
                        detail::nchw_to_cm(go.data(), geo.n, cout, hw, gm.data());
                        detail::ConstMapMat G(gm.data(), cout, geo.cols());
                        std::vector<double> cols(geo.rows() * geo.cols());
                        if (!gi[1].empty()) {
                            detail::im2col(x.values().data(), geo, cols.data());
                            detail::MapMat(gi[1].data(), cout, geo.rows()).noalias() +=
                                G * detail::ConstMapMat(cols.data(), geo.rows(), geo.cols()).transpose();
                        }
                        if (gi.size() > 2 && !gi[2].empty()) detail::bias_grad(go, gi[2], geo.n, cout, hw);
                        if (!gi[0].empty()) {
                            detail::MapMat(cols.data(), geo.rows(), geo.cols()).noalias() =
                                detail::ConstMapMat(w.values().data(), cout, geo.rows()).transpose() * G;
                            detail::col2im(cols.data(), geo, gi[0].data());
                        }
                    });
}

inline Tensor conv2d(Graph& g, const Tensor& x, const ConvParams& p) { return conv2d(g, x, p.weight, p.bias, p.opts); }

/// Transposed convolution: the exact adjoint of conv2d with the same weight
/// (bias aside). x: (N, Cin, H, W), w: (Cin, Cout, k, k), b: (Cout).
inline Tensor conv_transpose2d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b, const ConvOptions& o) {
    detail::check_conv_inputs("conv_transpose2d", x, w, b, 0, 1, o);
    const std::size_t k = w.dim(2);
    const std::size_t ho = deconv_out_size(x.dim(2), k, o), wo = deconv_out_size(x.dim(3), k, o);
    if (ho == 0 || wo == 0) {
        throw std::invalid_argument("conv_transpose2d: non-positive output size for input " + shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0), cin = x.dim(1), cout = w.dim(1), hw_in = x.dim(2) * x.dim(3);
    // The output image plays the conv2d input role; x is its window grid.
    const detail::Geometry geo{n, cout, ho, wo, k, o, x.dim(2), x.dim(3)};
    if (conv_out_size(ho, k, o) != x.dim(2) || conv_out_size(wo, k, o) != x.dim(3)) {
        throw std::invalid_argument("conv_transpose2d: geometry is not invertible for input " + shape_str(x.shape()));
    }

    std::vector<double> xm(cin * n * hw_in);
    detail::nchw_to_cm(x.values().data(), n, cin, hw_in, xm.data());
    std::vector<double> cols(geo.rows() * geo.cols());
    detail::MapMat(cols.data(), geo.rows(), geo.cols()).noalias() =
        detail::ConstMapMat(w.values().data(), cin, geo.rows()).transpose() *
        detail::ConstMapMat(xm.data(), cin, geo.cols());
    Tensor out({n, cout, ho, wo});
    detail::col2im(cols.data(), geo, out.values().data());
    detail::add_bias(out.values(), b, n, cout, ho * wo);

    std::vector<Tensor> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return g.record("conv_transpose2d", inputs, out,
                    [x, w, geo, cin, hw_in](std::span<const double> go, std::span<const std::span<double>> gi) {
                        std::vector<double> cols(geo.rows() * geo.cols());
                        detail::im2col(go.data(), geo, cols.data());
                        detail::ConstMapMat C(cols.data(), geo.rows(), geo.cols());
                        if (!gi[0].empty()) {
                            std::vector<double> gx(cin * geo.cols());
                            detail::MapMat(gx.data(), cin, geo.cols()).noalias() =
                                detail::ConstMapMat(w.values().data(), cin, geo.rows()) * C;
                            detail::cm_to_nchw_add(gx.data(), geo.n, cin, hw_in, gi[0].data());
                        }
                        if (!gi[1].empty()) {
                            std::vector<double> xm(cin * geo.cols());
                            detail::nchw_to_cm(x.values().data(), geo.n, cin, hw_in, xm.data());
                            detail::MapMat(gi[1].data(), cin, geo.rows()).noalias() +=
                                detail::ConstMapMat(xm.data(), cin, geo.cols()) * C.transpose();
                        }
                        if (gi.size() > 2 && !gi[2].empty()) detail::bias_grad(go, gi[2], geo.n, geo.c, geo.h * geo.w);
                    });
}

inline Tensor conv_transpose2d(Graph& g, const Tensor& x, const ConvParams& p) {
    return conv_transpose2d(g, x, p.weight, p.bias, p.opts);
}

/// Fully connected layer on the flattened trailing dimensions:
/// x: (N, ...) with prod(...) = in, w: (out, in), b: (out). Result (N, out).
inline Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw std::invalid_argument("linear: weight must be (out, in), got " + shape_str(w.shape()));
    const std::size_t n = x.dim(0), in = x.numel() / n, outf = w.dim(0);
    if (in != w.dim(1)) {
        throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " does not match weight " +
                                    shape_str(w.shape()));
    }
    if (b.defined() && (b.rank() != 1 || b.dim(0) != outf)) {
        throw std::invalid_argument("linear: bias shape " + shape_str(b.shape()) + " does not match " + shape_str(w.shape()));
    }
    Tensor out({n, outf});
    detail::MapMat(out.values().data(), n, outf).noalias() =
        detail::ConstMapMat(x.values().data(), n, in) * detail::ConstMapMat(w.values().data(), outf, in).transpose();
    if (b.defined()) {
        auto ov = out.values();
        auto bv = b.values();
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t j = 0; j < outf; ++j) ov[s * outf + j] += bv[j];
    }
    std::vector<Tensor> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return g.record("linear", inputs, out, [x, w, n, in, outf](std::span<const double> go, std::span<const std::span<double>> gi) {
        detail::ConstMapMat G(go.data(), n, outf);
        if (!gi[0].empty()) {
            detail::MapMat(gi[0].data(), n, in).noalias() += G * detail::ConstMapMat(w.values().data(), outf, in);
        }
        if (!gi[1].empty()) {
            detail::MapMat(gi[1].data(), outf, in).noalias() += G.transpose() * detail::ConstMapMat(x.values().data(), n, in);
        }
        if (gi.size() > 2 && !gi[2].empty()) {
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t j = 0; j < outf; ++j) gi[2][j] += go[s * outf + j];
        }
    });
}

}  // namespace spap::nn
