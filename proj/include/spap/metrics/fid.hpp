#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <string>

namespace spap::metrics {

struct GaussianStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    std::size_t n = 0;
};

/// Column mean and unbiased covariance (divisor n−1) of an n×D feature matrix,
/// symmetrized as (S+Sᵀ)/2.
inline GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < 2) throw std::invalid_argument("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
    GaussianStats s;
    s.n = n;
    s.mu = features.colwise().mean().transpose();
    const Eigen::MatrixXd centred = features.rowwise() - s.mu.transpose();
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
    s.sigma = 0.5 * (cov + cov.transpose());
    return s;
}

/// Symmetric PSD square root by eigendecomposition, eigenvalues clamped at 0.
inline Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("matrix_sqrt_psd: matrix is not square");
    if (a.size() == 0) return a;
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("matrix_sqrt_psd: eigendecomposition failed");
    const double scale = std::max(sym.norm(), 1e-300);
    const Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-6 * scale) {
        throw std::invalid_argument("matrix_sqrt_psd: matrix has a significantly negative eigenvalue (" +
                                    std::to_string(ev.minCoeff()) + ")");
    }
    const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd& v = es.eigenvectors();
    Eigen::MatrixXd b = v * root.asDiagonal() * v.transpose();
    return 0.5 * (b + b.transpose());
}

namespace detail {

/// Tr((Σa^{1/2} Σb Σa^{1/2})^{1/2}); every root acts on a symmetric PSD matrix.
inline double cross_trace(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
    const Eigen::MatrixXd ra = matrix_sqrt_psd(sa);
    return matrix_sqrt_psd(ra * sb * ra).trace();
}

}  // namespace detail

/// Fréchet distance between two Gaussians. The cross term is evaluated in both
/// orders and averaged, so fid(x, y) == fid(y, x) bit for bit.
inline double fid(const GaussianStats& x, const GaussianStats& y) {
    if (x.mu.size() != y.mu.size() || x.sigma.rows() != y.sigma.rows()) {
        throw std::invalid_argument("fid: dimension mismatch (" + std::to_string(x.mu.size()) + " vs " +
                                    std::to_string(y.mu.size()) + ")");
    }
    const double mean_term = (x.mu - y.mu).squaredNorm();
    const double cross = detail::cross_trace(x.sigma, y.sigma) + detail::cross_trace(y.sigma, x.sigma);
    const double trace_term = (x.sigma.trace() + y.sigma.trace()) - cross;
    return mean_term + std::max(trace_term, 0.0);
}

}  // namespace spap::metrics
