#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "spap/graph.hpp"

namespace spap {

/// Scalar-valued differentiable map. It must use the tensor it is given (so
/// perturbations reach it) and build its ops on the supplied graph.
using ScalarFn = std::function<Tensor(Graph&, const Tensor&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences, component by
/// component: |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult grad_check_detailed(const ScalarFn& f, const Tensor& x, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");

    Tensor probe = x.clone(true);
    std::vector<double> analytic;
    {
        Graph g;
        Tensor y = f(g, probe);
        if (y.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
        g.backward(y);
        analytic.assign(probe.numel(), 0.0);
        if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());
    }

    auto eval_at = [&](std::size_t i, double delta) {
        Tensor p = x.clone(false);
        p.values()[i] += delta;
        Graph g;
        const double v = f(g, p).item();
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: f is not finite at a perturbed point");
        return v;
    };

    GradCheckResult result;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double numeric = (eval_at(i, eps) - eval_at(i, -eps)) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || err > result.max_relative_error) result = {err, i, analytic[i], numeric};
    }
    return result;
}

inline double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
    return grad_check_detailed(f, x, eps).max_relative_error;
}

}  // namespace spap
