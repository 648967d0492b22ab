#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spap/nn/init.hpp"

namespace spap::train {

struct AdamMoments {
    std::vector<double> m, v;
    std::uint64_t t = 0;
};

/// Bias-corrected Adam with per-parameter step counters, so a group that
/// starts updating late gets a fresh bias correction.
class Adam {
   public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
        if (!(beta1 >= 0.0 && beta1 < beta2 && beta2 < 1.0)) throw std::invalid_argument("adam: need 0 <= beta1 < beta2 < 1");
        if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    /// Updates every parameter whose group is enabled. All gradients are
    /// checked before anything moves, so a bad step leaves parameters intact.
    void step(const std::vector<nn::ParamRef>& params, bool update_delayed = true) {
        for (const auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (double gv : p.tensor.grad()) {
                if (!std::isfinite(gv)) throw std::runtime_error("non-finite gradient in parameter '" + p.path + "'");
            }
        }
        for (const auto& p : params) {
            if (p.group == nn::ParamGroup::delayed && !update_delayed) continue;
            if (!p.tensor.has_grad()) continue;
            update(p.path, p.tensor);
        }
    }

    const std::map<std::string, AdamMoments>& state() const { return state_; }

   private:
    void update(const std::string& path, Tensor t) {
        auto& s = state_[path];
        const std::size_t n = t.numel();
        if (s.m.empty()) {
            s.m.assign(n, 0.0);
            s.v.assign(n, 0.0);
        }
        ++s.t;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
        auto vals = t.values();
        auto grad = t.grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double gv = grad[i];
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gv;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gv * gv;
            vals[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
        }
    }

    double lr_, beta1_, beta2_, eps_;
    std::map<std::string, AdamMoments> state_;
};

inline void zero_grads(const std::vector<nn::ParamRef>& params) {
    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
}

}  // namespace spap::train
