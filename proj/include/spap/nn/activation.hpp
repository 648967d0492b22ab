#pragma once

#include <stdexcept>
#include <string>

#include "spap/ops.hpp"

namespace spap::nn {

enum class ActKind { relu, lrelu, sigmoid, tanh };

struct Activation {
    ActKind kind = ActKind::relu;
    double slope = 0.0;  // lrelu only

    friend bool operator==(const Activation&, const Activation&) = default;
};

inline Tensor activate(Graph& g, const Tensor& x, const Activation& a) {
    switch (a.kind) {
        case ActKind::relu: return ops::relu(g, x);
        case ActKind::lrelu: return ops::lrelu(g, x, a.slope);
        case ActKind::sigmoid: return ops::sigmoid(g, x);
        case ActKind::tanh: return ops::tanh(g, x);
    }
    throw std::logic_error("activate: unknown kind");
}

}  // namespace spap::nn
