#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spap {

using Shape = std::vector<std::size_t>;
using NodeId = std::ptrdiff_t;
inline constexpr NodeId kNoNode = -1;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense double-precision array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage (parameters are shared between a
/// network and the graphs that read them). Use clone() for a deep copy.
/// Images use NCHW layout.
class Tensor {
   public:
    Tensor() = default;

    /// Zero-filled.
    explicit Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
        check_shape(shape);
        impl_->values.assign(shape_numel(shape), 0.0);
        impl_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : impl_(std::make_shared<Impl>()) {
        check_shape(shape);
        if (shape_numel(shape) != values.size()) {
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                        std::to_string(shape_numel(shape)) + " values, got " +
                                        std::to_string(values.size()));
        }
        impl_->shape = std::move(shape);
        impl_->values = std::move(values);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        Tensor t(shape);
        t.set_requires_grad(requires_grad);
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

    static Tensor filled(const Shape& shape, double v, bool requires_grad = false) {
        return Tensor(shape, std::vector<double>(shape_numel(shape), v), requires_grad);
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
    static Tensor ones_like(const Tensor& t) { return filled(t.shape(), 1.0); }

    bool defined() const { return impl_ != nullptr; }

    const Shape& shape() const { return impl().shape; }
    std::size_t rank() const { return impl().shape.size(); }
    std::size_t dim(std::size_t i) const { return impl().shape.at(i); }
    std::size_t numel() const { return impl().values.size(); }

    std::span<double> values() { return impl().values; }
    std::span<const double> values() const { return impl().values; }
    const std::vector<double>& vec() const { return impl().values; }

    double item() const {
        if (numel() != 1) throw std::invalid_argument("item(): tensor has shape " + shape_str(shape()));
        return impl().values[0];
    }

    bool requires_grad() const { return impl().requires_grad; }
    void set_requires_grad(bool on) { impl().requires_grad = on; }

    bool has_grad() const { return !impl().grad.empty(); }
    std::span<const double> grad() const { return impl().grad; }

    /// Gradient buffer, allocated as zeros on first access.
    std::span<double> mutable_grad() {
        auto& g = impl().grad;
        if (g.empty()) g.assign(numel(), 0.0);
        return g;
    }

    void zero_grad() { impl().grad.clear(); }

    NodeId node_id() const { return impl().node_id; }

    Tensor clone(bool requires_grad = false) const { return Tensor(shape(), impl().values, requires_grad); }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
    const void* key() const { return impl_.get(); }

   private:
    friend class Graph;

    struct Impl {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
        NodeId node_id = kNoNode;
    };

    static void check_shape(const Shape& shape) {
        if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
        for (auto d : shape) {
            if (d == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
        }
    }

    Impl& impl() const {
        if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
        return *impl_;
    }

    std::shared_ptr<Impl> impl_;
};

}  // namespace spap
