#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "spap/tensor.hpp"

namespace spap {

/// Backward closure of one recorded op. `out_grad` is dL/d(output); for every
/// input that needs a gradient `input_grads[i]` is a buffer to accumulate
/// dL/d(input i) into (always `+=`, inputs may alias). Inputs that need no
/// gradient get an empty span.
using BackwardFn = std::function<void(std::span<const double> out_grad,
                                      std::span<const std::span<double>> input_grads)>;

/// Append-only tape. Node k only references inputs with id < k, so insertion
/// order is a topological order and backward is a reverse sweep.
class Graph {
   public:
    struct Node {
        std::string op;
        std::vector<NodeId> inputs;
        Tensor value;
        BackwardFn backward;
        bool needs_grad = false;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    /// Registers `t` as a leaf (idempotent) and returns its node id.
    NodeId leaf(const Tensor& t) {
        if (auto it = index_.find(t.key()); it != index_.end()) return it->second;
        const auto id = static_cast<NodeId>(nodes_.size());
        nodes_.push_back(Node{"leaf", {}, t, {}, t.requires_grad()});
        index_.emplace(t.key(), id);
        t.impl().node_id = id;
        return id;
    }

    /// Records `output = op(inputs)`. The backward closure is dropped when no
    /// input needs a gradient, so gradient-free evaluation stays cheap.
    Tensor record(std::string op, const std::vector<Tensor>& inputs, Tensor output, BackwardFn backward) {
        Node node;
        node.op = std::move(op);
        node.inputs.reserve(inputs.size());
        for (const auto& in : inputs) {
            const NodeId id = leaf(in);
            node.inputs.push_back(id);
            node.needs_grad = node.needs_grad || nodes_[static_cast<std::size_t>(id)].needs_grad;
        }
        if (node.needs_grad) node.backward = std::move(backward);
        const auto id = static_cast<NodeId>(nodes_.size());
        output.impl().node_id = id;
        output.impl().requires_grad = node.needs_grad;
        node.value = output;
        nodes_.push_back(std::move(node));
        index_.emplace(output.key(), id);
        return output;
    }

    bool contains(const Tensor& t) const { return t.defined() && index_.count(t.key()) > 0; }
    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    /// Populates grads of every requires_grad leaf reachable from `root`.
    /// Leaf gradients accumulate across calls; callers zero them.
    void backward(const Tensor& root) {
        if (!root.defined() || root.numel() != 1) {
            throw std::invalid_argument("backward: root must be scalar, got shape " +
                                        (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
        }
        auto it = index_.find(root.key());
        if (it == index_.end()) throw std::invalid_argument("backward: root is not part of this graph");
        const NodeId root_id = it->second;
        if (!nodes_[static_cast<std::size_t>(root_id)].needs_grad) return;

        std::vector<std::vector<double>> scratch(nodes_.size());
        auto grad_buffer = [&](NodeId id) -> std::span<double> {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.needs_grad) return {};
            if (n.op == "leaf") return n.value.mutable_grad();
            auto& buf = scratch[static_cast<std::size_t>(id)];
            if (buf.empty()) buf.assign(n.value.numel(), 0.0);
            return buf;
        };

        grad_buffer(root_id)[0] += 1.0;
        std::vector<std::span<double>> in_grads;
        for (NodeId k = root_id; k >= 0; --k) {
            auto& n = nodes_[static_cast<std::size_t>(k)];
            if (n.op == "leaf" || !n.needs_grad) continue;
            const auto& out = scratch[static_cast<std::size_t>(k)];
            if (out.empty()) continue;  // not reachable from root
            in_grads.clear();
            for (NodeId in : n.inputs) in_grads.push_back(grad_buffer(in));
            n.backward(out, in_grads);
        }
    }

   private:
    std::vector<Node> nodes_;
    std::unordered_map<const void*, NodeId> index_;
};

}  // namespace spap
