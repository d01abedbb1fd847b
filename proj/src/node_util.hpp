#pragma once

// Internal helpers for recording graph nodes.

#include <memory>

#include "finr/graph.hpp"
#include "finr/tensor.hpp"

namespace finr {
namespace detail {

// Defined in graph.cpp; stamps flags and producer node onto a fresh result.
void mark_result(Tensor& t, bool requires_grad, bool traced, std::shared_ptr<Node> node);

}  // namespace detail

// Records a node of type NodeT on `out` when differentiation is active and at
// least one input participates. Extra args are forwarded after the input
// vector.
template <class NodeT, class... Args>
void attach_node(Tensor& out, std::vector<Tensor> inputs, Args&&... args) {
    if (NoGradGuard::active()) return;
    bool rg = false, tr = false;
    for (const auto& t : inputs) {
        rg = rg || t.requires_grad();
        tr = tr || t.traced();
    }
    if (!rg && !tr) return;
    auto node = std::make_shared<NodeT>(std::move(inputs), std::forward<Args>(args)...);
    detail::mark_result(out, rg, tr, std::move(node));
}

}  // namespace finr
