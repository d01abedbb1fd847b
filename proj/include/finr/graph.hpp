#pragma once

#include <string_view>
#include <unordered_map>
#include <vector>

#include "finr/tensor.hpp"

namespace finr {

class GradSink;

// One recorded operation in the differentiation graph. Nodes own their input
// tensors; the output tensor owns its node, so a live loss tensor keeps the
// whole graph reachable and dropping it frees everything.
class Node {
public:
    explicit Node(std::vector<Tensor> inputs) : inputs_(std::move(inputs)) {}
    virtual ~Node() = default;

    virtual std::string_view name() const = 0;

    // Accumulates d(loss)/d(input_i) into the sink, given the node's output
    // value and d(loss)/d(output). Runs under NoGradGuard.
    virtual void backward(const Tensor& out, const Tensor& grad_out, GradSink& sink) const = 0;

    // Builds the forward-tangent of the output from input tangents as graph
    // expressions, so the result is itself differentiable. An undefined
    // tensor in in_tans means that input has an identically-zero tangent; an
    // undefined return means the output tangent is identically zero.
    virtual Tensor tangent(const std::vector<Tensor>& in_tans, const Tensor& out) const;

    const std::vector<Tensor>& inputs() const { return inputs_; }

protected:
    std::vector<Tensor> inputs_;
};

// Gradients of a scalar loss with respect to the requires_grad leaves of its
// graph. Keys are tensor identities (the shared buffer), so parameters that
// are updated in place keep their association across iterations.
class GradientMap {
public:
    bool contains(const Tensor& param) const { return map_.count(param.key()) != 0; }
    const Tensor& at(const Tensor& param) const;
    // Exact zeros for leaves that were not reached by the backward sweep.
    Tensor grad_or_zero(const Tensor& param) const;
    size_t size() const { return map_.size(); }

    std::unordered_map<const detail::TensorImpl*, Tensor>& raw() { return map_; }
    const std::unordered_map<const detail::TensorImpl*, Tensor>& raw() const { return map_; }

private:
    std::unordered_map<const detail::TensorImpl*, Tensor> map_;
};

// Accumulator used during the backward sweep.
class GradSink {
public:
    // Adds g to the gradient slot of t (no-op for tensors that neither
    // require grad nor lead to any that do).
    void add(const Tensor& t, const Tensor& g);

    bool wanted(const Tensor& t) const;

    std::unordered_map<const detail::TensorImpl*, Tensor> slots;

private:
    static Tensor add_raw(const Tensor& a, const Tensor& b);
};

// Reverse-mode sweep from a scalar loss. Repeated calls on the same graph
// return identical results; nothing is cached on the tensors themselves.
GradientMap backward(const Tensor& loss);

enum class Axis : int { X = 0, Y = 1, T = 2 };

// Forward-tangent (JVP) of `output` w.r.t. one column of the `coords` leaf it
// was computed from. The result is a graph node, so backward() through it
// yields parameter gradients of expressions containing the derivative.
Tensor directional_derivative(const Tensor& output, const Tensor& coords, Axis axis);

// General JVP: seed is the tangent of `wrt` (same shape).
Tensor jvp(const Tensor& output, const Tensor& wrt, const Tensor& seed);

}  // namespace finr
