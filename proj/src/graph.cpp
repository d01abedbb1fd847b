// Reverse-mode sweep and forward-tangent propagation over recorded graphs.

#include "finr/graph.hpp"

#include <unordered_set>

#include "finr/ops.hpp"
#include "node_util.hpp"

namespace finr {

namespace detail {

void mark_result(Tensor& t, bool requires_grad, bool traced, std::shared_ptr<Node> node) {
    t.set_node(std::move(node));
    // Interior flags: requires_grad marks membership on a gradient path,
    // traced marks reachability from a tangent seed.
    const_cast<detail::TensorImpl*>(t.key())->requires_grad = requires_grad;
    const_cast<detail::TensorImpl*>(t.key())->traced = traced;
}

}  // namespace detail

Tensor Node::tangent(const std::vector<Tensor>&, const Tensor&) const {
    throw UnsupportedOperation("primitive '" + std::string(name()) + "' has no tangent rule");
}

const Tensor& GradientMap::at(const Tensor& param) const {
    auto it = map_.find(param.key());
    if (it == map_.end()) throw ContractError("GradientMap: no gradient recorded for tensor");
    return it->second;
}

Tensor GradientMap::grad_or_zero(const Tensor& param) const {
    auto it = map_.find(param.key());
    if (it == map_.end()) return Tensor::zeros(param.shape(), param.dtype());
    return it->second;
}

bool GradSink::wanted(const Tensor& t) const { return t.requires_grad(); }

void GradSink::add(const Tensor& t, const Tensor& g) {
    if (!t.requires_grad()) return;
    if (g.shape() != t.shape())
        throw ContractError("gradient shape " + shape_str(g.shape()) + " does not match tensor shape " +
                            shape_str(t.shape()));
    auto it = slots.find(t.key());
    if (it == slots.end()) {
        slots.emplace(t.key(), g);
    } else {
        it->second = add_raw(it->second, g);
    }
}

Tensor GradSink::add_raw(const Tensor& a, const Tensor& b) {
    NoGradGuard guard;
    return finr::add(a, b);
}

namespace {

// Post-order list of tensors produced by nodes, reachable from `root` through
// inputs satisfying `follow`. Producers precede consumers.
template <class Follow>
std::vector<Tensor> topo_order(const Tensor& root, Follow follow) {
    std::vector<Tensor> order;
    std::unordered_set<const detail::TensorImpl*> visited;
    struct Frame {
        Tensor t;
        size_t next_input = 0;
    };
    std::vector<Frame> stack;
    if (root.node() && follow(root)) stack.push_back({root, 0});
    visited.insert(root.key());
    while (!stack.empty()) {
        Frame& f = stack.back();
        const auto& ins = f.t.node()->inputs();
        if (f.next_input < ins.size()) {
            const Tensor& in = ins[f.next_input++];
            if (in.defined() && in.node() && follow(in) && visited.insert(in.key()).second) {
                stack.push_back({in, 0});
            }
        } else {
            order.push_back(f.t);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

GradientMap backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward: loss must be a scalar tensor" +
                            (loss.defined() ? ", got shape " + shape_str(loss.shape()) : std::string()));
    NoGradGuard guard;

    GradientMap result;
    if (!loss.requires_grad()) return result;

    auto order = topo_order(loss, [](const Tensor& t) { return t.requires_grad(); });

    GradSink sink;
    sink.slots.emplace(loss.key(), Tensor::full(loss.shape(), 1.0, loss.dtype()));

    // Leaf case: the loss itself is a parameter.
    if (!loss.node()) {
        result.raw().emplace(loss.key(), sink.slots[loss.key()]);
        return result;
    }

    // Consumers first.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Tensor& t = *it;
        auto slot = sink.slots.find(t.key());
        Tensor g = slot != sink.slots.end() ? slot->second : Tensor::zeros(t.shape(), t.dtype());
        t.node()->backward(t, g, sink);
        if (slot != sink.slots.end()) sink.slots.erase(t.key());  // free as we go
    }

    // Everything left in the sink belongs to leaves.
    for (auto& [key, g] : sink.slots) {
        result.raw().emplace(key, g);
    }
    return result;
}

Tensor jvp(const Tensor& output, const Tensor& wrt, const Tensor& seed) {
    if (!output.defined() || !wrt.defined()) throw ContractError("jvp: undefined tensor");
    if (seed.shape() != wrt.shape()) throw ShapeError("jvp: seed shape " + shape_str(seed.shape()) + " vs " + shape_str(wrt.shape()));

    auto order = topo_order(output, [](const Tensor&) { return true; });

    std::unordered_map<const detail::TensorImpl*, Tensor> tangents;
    tangents.emplace(wrt.key(), seed);

    for (const Tensor& t : order) {
        const auto& ins = t.node()->inputs();
        std::vector<Tensor> in_tans(ins.size());
        bool any = false;
        for (size_t i = 0; i < ins.size(); ++i) {
            if (!ins[i].defined()) continue;
            auto it = tangents.find(ins[i].key());
            if (it != tangents.end()) {
                in_tans[i] = it->second;
                any = true;
            }
        }
        if (!any) continue;
        Tensor tan = t.node()->tangent(in_tans, t);
        if (tan.defined()) tangents.emplace(t.key(), tan);
    }

    auto it = tangents.find(output.key());
    if (it == tangents.end()) return Tensor::zeros(output.shape(), output.dtype());
    return it->second;
}

Tensor directional_derivative(const Tensor& output, const Tensor& coords, Axis axis) {
    if (coords.rank() != 2 || coords.extent(1) != 3)
        throw ShapeError("directional_derivative: coords must be [B,3], got " + shape_str(coords.shape()));
    Tensor seed = Tensor::zeros(coords.shape(), coords.dtype());
    const int64_t b = coords.extent(0);
    const int64_t col = static_cast<int64_t>(axis);
    if (coords.dtype() == DType::F32) {
        auto d = seed.data<float>();
        for (int64_t i = 0; i < b; ++i) d[static_cast<size_t>(i * 3 + col)] = 1.0f;
    } else {
        auto d = seed.data<double>();
        for (int64_t i = 0; i < b; ++i) d[static_cast<size_t>(i * 3 + col)] = 1.0;
    }
    return jvp(output, coords, seed);
}

}  // namespace finr
