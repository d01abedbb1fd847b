// Elementwise primitives, reductions, and precision casts, with their adjoint
// and tangent rules.

#include <cmath>

#include "finr/ops.hpp"
#include "kernels.hpp"
#include "node_util.hpp"

namespace finr {

namespace {

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw DomainError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                          dtype_name(b.dtype()));
}

template <class F>
Tensor ew_binary_op(const Tensor& a, const Tensor& b, const char* op, F f) {
    check_same_dtype(a, b, op);
    Shape os = broadcast_shapes(a.shape(), b.shape());
    Tensor out = make_tensor(os, a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::ew_binary_strided<T>(a.data<T>().data(), kernels::bcast_strides(a.shape(), os),
                                      b.data<T>().data(), kernels::bcast_strides(b.shape(), os),
                                      out.data<T>().data(), std::vector<int64_t>(os.begin(), os.end()),
                                      [f](T x, T y) { return f(x, y); });
    });
    return out;
}

template <class F>
Tensor ew_unary_op(const Tensor& a, F f) {
    Tensor out = make_tensor(a.shape(), a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::ew_unary_flat<T>(a.data<T>().data(), out.data<T>().data(), a.numel(),
                                  [f](T x) { return f(x); });
    });
    return out;
}

// ---- node types ----

struct AddNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "add"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0])) sink.add(inputs_[0], reduce_to(g, inputs_[0].shape()));
        if (sink.wanted(inputs_[1])) sink.add(inputs_[1], reduce_to(g, inputs_[1].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined()) return t[1];
        if (!t[1].defined()) return t[0];
        return add(t[0], t[1]);
    }
};

struct SubNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "sub"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0])) sink.add(inputs_[0], reduce_to(g, inputs_[0].shape()));
        if (sink.wanted(inputs_[1])) sink.add(inputs_[1], reduce_to(neg(g), inputs_[1].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined() && !t[1].defined()) return {};
        if (!t[1].defined()) return t[0];
        if (!t[0].defined()) return neg(t[1]);
        return sub(t[0], t[1]);
    }
};

struct MulNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "mul"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0])) sink.add(inputs_[0], reduce_to(mul(g, inputs_[1]), inputs_[0].shape()));
        if (sink.wanted(inputs_[1])) sink.add(inputs_[1], reduce_to(mul(g, inputs_[0]), inputs_[1].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        Tensor r;
        if (t[0].defined()) r = mul(t[0], inputs_[1]);
        if (t[1].defined()) {
            Tensor s = mul(inputs_[0], t[1]);
            r = r.defined() ? add(r, s) : s;
        }
        return r;
    }
};

struct DivNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "div"; }
    void backward(const Tensor& out, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0])) sink.add(inputs_[0], reduce_to(div(g, inputs_[1]), inputs_[0].shape()));
        if (sink.wanted(inputs_[1]))
            sink.add(inputs_[1], reduce_to(neg(div(mul(g, out), inputs_[1])), inputs_[1].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor& out) const override {
        Tensor r;
        if (t[0].defined()) r = div(t[0], inputs_[1]);
        if (t[1].defined()) {
            Tensor s = div(mul(out, t[1]), inputs_[1]);
            r = r.defined() ? sub(r, s) : neg(s);
        }
        return r;
    }
};

struct NegNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "neg"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], neg(g));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? neg(t[0]) : Tensor{};
    }
};

struct SquareNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "square"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], mul(mul(g, inputs_[0]), Tensor::scalar(2.0, g.dtype())));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined()) return {};
        return mul(mul(inputs_[0], t[0]), Tensor::scalar(2.0, t[0].dtype()));
    }
};

struct SqrtNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "sqrt"; }
    void backward(const Tensor& out, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], div(mul(g, Tensor::scalar(0.5, g.dtype())), out));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor& out) const override {
        if (!t[0].defined()) return {};
        return div(mul(t[0], Tensor::scalar(0.5, t[0].dtype())), out);
    }
};

struct AbsNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "abs"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], mul(g, sign_mask(inputs_[0])));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined()) return {};
        return mul(t[0], sign_mask(inputs_[0]));
    }
};

struct ReluNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "relu"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], mul(g, step_mask(inputs_[0])));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined()) return {};
        return mul(t[0], step_mask(inputs_[0]));
    }
};

// Broadcast-copy of src (shaped like `target` with keepdims-1 on reduced
// axes) up to target shape. Plain kernel used by reduction adjoints.
Tensor expand_to(const Tensor& src, const Shape& target) {
    Tensor out = make_tensor(target, src.dtype());
    kernels::dispatch(src.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::ew_binary_strided<T>(src.data<T>().data(), kernels::bcast_strides(src.shape(), target),
                                      src.data<T>().data(), kernels::bcast_strides(src.shape(), target),
                                      out.data<T>().data(), std::vector<int64_t>(target.begin(), target.end()),
                                      [](T x, T) { return x; });
    });
    return out;
}

struct SumAllNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "sum"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], Tensor::full(inputs_[0].shape(), g.item(), g.dtype()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? sum(t[0]) : Tensor{};
    }
};

struct SumAxisNode final : Node {
    SumAxisNode(std::vector<Tensor> in, int axis, bool keepdims)
        : Node(std::move(in)), axis_(axis), keepdims_(keepdims) {}
    std::string_view name() const override { return "sum_axis"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        Shape kshape = inputs_[0].shape();
        kshape[static_cast<size_t>(axis_)] = 1;
        Tensor gr = reshape_plain(g, kshape);
        sink.add(inputs_[0], expand_to(gr, inputs_[0].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? sum(t[0], axis_, keepdims_) : Tensor{};
    }
    static Tensor reshape_plain(const Tensor& t, const Shape& s) {
        Tensor r = make_tensor(s, t.dtype());
        kernels::dispatch(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto src = t.data<T>();
            auto dst = r.data<T>();
            std::copy(src.begin(), src.end(), dst.begin());
        });
        return r;
    }
    int axis_;
    bool keepdims_;
};

struct MeanAllNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "mean"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const double inv = 1.0 / static_cast<double>(inputs_[0].numel());
        sink.add(inputs_[0], Tensor::full(inputs_[0].shape(), g.item() * inv, g.dtype()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? mean(t[0]) : Tensor{};
    }
};

struct MeanAxisNode final : Node {
    MeanAxisNode(std::vector<Tensor> in, int axis, bool keepdims)
        : Node(std::move(in)), axis_(axis), keepdims_(keepdims) {}
    std::string_view name() const override { return "mean_axis"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const double inv = 1.0 / static_cast<double>(inputs_[0].extent(axis_));
        Shape kshape = inputs_[0].shape();
        kshape[static_cast<size_t>(axis_)] = 1;
        Tensor gr = SumAxisNode::reshape_plain(mul(g, Tensor::scalar(inv, g.dtype())), kshape);
        sink.add(inputs_[0], expand_to(gr, inputs_[0].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? mean(t[0], axis_, keepdims_) : Tensor{};
    }
    int axis_;
    bool keepdims_;
};

struct CastNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "cast"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], g.astype(inputs_[0].dtype()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor& out) const override {
        return t[0].defined() ? cast(t[0], out.dtype()) : Tensor{};
    }
};

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const size_t ra = a.size(), rb = b.size();
    const size_t r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        const int64_t ea = i < r - ra ? 1 : a[i - (r - ra)];
        const int64_t eb = i < r - rb ? 1 : b[i - (r - rb)];
        if (ea != eb && ea != 1 && eb != 1)
            throw ShapeError("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = ew_binary_op(a, b, "add", [](auto x, auto y) { return x + y; });
    attach_node<AddNode>(out, {a, b});
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = ew_binary_op(a, b, "sub", [](auto x, auto y) { return x - y; });
    attach_node<SubNode>(out, {a, b});
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = ew_binary_op(a, b, "mul", [](auto x, auto y) { return x * y; });
    attach_node<MulNode>(out, {a, b});
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    // In the 64-bit verification mode a zero denominator is a hard error; the
    // 32-bit fast path follows IEEE semantics.
    if (b.dtype() == DType::F64) {
        auto d = b.data<double>();
        for (size_t i = 0; i < d.size(); ++i)
            if (d[i] == 0.0) throw DomainError("div: zero denominator at flat index " + std::to_string(i));
    }
    Tensor out = ew_binary_op(a, b, "div", [](auto x, auto y) { return x / y; });
    attach_node<DivNode>(out, {a, b});
    return out;
}

Tensor neg(const Tensor& a) {
    Tensor out = ew_unary_op(a, [](auto x) { return -x; });
    attach_node<NegNode>(out, {a});
    return out;
}

Tensor square(const Tensor& a) {
    Tensor out = ew_unary_op(a, [](auto x) { return x * x; });
    attach_node<SquareNode>(out, {a});
    return out;
}

Tensor sqrt(const Tensor& a) {
    Tensor out = ew_unary_op(a, [](auto x) { return std::sqrt(x); });
    attach_node<SqrtNode>(out, {a});
    return out;
}

Tensor abs(const Tensor& a) {
    Tensor out = ew_unary_op(a, [](auto x) { return x < 0 ? -x : x; });
    attach_node<AbsNode>(out, {a});
    return out;
}

Tensor relu(const Tensor& a) {
    using std::max;
    Tensor out = ew_unary_op(a, [](auto x) { return x > 0 ? x : decltype(x){0}; });
    attach_node<ReluNode>(out, {a});
    return out;
}

Tensor step_mask(const Tensor& a) {
    // Constant w.r.t. differentiation: no node.
    return ew_unary_op(a, [](auto x) { return x > 0 ? decltype(x){1} : decltype(x){0}; });
}

Tensor sign_mask(const Tensor& a) {
    return ew_unary_op(a, [](auto x) { return x > 0 ? decltype(x){1} : (x < 0 ? decltype(x){-1} : decltype(x){0}); });
}

Tensor sum(const Tensor& a) {
    Tensor out = make_tensor({}, a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = a.data<T>();
        T acc{0};
        for (size_t i = 0; i < d.size(); ++i) acc += d[i];
        out.data<T>()[0] = acc;
    });
    attach_node<SumAllNode>(out, {a});
    return out;
}

Tensor sum(const Tensor& a, int axis, bool keepdims) {
    if (axis < 0 || axis >= a.rank()) throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    Shape os;
    for (int i = 0; i < a.rank(); ++i) {
        if (i == axis) {
            if (keepdims) os.push_back(1);
        } else {
            os.push_back(a.extent(i));
        }
    }
    Tensor out = make_tensor(os, a.dtype());
    const int64_t outer = kernels::prod(std::vector<int64_t>(a.shape().begin(), a.shape().end()), 0, static_cast<size_t>(axis));
    const int64_t red = a.extent(axis);
    const int64_t inner = a.numel() / (outer * red == 0 ? 1 : outer * red);
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        std::fill(dst.begin(), dst.end(), T{0});
        for (int64_t u = 0; u < outer; ++u)
            for (int64_t r = 0; r < red; ++r) {
                const T* s = src.data() + (u * red + r) * inner;
                T* d = dst.data() + u * inner;
                for (int64_t i = 0; i < inner; ++i) d[i] += s[i];
            }
    });
    attach_node<SumAxisNode>(out, {a}, axis, keepdims);
    return out;
}

Tensor mean(const Tensor& a) {
    Tensor s;
    {
        NoGradGuard g;
        s = sum(a);
    }
    Tensor out = Tensor::scalar(s.item() / static_cast<double>(a.numel() > 0 ? a.numel() : 1), a.dtype());
    attach_node<MeanAllNode>(out, {a});
    return out;
}

Tensor mean(const Tensor& a, int axis, bool keepdims) {
    Tensor s;
    {
        NoGradGuard g;
        s = sum(a, axis, keepdims);
    }
    const double inv = 1.0 / static_cast<double>(a.extent(axis));
    Tensor out = ew_unary_op(s, [inv](auto x) { return static_cast<decltype(x)>(x * inv); });
    attach_node<MeanAxisNode>(out, {a}, axis, keepdims);
    return out;
}

Tensor cast(const Tensor& a, DType dt) {
    Tensor out = a.astype(dt);
    attach_node<CastNode>(out, {a});
    return out;
}

Tensor zeros_like(const Tensor& a) { return Tensor::zeros(a.shape(), a.dtype()); }
Tensor ones_like(const Tensor& a) { return Tensor::full(a.shape(), 1.0, a.dtype()); }

Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    NoGradGuard guard;
    Tensor cur = g;
    // Sum away leading extra axes.
    while (cur.rank() > static_cast<int>(target.size())) cur = sum(cur, 0, false);
    // Sum broadcast (size-1) axes, keeping dims.
    for (int i = 0; i < cur.rank(); ++i) {
        if (target[static_cast<size_t>(i)] == 1 && cur.extent(i) != 1) cur = sum(cur, i, true);
    }
    if (cur.shape() != target)
        throw ShapeError("reduce_to: cannot reduce " + shape_str(g.shape()) + " to " + shape_str(target));
    return cur;
}

}  // namespace finr
