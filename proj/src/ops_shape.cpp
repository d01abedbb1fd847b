// Shape/restructuring primitives and the complex-pair ops.

#include <cmath>
#include <cstring>

#include "finr/ops.hpp"
#include "kernels.hpp"
#include "node_util.hpp"

namespace finr {

namespace {

struct ReshapeNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "reshape"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], reshape(g, inputs_[0].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor& out) const override {
        return t[0].defined() ? reshape(t[0], out.shape()) : Tensor{};
    }
};

struct PermuteNode final : Node {
    PermuteNode(std::vector<Tensor> in, std::vector<int> perm) : Node(std::move(in)), perm_(std::move(perm)) {}
    std::string_view name() const override { return "permute"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        std::vector<int> inv(perm_.size());
        for (size_t i = 0; i < perm_.size(); ++i) inv[static_cast<size_t>(perm_[i])] = static_cast<int>(i);
        sink.add(inputs_[0], permute(g, inv));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? permute(t[0], perm_) : Tensor{};
    }
    std::vector<int> perm_;
};

struct SliceNode final : Node {
    SliceNode(std::vector<Tensor> in, int axis, int64_t begin, int64_t end)
        : Node(std::move(in)), axis_(axis), begin_(begin), end_(end) {}
    std::string_view name() const override { return "slice"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const Tensor& a = inputs_[0];
        Tensor ga = Tensor::zeros(a.shape(), a.dtype());
        const int64_t outer = kernels::prod(std::vector<int64_t>(a.shape().begin(), a.shape().end()), 0,
                                            static_cast<size_t>(axis_));
        const int64_t inner = a.numel() / std::max<int64_t>(1, outer * a.extent(axis_));
        const int64_t width = end_ - begin_;
        kernels::dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gs = g.data<T>();
            auto gd = ga.data<T>();
            for (int64_t u = 0; u < outer; ++u) {
                std::memcpy(gd.data() + (u * a.extent(axis_) + begin_) * inner, gs.data() + u * width * inner,
                            static_cast<size_t>(width * inner) * sizeof(T));
            }
        });
        sink.add(inputs_[0], ga);
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? slice(t[0], axis_, begin_, end_) : Tensor{};
    }
    int axis_;
    int64_t begin_, end_;
};

struct ConcatNode final : Node {
    ConcatNode(std::vector<Tensor> in, int axis) : Node(std::move(in)), axis_(axis) {}
    std::string_view name() const override { return "concat"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        int64_t off = 0;
        for (const auto& part : inputs_) {
            const int64_t w = part.extent(axis_);
            if (sink.wanted(part)) sink.add(part, slice(g, axis_, off, off + w));
            off += w;
        }
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        std::vector<Tensor> parts;
        parts.reserve(t.size());
        bool any = false;
        for (size_t i = 0; i < t.size(); ++i) {
            if (t[i].defined()) {
                any = true;
                parts.push_back(t[i]);
            } else {
                parts.push_back(zeros_like(inputs_[i]));
            }
        }
        if (!any) return {};
        return concat(parts, axis_);
    }
    int axis_;
};

struct GatherRowsNode final : Node {
    GatherRowsNode(std::vector<Tensor> in, std::vector<int64_t> rows, int64_t n_rows)
        : Node(std::move(in)), rows_(std::move(rows)), n_rows_(n_rows) {}
    std::string_view name() const override { return "gather_rows"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], scatter_add_rows(g, rows_, n_rows_));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? gather_rows(t[0], rows_) : Tensor{};
    }
    std::vector<int64_t> rows_;
    int64_t n_rows_;
};

struct ScatterAddRowsNode final : Node {
    ScatterAddRowsNode(std::vector<Tensor> in, std::vector<int64_t> rows) : Node(std::move(in)), rows_(std::move(rows)) {}
    std::string_view name() const override { return "scatter_add_rows"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], gather_rows(g, rows_));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor& out) const override {
        return t[0].defined() ? scatter_add_rows(t[0], rows_, out.extent(0)) : Tensor{};
    }
    std::vector<int64_t> rows_;
};

struct ComplexMulNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "complex_mul"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0]))
            sink.add(inputs_[0], reduce_to(complex_mul(g, complex_conj(inputs_[1])), inputs_[0].shape()));
        if (sink.wanted(inputs_[1]))
            sink.add(inputs_[1], reduce_to(complex_mul(g, complex_conj(inputs_[0])), inputs_[1].shape()));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        Tensor r;
        if (t[0].defined()) r = complex_mul(t[0], inputs_[1]);
        if (t[1].defined()) {
            Tensor s = complex_mul(inputs_[0], t[1]);
            r = r.defined() ? add(r, s) : s;
        }
        return r;
    }
};

struct ComplexConjNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "complex_conj"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        sink.add(inputs_[0], complex_conj(g));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? complex_conj(t[0]) : Tensor{};
    }
};

struct ComplexModulusNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "complex_modulus"; }
    void backward(const Tensor& out, const Tensor& g, GradSink& sink) const override {
        // d|z|/d(re,im) = (re,im)/|z|, with the subgradient 0 at the origin.
        const Tensor& a = inputs_[0];
        Tensor ga = Tensor::zeros(a.shape(), a.dtype());
        kernels::dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto av = a.data<T>();
            auto ov = out.data<T>();
            auto gv = g.data<T>();
            auto gd = ga.data<T>();
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) {
                const T m = ov[static_cast<size_t>(i)];
                if (m > 0) {
                    const T s = gv[static_cast<size_t>(i)] / m;
                    gd[static_cast<size_t>(2 * i)] = s * av[static_cast<size_t>(2 * i)];
                    gd[static_cast<size_t>(2 * i + 1)] = s * av[static_cast<size_t>(2 * i + 1)];
                }
            }
        });
        sink.add(inputs_[0], ga);
    }
    // No tangent rule: the modulus never sits on a coordinate-derivative path.
};

struct ComplexPackNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "complex_pack"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        if (sink.wanted(inputs_[0])) sink.add(inputs_[0], channel(g, 0));
        if (sink.wanted(inputs_[1])) sink.add(inputs_[1], channel(g, 1));
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        if (!t[0].defined() && !t[1].defined()) return {};
        Tensor re = t[0].defined() ? t[0] : zeros_like(inputs_[0]);
        Tensor im = t[1].defined() ? t[1] : zeros_like(inputs_[1]);
        return complex_pack(re, im);
    }
};

struct ChannelNode final : Node {
    ChannelNode(std::vector<Tensor> in, int64_t c) : Node(std::move(in)), c_(c) {}
    std::string_view name() const override { return "channel"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const Tensor& a = inputs_[0];
        Tensor ga = Tensor::zeros(a.shape(), a.dtype());
        const int64_t k = a.extent(a.rank() - 1);
        kernels::dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gs = g.data<T>();
            auto gd = ga.data<T>();
            const int64_t n = g.numel();
            for (int64_t i = 0; i < n; ++i) gd[static_cast<size_t>(i * k + c_)] = gs[static_cast<size_t>(i)];
        });
        sink.add(inputs_[0], ga);
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        return t[0].defined() ? channel(t[0], c_) : Tensor{};
    }
    int64_t c_;
};

void check_complex(const Tensor& a, const char* op) {
    if (a.rank() < 1 || a.extent(a.rank() - 1) != 2)
        throw ShapeError(std::string(op) + ": expected trailing complex axis of extent 2, got " + shape_str(a.shape()));
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor out = make_tensor(std::move(shape), a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        std::copy(src.begin(), src.end(), out.data<T>().begin());
    });
    attach_node<ReshapeNode>(out, {a});
    return out;
}

Tensor permute(const Tensor& a, std::vector<int> perm) {
    if (static_cast<int>(perm.size()) != a.rank()) throw ShapeError("permute: rank mismatch for " + shape_str(a.shape()));
    Shape os(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) os[i] = a.extent(perm[i]);
    Tensor out = make_tensor(os, a.dtype());
    const auto in_strides = kernels::contiguous_strides(a.shape());
    std::vector<int64_t> src_stride(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) src_stride[i] = in_strides[static_cast<size_t>(perm[i])];
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* src = a.data<T>().data();
        T* dst = out.data<T>().data();
        const size_t nd = os.size();
        if (nd == 0) {
            dst[0] = src[0];
            return;
        }
        std::vector<int64_t> idx(nd, 0);
        int64_t so = 0;
        const int64_t n = out.numel();
        const int64_t inner = os[nd - 1];
        const int64_t is = src_stride[nd - 1];
        for (int64_t base = 0; base < n; base += inner) {
            for (int64_t i = 0; i < inner; ++i) dst[base + i] = src[so + i * is];
            for (size_t d = nd - 1; d-- > 0;) {
                ++idx[d];
                so += src_stride[d];
                if (idx[d] < os[d]) break;
                so -= src_stride[d] * os[d];
                idx[d] = 0;
            }
        }
    });
    attach_node<PermuteNode>(out, {a}, std::move(perm));
    return out;
}

Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end) {
    if (axis < 0 || axis >= a.rank()) throw ShapeError("slice: axis out of range for " + shape_str(a.shape()));
    if (begin < 0 || end > a.extent(axis) || begin > end)
        throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for axis " +
                         std::to_string(axis) + " of " + shape_str(a.shape()));
    Shape os = a.shape();
    os[static_cast<size_t>(axis)] = end - begin;
    Tensor out = make_tensor(os, a.dtype());
    const int64_t outer = kernels::prod(std::vector<int64_t>(a.shape().begin(), a.shape().end()), 0, static_cast<size_t>(axis));
    const int64_t inner = a.numel() / std::max<int64_t>(1, outer * a.extent(axis));
    const int64_t width = end - begin;
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        for (int64_t u = 0; u < outer; ++u)
            std::memcpy(dst.data() + u * width * inner, src.data() + (u * a.extent(axis) + begin) * inner,
                        static_cast<size_t>(width * inner) * sizeof(T));
    });
    attach_node<SliceNode>(out, {a}, axis, begin, end);
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape os = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank() || p.dtype() != parts[0].dtype())
            throw ShapeError("concat: rank/dtype mismatch");
        for (int i = 0; i < p.rank(); ++i)
            if (i != axis && p.extent(i) != os[static_cast<size_t>(i)])
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(os));
        total += p.extent(axis);
    }
    os[static_cast<size_t>(axis)] = total;
    Tensor out = make_tensor(os, parts[0].dtype());
    const int64_t outer = kernels::prod(std::vector<int64_t>(os.begin(), os.end()), 0, static_cast<size_t>(axis));
    const int64_t inner = out.numel() / std::max<int64_t>(1, outer * total);
    kernels::dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto dst = out.data<T>();
        int64_t off = 0;
        for (const auto& p : parts) {
            const int64_t w = p.extent(axis);
            auto src = p.data<T>();
            for (int64_t u = 0; u < outer; ++u)
                std::memcpy(dst.data() + (u * total + off) * inner, src.data() + u * w * inner,
                            static_cast<size_t>(w * inner) * sizeof(T));
            off += w;
        }
    });
    attach_node<ConcatNode>(out, std::vector<Tensor>(parts), axis);
    return out;
}

Tensor gather_rows(const Tensor& a, std::vector<int64_t> rows) {
    if (a.rank() < 1) throw ShapeError("gather_rows: rank-0 input");
    const int64_t n0 = a.extent(0);
    for (int64_t r : rows)
        if (r < 0 || r >= n0) throw ShapeError("gather_rows: row index " + std::to_string(r) + " out of range");
    Shape os = a.shape();
    os[0] = static_cast<int64_t>(rows.size());
    Tensor out = make_tensor(os, a.dtype());
    const int64_t inner = a.numel() / std::max<int64_t>(1, n0);
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        for (size_t i = 0; i < rows.size(); ++i)
            std::memcpy(dst.data() + static_cast<int64_t>(i) * inner, src.data() + rows[i] * inner,
                        static_cast<size_t>(inner) * sizeof(T));
    });
    attach_node<GatherRowsNode>(out, {a}, std::move(rows), n0);
    return out;
}

Tensor scatter_add_rows(const Tensor& src, std::vector<int64_t> rows, int64_t n_rows) {
    if (src.rank() < 1 || src.extent(0) != static_cast<int64_t>(rows.size()))
        throw ShapeError("scatter_add_rows: " + std::to_string(rows.size()) + " rows for input " + shape_str(src.shape()));
    for (int64_t r : rows)
        if (r < 0 || r >= n_rows) throw ShapeError("scatter_add_rows: row index " + std::to_string(r) + " out of range");
    Shape os = src.shape();
    os[0] = n_rows;
    Tensor out = make_tensor(os, src.dtype());
    const int64_t inner = src.numel() / std::max<int64_t>(1, src.extent(0));
    kernels::dispatch(src.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto s = src.data<T>();
        auto d = out.data<T>();
        for (size_t i = 0; i < rows.size(); ++i) {
            const T* sp = s.data() + static_cast<int64_t>(i) * inner;
            T* dp = d.data() + rows[i] * inner;
            for (int64_t j = 0; j < inner; ++j) dp[j] += sp[j];
        }
    });
    attach_node<ScatterAddRowsNode>(out, {src}, std::move(rows));
    return out;
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
    check_complex(a, "complex_mul");
    check_complex(b, "complex_mul");
    if (a.dtype() != b.dtype()) throw DomainError("complex_mul: mixed dtypes");
    Shape la(a.shape().begin(), a.shape().end() - 1);
    Shape lb(b.shape().begin(), b.shape().end() - 1);
    Shape lead = broadcast_shapes(la, lb);
    Shape os = lead;
    os.push_back(2);
    Tensor out = make_tensor(os, a.dtype());
    // Iterate complex elements over the leading shape.
    auto sa = kernels::bcast_strides(la, lead);
    auto sb = kernels::bcast_strides(lb, lead);
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a.data<T>().data();
        const T* pb = b.data<T>().data();
        T* po = out.data<T>().data();
        const int64_t n = shape_numel(lead);
        std::vector<int64_t> idx(lead.size(), 0);
        int64_t ao = 0, bo = 0;
        for (int64_t i = 0; i < n; ++i) {
            const T ar = pa[2 * ao], ai = pa[2 * ao + 1];
            const T br = pb[2 * bo], bi = pb[2 * bo + 1];
            po[2 * i] = ar * br - ai * bi;
            po[2 * i + 1] = ar * bi + ai * br;
            for (size_t d = lead.size(); d-- > 0;) {
                ++idx[d];
                ao += sa[d];
                bo += sb[d];
                if (idx[d] < lead[d]) break;
                ao -= sa[d] * lead[d];
                bo -= sb[d] * lead[d];
                idx[d] = 0;
            }
        }
    });
    attach_node<ComplexMulNode>(out, {a, b});
    return out;
}

Tensor complex_conj(const Tensor& a) {
    check_complex(a, "complex_conj");
    Tensor out = make_tensor(a.shape(), a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        const int64_t n = a.numel() / 2;
        for (int64_t i = 0; i < n; ++i) {
            dst[static_cast<size_t>(2 * i)] = src[static_cast<size_t>(2 * i)];
            dst[static_cast<size_t>(2 * i + 1)] = -src[static_cast<size_t>(2 * i + 1)];
        }
    });
    attach_node<ComplexConjNode>(out, {a});
    return out;
}

Tensor complex_modulus(const Tensor& a) {
    check_complex(a, "complex_modulus");
    Shape os(a.shape().begin(), a.shape().end() - 1);
    Tensor out = make_tensor(os, a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        const int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) {
            const T re = src[static_cast<size_t>(2 * i)], im = src[static_cast<size_t>(2 * i + 1)];
            dst[static_cast<size_t>(i)] = std::sqrt(re * re + im * im);
        }
    });
    attach_node<ComplexModulusNode>(out, {a});
    return out;
}

Tensor complex_pack(const Tensor& re, const Tensor& im) {
    if (re.shape() != im.shape()) throw ShapeError("complex_pack: " + shape_str(re.shape()) + " vs " + shape_str(im.shape()));
    if (re.dtype() != im.dtype()) throw DomainError("complex_pack: mixed dtypes");
    Shape os = re.shape();
    os.push_back(2);
    Tensor out = make_tensor(os, re.dtype());
    kernels::dispatch(re.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto r = re.data<T>();
        auto i = im.data<T>();
        auto d = out.data<T>();
        const int64_t n = re.numel();
        for (int64_t k = 0; k < n; ++k) {
            d[static_cast<size_t>(2 * k)] = r[static_cast<size_t>(k)];
            d[static_cast<size_t>(2 * k + 1)] = i[static_cast<size_t>(k)];
        }
    });
    attach_node<ComplexPackNode>(out, {re, im});
    return out;
}

Tensor channel(const Tensor& a, int64_t c) {
    if (a.rank() < 1) throw ShapeError("channel: rank-0 input");
    const int64_t k = a.extent(a.rank() - 1);
    if (c < 0 || c >= k) throw ShapeError("channel: index " + std::to_string(c) + " out of range for " + shape_str(a.shape()));
    Shape os(a.shape().begin(), a.shape().end() - 1);
    Tensor out = make_tensor(os, a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = a.data<T>();
        auto dst = out.data<T>();
        const int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) dst[static_cast<size_t>(i)] = src[static_cast<size_t>(i * k + c)];
    });
    attach_node<ChannelNode>(out, {a}, c);
    return out;
}

}  // namespace finr
