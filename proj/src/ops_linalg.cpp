// Matrix multiply and its adjoints, backed by Eigen within fixed-size row
// chunks so results do not depend on the worker count.

#include <Eigen/Core>

#include "finr/ops.hpp"
#include "kernels.hpp"
#include "node_util.hpp"

namespace finr {

namespace {

constexpr int64_t kRowChunk = 2048;

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapC = Eigen::Map<const MatRM<T>>;

// C[m,n] = A[m,k] * B[k,n]
template <class T>
void mm_nn(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n) {
    MapC<T> b(B, k, n);
    parallel_for_chunks(m, kRowChunk, [&](int64_t, int64_t r0, int64_t r1) {
        MapC<T> a(A + r0 * k, r1 - r0, k);
        MapM<T> c(C + r0 * n, r1 - r0, n);
        c.noalias() = a * b;
    });
}

// C[m,n] = A[m,k] * B[n,k]^T
template <class T>
void mm_nt(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n) {
    MapC<T> b(B, n, k);
    parallel_for_chunks(m, kRowChunk, [&](int64_t, int64_t r0, int64_t r1) {
        MapC<T> a(A + r0 * k, r1 - r0, k);
        MapM<T> c(C + r0 * n, r1 - r0, n);
        c.noalias() = a * b.transpose();
    });
}

// C[k,n] = A[m,k]^T * B[m,n]; reduction over m via ordered chunk partials.
template <class T>
void mm_tn(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n) {
    const int64_t n_chunks = (m + kRowChunk - 1) / kRowChunk;
    if (n_chunks <= 1) {
        MapC<T> a(A, m, k);
        MapC<T> b(B, m, n);
        MapM<T> c(C, k, n);
        c.noalias() = a.transpose() * b;
        return;
    }
    std::vector<T> partials(static_cast<size_t>(n_chunks) * k * n);
    parallel_for_chunks(m, kRowChunk, [&](int64_t ci, int64_t r0, int64_t r1) {
        MapC<T> a(A + r0 * k, r1 - r0, k);
        MapC<T> b(B + r0 * n, r1 - r0, n);
        MapM<T> p(partials.data() + ci * k * n, k, n);
        p.noalias() = a.transpose() * b;
    });
    MapM<T> c(C, k, n);
    c.setZero();
    for (int64_t ci = 0; ci < n_chunks; ++ci) {
        MapC<T> p(partials.data() + ci * k * n, k, n);
        c += p;
    }
}

struct MatMulNode final : Node {
    using Node::Node;
    std::string_view name() const override { return "matmul"; }
    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const Tensor& a = inputs_[0];
        const Tensor& b = inputs_[1];
        const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
        if (sink.wanted(a)) {
            Tensor ga = make_tensor(a.shape(), a.dtype());
            kernels::dispatch(a.dtype(), [&](auto tag) {
                using T = decltype(tag);
                mm_nt<T>(g.data<T>().data(), b.data<T>().data(), ga.data<T>().data(), m, n, k);
            });
            sink.add(a, ga);
        }
        if (sink.wanted(b)) {
            Tensor gb = make_tensor(b.shape(), b.dtype());
            kernels::dispatch(b.dtype(), [&](auto tag) {
                using T = decltype(tag);
                mm_tn<T>(a.data<T>().data(), g.data<T>().data(), gb.data<T>().data(), m, k, n);
            });
            sink.add(b, gb);
        }
    }
    Tensor tangent(const std::vector<Tensor>& t, const Tensor&) const override {
        Tensor r;
        if (t[0].defined()) r = matmul(t[0], inputs_[1]);
        if (t[1].defined()) {
            Tensor s = matmul(inputs_[0], t[1]);
            r = r.defined() ? add(r, s) : s;
        }
        return r;
    }
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 inputs, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    if (a.extent(1) != b.extent(0))
        throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    if (a.dtype() != b.dtype()) throw DomainError("matmul: mixed dtypes");
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out = make_tensor({m, n}, a.dtype());
    kernels::dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        mm_nn<T>(a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), m, k, n);
    });
    attach_node<MatMulNode>(out, {a, b});
    return out;
}

}  // namespace finr
