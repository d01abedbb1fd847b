#pragma once

// Internal kernel machinery shared by the op implementations: dtype dispatch,
// broadcast stride computation, dimension coalescing, and the strided
// elementwise loops. Deterministic by construction: chunk boundaries depend
// only on sizes, and no kernel reduces across chunks without an ordered
// combine.

#include <cstdint>
#include <vector>

#include "finr/tensor.hpp"
#include "finr/thread.hpp"

namespace finr::kernels {

template <class F>
decltype(auto) dispatch(DType dt, F&& f) {
    if (dt == DType::F32) return f(float{});
    return f(double{});
}

// Row-major strides of a contiguous tensor of the given shape.
inline std::vector<int64_t> contiguous_strides(const Shape& shape) {
    std::vector<int64_t> s(shape.size());
    int64_t acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        s[i] = acc;
        acc *= shape[i];
    }
    return s;
}

// Effective strides of operand `shape` against the broadcast output shape:
// trailing-aligned, 0 on broadcast dimensions.
inline std::vector<int64_t> bcast_strides(const Shape& shape, const Shape& out) {
    const auto own = contiguous_strides(shape);
    std::vector<int64_t> s(out.size(), 0);
    const size_t off = out.size() - shape.size();
    for (size_t i = 0; i < shape.size(); ++i) {
        s[off + i] = (shape[i] == 1 && out[off + i] != 1) ? 0 : own[i];
    }
    return s;
}

// Merges adjacent dimensions that all operands traverse contiguously,
// shrinking the loop nest. `strides` are per-operand stride arrays aligned
// with `extents`.
inline void coalesce(std::vector<int64_t>& extents, std::vector<std::vector<int64_t>*> strides) {
    if (extents.empty()) return;
    size_t w = 0;  // write cursor
    for (size_t r = 1; r < extents.size(); ++r) {
        bool mergeable = true;
        for (auto* s : strides) {
            if ((*s)[w] != extents[r] * (*s)[r]) {
                mergeable = false;
                break;
            }
        }
        if (mergeable) {
            extents[w] *= extents[r];
            for (auto* s : strides) (*s)[w] = (*s)[r];
        } else {
            ++w;
            extents[w] = extents[r];
            for (auto* s : strides) (*s)[w] = (*s)[r];
        }
    }
    extents.resize(w + 1);
    for (auto* s : strides) s->resize(w + 1);
}

inline int64_t prod(const std::vector<int64_t>& v, size_t begin, size_t end) {
    int64_t p = 1;
    for (size_t i = begin; i < end; ++i) p *= v[i];
    return p;
}

// Strided binary elementwise loop over a coalesced iteration space: the
// output is written contiguously in row-major order; a and b are read with
// the given strides. Parallel over outer rows with fixed chunking.
template <class T, class F>
void ew_binary_strided(const T* a, std::vector<int64_t> sa, const T* b, std::vector<int64_t> sb, T* o,
                       std::vector<int64_t> extents, F f) {
    if (extents.empty()) {
        o[0] = f(a[0], b[0]);
        return;
    }
    std::vector<int64_t> so = contiguous_strides(Shape(extents.begin(), extents.end()));
    coalesce(extents, {&sa, &sb, &so});
    const size_t nd = extents.size();
    const int64_t inner = extents[nd - 1];
    const int64_t ia = sa[nd - 1], ib = sb[nd - 1];
    const int64_t outer = prod(extents, 0, nd - 1);

    auto run_rows = [&](int64_t row_begin, int64_t row_end) {
        // Decompose row_begin into the outer multi-index and offsets.
        std::vector<int64_t> idx(nd > 0 ? nd - 1 : 0, 0);
        int64_t ao = 0, bo = 0, rem = row_begin;
        for (size_t d = nd - 1; d-- > 0;) {
            const int64_t e = extents[d];
            idx[d] = rem % e;
            rem /= e;
            ao += idx[d] * sa[d];
            bo += idx[d] * sb[d];
        }
        int64_t op = row_begin * inner;
        for (int64_t row = row_begin; row < row_end; ++row) {
            if (ia == 1 && ib == 1) {
                const T* pa = a + ao;
                const T* pb = b + bo;
                for (int64_t i = 0; i < inner; ++i) o[op + i] = f(pa[i], pb[i]);
            } else if (ia == 1 && ib == 0) {
                const T* pa = a + ao;
                const T vb = b[bo];
                for (int64_t i = 0; i < inner; ++i) o[op + i] = f(pa[i], vb);
            } else if (ia == 0 && ib == 1) {
                const T va = a[ao];
                const T* pb = b + bo;
                for (int64_t i = 0; i < inner; ++i) o[op + i] = f(va, pb[i]);
            } else {
                for (int64_t i = 0; i < inner; ++i) o[op + i] = f(a[ao + i * ia], b[bo + i * ib]);
            }
            op += inner;
            // odometer increment over the outer dims
            for (size_t d = nd - 1; d-- > 0;) {
                ++idx[d];
                ao += sa[d];
                bo += sb[d];
                if (idx[d] < extents[d]) break;
                ao -= sa[d] * extents[d];
                bo -= sb[d] * extents[d];
                idx[d] = 0;
            }
        }
    };

    const int64_t chunk_rows = std::max<int64_t>(1, 65536 / std::max<int64_t>(inner, 1));
    if (outer * inner < 16384) {
        run_rows(0, outer);
    } else {
        parallel_for_chunks(outer, chunk_rows, [&](int64_t, int64_t b0, int64_t e0) { run_rows(b0, e0); });
    }
}

template <class T, class F>
void ew_unary_flat(const T* a, T* o, int64_t n, F f) {
    if (n < 16384) {
        for (int64_t i = 0; i < n; ++i) o[i] = f(a[i]);
        return;
    }
    parallel_for_chunks(n, 65536, [&](int64_t, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) o[i] = f(a[i]);
    });
}

}  // namespace finr::kernels
