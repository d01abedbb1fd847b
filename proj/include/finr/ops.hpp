#pragma once

#include <vector>

#include "finr/graph.hpp"
#include "finr/tensor.hpp"

namespace finr {

// Primitive tensor operations. Every function is pure: it allocates a fresh
// output and, when any input participates in differentiation (requires_grad
// or traced) and no NoGradGuard is active, records a graph node carrying the
// adjoint and tangent rules. Binary ops broadcast with trailing-dimension
// alignment; shapes must agree where neither extent is 1.

Shape broadcast_shapes(const Shape& a, const Shape& b);

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
// |x|; adjoint uses the subgradient convention d|x|/dx = 0 at x = 0.
Tensor abs(const Tensor& a);
// max(x, 0); adjoint 0 at x = 0.
Tensor relu(const Tensor& a);
// 1 where x > 0 else 0. Constant w.r.t. differentiation.
Tensor step_mask(const Tensor& a);
// -1 / 0 / +1. Constant w.r.t. differentiation.
Tensor sign_mask(const Tensor& a);

// --- reductions ---
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdims = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdims = false);

// --- linear algebra ---
// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// --- shape ---
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, std::vector<int> perm);
Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// out[i, ...] = a[rows[i], ...] over axis 0.
Tensor gather_rows(const Tensor& a, std::vector<int64_t> rows);
// out has n_rows rows; out[rows[i], ...] += src[i, ...].
Tensor scatter_add_rows(const Tensor& src, std::vector<int64_t> rows, int64_t n_rows);

// --- complex (trailing axis of extent 2 carries re, im) ---
Tensor complex_mul(const Tensor& a, const Tensor& b);
Tensor complex_conj(const Tensor& a);
// [..., 2] -> [...]; adjoint uses the subgradient 0 at the origin.
Tensor complex_modulus(const Tensor& a);
Tensor complex_pack(const Tensor& re, const Tensor& im);
// Extract channel c of the trailing axis, squeezing it: [..., K] -> [...].
Tensor channel(const Tensor& a, int64_t c);

// Graph-recorded precision cast.
Tensor cast(const Tensor& a, DType dt);

// --- helpers ---
Tensor zeros_like(const Tensor& a);
Tensor ones_like(const Tensor& a);
// Sums g over broadcast axes so the result has the given shape (plain op).
Tensor reduce_to(const Tensor& g, const Shape& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s, a.dtype())); }
inline Tensor operator*(double s, const Tensor& a) { return a * s; }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s, a.dtype())); }
inline Tensor operator/(const Tensor& a, double s) { return div(a, Tensor::scalar(s, a.dtype())); }

}  // namespace finr
