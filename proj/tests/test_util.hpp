#pragma once

// Shared helpers for the test suites: random fills, relative error, central
// finite differences, and inner products. The finite-difference and
// inner-product code paths are deliberately plain loops, independent of the
// library's kernels.

#include <cmath>
#include <functional>
#include <vector>

#include "finr/ops.hpp"
#include "finr/rng.hpp"
#include "finr/tensor.hpp"

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / denom;
}

inline void fill_uniform(finr::Tensor& t, finr::Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
}

inline void fill_normal(finr::Tensor& t, finr::Rng& rng, double scale = 1.0) {
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, scale * rng.normal());
}

inline double dot_flat(const finr::Tensor& a, const finr::Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.at(i) * b.at(i);
    return acc;
}

// Central finite-difference derivative of f w.r.t. element `flat` of `leaf`,
// perturbing the buffer in place.
inline double central_diff(const std::function<double()>& f, finr::Tensor& leaf, int64_t flat, double step) {
    const double saved = leaf.at(flat);
    leaf.set(flat, saved + step);
    const double fp = f();
    leaf.set(flat, saved - step);
    const double fm = f();
    leaf.set(flat, saved);
    return (fp - fm) / (2.0 * step);
}

// Checks backward() of f against central differences on every element of the
// given leaves; returns the worst relative error.
inline double max_grad_fd_error(const std::function<finr::Tensor()>& f, std::vector<finr::Tensor> leaves,
                                double step) {
    finr::Tensor loss = f();
    finr::GradientMap grads = finr::backward(loss);
    auto scalar_f = [&]() { return f().item(); };
    double worst = 0.0;
    for (auto& leaf : leaves) {
        finr::Tensor g = grads.grad_or_zero(leaf);
        for (int64_t i = 0; i < leaf.numel(); ++i) {
            const double fd = central_diff(scalar_f, leaf, i, step);
            const double an = g.at(i);
            if (std::abs(fd) < 1e-12 && std::abs(an) < 1e-12) continue;
            worst = std::max(worst, rel_err(an, fd));
        }
    }
    return worst;
}
