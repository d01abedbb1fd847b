#pragma once

#include "finr/ops.hpp"

namespace finr {

// Multi-coil Cartesian acquisition data: y = mask o (FFT(S o I) + n).
struct KSpaceDataset {
    Tensor y;     // [Nc,Nx,Ny,Nt,2] measured k-space
    Tensor mask;  // [Nx,Ny,Nt] binary
    Tensor maps;  // [Nc,Nx,Ny,2] coil sensitivities, time-invariant

    int64_t nc() const { return y.extent(0); }
    int64_t nx() const { return y.extent(1); }
    int64_t ny() const { return y.extent(2); }
    int64_t nt() const { return y.extent(3); }

    // Invariants: mask entries in {0,1}; y zero wherever mask is zero;
    // sum over coils of |maps|^2 == 1 (within 1e-3) at every pixel.
    void validate() const;
};

// Per-coil sensitivity modulation S_c o I, broadcasting maps over time.
// image [Nx,Ny,Nt,2], maps [Nc,Nx,Ny,2] -> [Nc,Nx,Ny,Nt,2].
Tensor apply_sensitivities(const Tensor& image, const Tensor& maps);

// Centered orthonormal 2D DFT per (leading..., trailing) plane over axes
// (axis_x, axis_y) of a complex tensor. The inverse is the exact adjoint.
Tensor fft2_centered(const Tensor& x, int axis_x, int axis_y, bool inverse = false);

// mask o FFT(S o I), fully recorded for differentiation.
Tensor forward_operator(const Tensor& image, const KSpaceDataset& ds);

// sum_c conj(S_c) o IFFT(mask o y_c) -> [Nx,Ny,Nt,2].
Tensor adjoint_operator(const Tensor& y, const KSpaceDataset& ds);

// Expand a [Nx,Ny,Nt] mask for multiplication with [Nc,Nx,Ny,Nt,2] k-space.
Tensor mask_broadcast(const Tensor& mask);

}  // namespace finr
