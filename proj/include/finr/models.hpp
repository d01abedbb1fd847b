#pragma once

#include <string>
#include <utility>
#include <vector>

#include "finr/encoding.hpp"
#include "finr/graph.hpp"
#include "finr/ops.hpp"

namespace finr {

struct MlpConfig {
    int hidden_layers = 2;
    int hidden_width = 128;
    int out_channels = 2;
    std::string activation = "relu";

    void validate() const;
};

// One coordinate network: hash-grid tables plus a small MLP. Instantiated
// once for the image (channels = re, im) and once for the flow (u, v).
struct ModelParameters {
    HashEncoderConfig encoder;
    MlpConfig mlp;
    DType dtype = DType::F32;
    std::vector<Tensor> tables;   // per level, [2^T, F]
    std::vector<Tensor> weights;  // per layer
    std::vector<Tensor> biases;

    // Seeded init: tables uniform in [-1e-4, 1e-4]; weights uniform in
    // [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases zero. Fill order is tables
    // in level order, then weights layer by layer (row-major).
    static ModelParameters init(const HashEncoderConfig& enc, const MlpConfig& mlp, DType dt, uint64_t seed);

    std::vector<Tensor> all_params() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    int64_t param_count() const;
    void set_requires_grad(bool v);
    ModelParameters astype(DType dt) const;
};

// Normalized coordinates for a full [Nx,Ny,Nt] grid: x_hat = x/(Nx-1), etc.
// (0 when an extent is 1). Rows are t-major, then y, then x; columns are
// (x_hat, y_hat, t_hat).
struct CoordinateGrid {
    int64_t nx = 0, ny = 0, nt = 0;
    Tensor coords;  // [nx*ny*nt, 3]

    static CoordinateGrid make(int64_t nx, int64_t ny, int64_t nt, DType dt = DType::F32);
};

// affine -> ReLU -> ... -> affine; output has mlp.out_channels channels.
Tensor mlp_forward(const Tensor& features, const ModelParameters& params);

// encode -> mlp. Output [B,2]; for the image network the channels are the
// real and imaginary parts (c0 + i*c1), for the flow network (u, v) in
// normalized units per unit normalized time.
Tensor eval_points(const ModelParameters& params, const Tensor& coords);
inline Tensor eval_image(const ModelParameters& theta, const Tensor& coords) { return eval_points(theta, coords); }
inline Tensor eval_flow(const ModelParameters& phi, const Tensor& coords) { return eval_points(phi, coords); }

// Evaluate on a full grid and reshape to [Nx,Ny,Nt,2] (complex image or
// (u,v) flow, channel-last).
Tensor render_grid(const ModelParameters& params, const CoordinateGrid& grid);

struct CoordinateDerivs {
    Tensor dx, dy, dt;  // each [B,2], still parameter-differentiable
};

// Continuous partial derivatives of the network output along the normalized
// coordinate axes, by forward-tangent propagation.
CoordinateDerivs image_derivatives(const ModelParameters& theta, const Tensor& coords);

// Spatial derivatives of the flow network: dx = (du/dx, dv/dx), dy = (du/dy, dv/dy).
struct FlowSpatialDerivs {
    Tensor dx, dy;  // each [B,2]
};
FlowSpatialDerivs flow_spatial_derivatives(const ModelParameters& phi, const Tensor& coords);

// Unit conversion from normalized flow to pixels/frame:
// u_px = u*(Nx-1)/(Nt-1), v_px = v*(Ny-1)/(Nt-1). Works on any [...,2] flow.
Tensor flow_to_pixels(const Tensor& flow, int64_t nx, int64_t ny, int64_t nt);
Tensor flow_from_pixels(const Tensor& flow_px, int64_t nx, int64_t ny, int64_t nt);

}  // namespace finr
