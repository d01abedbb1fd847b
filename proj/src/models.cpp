#include "finr/models.hpp"

#include <cmath>

#include "finr/rng.hpp"
#include "kernels.hpp"

namespace finr {

void MlpConfig::validate() const {
    if (hidden_layers < 1) throw ConfigError("mlp: hidden_layers must be >= 1");
    if (hidden_width < 1) throw ConfigError("mlp: hidden_width must be >= 1");
    if (out_channels != 2) throw ConfigError("mlp: out_channels must be 2");
    if (activation != "relu") throw ConfigError("mlp: unsupported activation '" + activation + "'");
}

ModelParameters ModelParameters::init(const HashEncoderConfig& enc, const MlpConfig& mlp, DType dt, uint64_t seed) {
    enc.validate();
    mlp.validate();
    ModelParameters p;
    p.encoder = enc;
    p.mlp = mlp;
    p.dtype = dt;
    Rng rng(seed);
    for (int l = 0; l < enc.levels; ++l) {
        Tensor t = Tensor::zeros({enc.table_size(), enc.features_per_level}, dt);
        const int64_t n = t.numel();
        for (int64_t i = 0; i < n; ++i) t.set(i, rng.uniform(-1e-4, 1e-4));
        t.set_requires_grad(true);
        p.tables.push_back(t);
    }
    std::vector<int64_t> widths;
    widths.push_back(enc.out_width());
    for (int i = 0; i < mlp.hidden_layers; ++i) widths.push_back(mlp.hidden_width);
    widths.push_back(mlp.out_channels);
    for (size_t layer = 0; layer + 1 < widths.size(); ++layer) {
        const int64_t fan_in = widths[layer], fan_out = widths[layer + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w = Tensor::zeros({fan_in, fan_out}, dt);
        for (int64_t i = 0; i < w.numel(); ++i) w.set(i, rng.uniform(-bound, bound));
        w.set_requires_grad(true);
        Tensor b = Tensor::zeros({fan_out}, dt);
        b.set_requires_grad(true);
        p.weights.push_back(w);
        p.biases.push_back(b);
    }
    return p;
}

std::vector<Tensor> ModelParameters::all_params() const {
    std::vector<Tensor> out = tables;
    for (size_t i = 0; i < weights.size(); ++i) {
        out.push_back(weights[i]);
        out.push_back(biases[i]);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParameters::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t l = 0; l < tables.size(); ++l) out.emplace_back("table" + std::to_string(l), tables[l]);
    for (size_t i = 0; i < weights.size(); ++i) {
        out.emplace_back("w" + std::to_string(i), weights[i]);
        out.emplace_back("b" + std::to_string(i), biases[i]);
    }
    return out;
}

int64_t ModelParameters::param_count() const {
    int64_t n = 0;
    for (const auto& t : tables) n += t.numel();
    for (const auto& w : weights) n += w.numel();
    for (const auto& b : biases) n += b.numel();
    return n;
}

void ModelParameters::set_requires_grad(bool v) {
    for (auto& t : tables) t.set_requires_grad(v);
    for (auto& w : weights) w.set_requires_grad(v);
    for (auto& b : biases) b.set_requires_grad(v);
}

ModelParameters ModelParameters::astype(DType dt) const {
    ModelParameters p;
    p.encoder = encoder;
    p.mlp = mlp;
    p.dtype = dt;
    for (const auto& t : tables) p.tables.push_back(t.astype(dt).set_requires_grad(t.requires_grad()));
    for (const auto& w : weights) p.weights.push_back(w.astype(dt).set_requires_grad(w.requires_grad()));
    for (const auto& b : biases) p.biases.push_back(b.astype(dt).set_requires_grad(b.requires_grad()));
    return p;
}

CoordinateGrid CoordinateGrid::make(int64_t nx, int64_t ny, int64_t nt, DType dt) {
    if (nx < 1 || ny < 1 || nt < 1) throw ConfigError("CoordinateGrid: extents must be >= 1");
    CoordinateGrid g;
    g.nx = nx;
    g.ny = ny;
    g.nt = nt;
    g.coords = Tensor::zeros({nx * ny * nt, 3}, dt);
    const double sx = nx > 1 ? 1.0 / static_cast<double>(nx - 1) : 0.0;
    const double sy = ny > 1 ? 1.0 / static_cast<double>(ny - 1) : 0.0;
    const double st = nt > 1 ? 1.0 / static_cast<double>(nt - 1) : 0.0;
    kernels::dispatch(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = g.coords.data<T>();
        int64_t row = 0;
        for (int64_t t = 0; t < nt; ++t)
            for (int64_t y = 0; y < ny; ++y)
                for (int64_t x = 0; x < nx; ++x, ++row) {
                    d[static_cast<size_t>(row * 3 + 0)] = static_cast<T>(x * sx);
                    d[static_cast<size_t>(row * 3 + 1)] = static_cast<T>(y * sy);
                    d[static_cast<size_t>(row * 3 + 2)] = static_cast<T>(t * st);
                }
    });
    g.coords.set_traced(true);
    return g;
}

Tensor mlp_forward(const Tensor& features, const ModelParameters& params) {
    if (features.rank() != 2 || features.extent(1) != params.encoder.out_width())
        throw ShapeError("mlp_forward: feature shape " + shape_str(features.shape()) + ", expected [B," +
                         std::to_string(params.encoder.out_width()) + "]");
    Tensor h = features;
    const size_t n_layers = params.weights.size();
    for (size_t i = 0; i < n_layers; ++i) {
        h = add(matmul(h, params.weights[i]), params.biases[i]);
        if (i + 1 < n_layers) h = relu(h);
    }
    return h;
}

Tensor eval_points(const ModelParameters& params, const Tensor& coords) {
    Tensor c = coords;
    c.set_traced(true);
    return mlp_forward(hash_encode(c, params.tables, params.encoder), params);
}

Tensor render_grid(const ModelParameters& params, const CoordinateGrid& grid) {
    Tensor vals = eval_points(params, grid.coords);  // [B,2], rows t-major/y/x
    Tensor cube = reshape(vals, {grid.nt, grid.ny, grid.nx, 2});
    return permute(cube, {2, 1, 0, 3});  // -> [Nx,Ny,Nt,2]
}

CoordinateDerivs image_derivatives(const ModelParameters& theta, const Tensor& coords) {
    Tensor c = coords;
    c.set_traced(true);
    Tensor out = eval_points(theta, c);
    CoordinateDerivs d;
    d.dx = directional_derivative(out, c, Axis::X);
    d.dy = directional_derivative(out, c, Axis::Y);
    d.dt = directional_derivative(out, c, Axis::T);
    return d;
}

FlowSpatialDerivs flow_spatial_derivatives(const ModelParameters& phi, const Tensor& coords) {
    Tensor c = coords;
    c.set_traced(true);
    Tensor out = eval_points(phi, c);
    FlowSpatialDerivs d;
    d.dx = directional_derivative(out, c, Axis::X);
    d.dy = directional_derivative(out, c, Axis::Y);
    return d;
}

namespace {

Tensor scale_flow_channels(const Tensor& flow, double su, double sv) {
    if (flow.rank() < 1 || flow.extent(flow.rank() - 1) != 2)
        throw ShapeError("flow scaling: expected trailing (u,v) axis, got " + shape_str(flow.shape()));
    Shape sshape(static_cast<size_t>(flow.rank()), 1);
    sshape.back() = 2;
    Tensor s = Tensor::zeros(sshape, flow.dtype());
    s.set(0, su);
    s.set(1, sv);
    return mul(flow, s);
}

}  // namespace

Tensor flow_to_pixels(const Tensor& flow, int64_t nx, int64_t ny, int64_t nt) {
    if (nt < 2) throw DomainError("flow_to_pixels: Nt must be >= 2");
    const double denom = static_cast<double>(nt - 1);
    return scale_flow_channels(flow, static_cast<double>(nx - 1) / denom, static_cast<double>(ny - 1) / denom);
}

Tensor flow_from_pixels(const Tensor& flow_px, int64_t nx, int64_t ny, int64_t nt) {
    if (nt < 2) throw DomainError("flow_from_pixels: Nt must be >= 2");
    if (nx < 2 || ny < 2) throw DomainError("flow_from_pixels: Nx, Ny must be >= 2");
    const double denom = static_cast<double>(nt - 1);
    return scale_flow_channels(flow_px, denom / static_cast<double>(nx - 1), denom / static_cast<double>(ny - 1));
}

}  // namespace finr
