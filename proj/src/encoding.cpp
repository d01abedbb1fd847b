#include "finr/encoding.hpp"

#include <cmath>

#include "kernels.hpp"
#include "node_util.hpp"

namespace finr {

namespace {

constexpr uint64_t kHashC1 = 1;
constexpr uint64_t kHashC2 = 2654435761ull;
constexpr uint64_t kHashC3 = 805459861ull;

inline uint64_t vertex_index(int64_t vx, int64_t vy, int64_t vt, int64_t res, bool direct, uint64_t mask) {
    if (direct) {
        const uint64_t side = static_cast<uint64_t>(res) + 1;
        return static_cast<uint64_t>(vx) + side * (static_cast<uint64_t>(vy) + side * static_cast<uint64_t>(vt));
    }
    return (static_cast<uint64_t>(vx) * kHashC1 ^ static_cast<uint64_t>(vy) * kHashC2 ^
            static_cast<uint64_t>(vt) * kHashC3) &
           mask;
}

struct LevelGeom {
    int64_t res;
    bool direct;
};

std::vector<LevelGeom> level_geometry(const HashEncoderConfig& cfg) {
    std::vector<LevelGeom> g(static_cast<size_t>(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l) g[static_cast<size_t>(l)] = {cfg.level_resolution(l), cfg.level_is_direct(l)};
    return g;
}

// Per-point cell data shared by the forward, backward and tangent kernels.
template <class T>
struct CellRef {
    uint64_t idx[8];
    T w[8];       // trilinear weights
    T dw[8][3];   // d(weight)/d(normalized coordinate)
};

template <class T>
inline void locate(const T* p, const LevelGeom& lg, uint64_t mask, CellRef<T>& cell, bool with_dw) {
    const T res = static_cast<T>(lg.res);
    int64_t c[3];
    T f[3];
    for (int d = 0; d < 3; ++d) {
        const T scaled = p[d] * res;
        int64_t ci = static_cast<int64_t>(std::floor(static_cast<double>(scaled)));
        if (ci > lg.res - 1) ci = lg.res - 1;
        if (ci < 0) ci = 0;
        c[d] = ci;
        f[d] = scaled - static_cast<T>(ci);
    }
    for (int k = 0; k < 8; ++k) {
        const int bx = k & 1, by = (k >> 1) & 1, bt = (k >> 2) & 1;
        const T wx = bx ? f[0] : T(1) - f[0];
        const T wy = by ? f[1] : T(1) - f[1];
        const T wt = bt ? f[2] : T(1) - f[2];
        cell.idx[k] = vertex_index(c[0] + bx, c[1] + by, c[2] + bt, lg.res, lg.direct, mask);
        cell.w[k] = wx * wy * wt;
        if (with_dw) {
            const T sx = bx ? T(1) : T(-1);
            const T sy = by ? T(1) : T(-1);
            const T st = bt ? T(1) : T(-1);
            cell.dw[k][0] = sx * wy * wt * res;
            cell.dw[k][1] = wx * sy * wt * res;
            cell.dw[k][2] = wx * wy * st * res;
        }
    }
}

void validate_coords(const Tensor& coords) {
    if (coords.rank() != 2 || coords.extent(1) != 3)
        throw ShapeError("hash_encode: coords must be [B,3], got " + shape_str(coords.shape()));
    const int64_t n = coords.numel();
    kernels::dispatch(coords.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = coords.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            const T v = d[static_cast<size_t>(i)];
            if (!(v >= T(0) && v <= T(1)))
                throw DomainError("hash_encode: coordinate " + std::to_string(static_cast<double>(v)) +
                                  " outside [0,1] at point " + std::to_string(i / 3));
        }
    });
}

Tensor encode_jvp(const std::vector<Tensor>& tables, const Tensor& coords, const Tensor& ctan,
                  const HashEncoderConfig& cfg);

// inputs: [tables..., coords]
class EncodeNode final : public Node {
public:
    EncodeNode(std::vector<Tensor> in, HashEncoderConfig cfg) : Node(std::move(in)), cfg_(cfg) {}
    std::string_view name() const override { return "hash_encode"; }

    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const Tensor& coords = inputs_.back();
        const auto geom = level_geometry(cfg_);
        const uint64_t mask = static_cast<uint64_t>(cfg_.table_size()) - 1;
        const int64_t b = coords.extent(0);
        const int F = cfg_.features_per_level;
        std::vector<Tensor> grads(static_cast<size_t>(cfg_.levels));
        for (int l = 0; l < cfg_.levels; ++l)
            grads[static_cast<size_t>(l)] = Tensor::zeros(inputs_[static_cast<size_t>(l)].shape(), g.dtype());
        kernels::dispatch(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* cp = coords.data<T>().data();
            const T* gp = g.data<T>().data();
            const int64_t width = cfg_.out_width();
            // Levels are independent table slices: parallel across levels,
            // serial over points within a level, so scatter order is fixed.
            ThreadPool::instance().run_chunks(cfg_.levels, [&](int64_t l) {
                T* tg = grads[static_cast<size_t>(l)].template data<T>().data();
                CellRef<T> cell;
                for (int64_t i = 0; i < b; ++i) {
                    locate(cp + i * 3, geom[static_cast<size_t>(l)], mask, cell, false);
                    const T* go = gp + i * width + l * F;
                    for (int k = 0; k < 8; ++k) {
                        T* row = tg + static_cast<int64_t>(cell.idx[k]) * F;
                        for (int j = 0; j < F; ++j) row[j] += cell.w[k] * go[j];
                    }
                }
            });
        });
        for (int l = 0; l < cfg_.levels; ++l) {
            if (sink.wanted(inputs_[static_cast<size_t>(l)]))
                sink.add(inputs_[static_cast<size_t>(l)], grads[static_cast<size_t>(l)]);
        }
    }

    Tensor tangent(const std::vector<Tensor>& in_tans, const Tensor&) const override {
        // Table tangents are zero on coordinate-derivative paths; only the
        // coordinate tangent (last input) propagates.
        for (size_t i = 0; i + 1 < in_tans.size(); ++i) {
            if (in_tans[i].defined())
                throw UnsupportedOperation("hash_encode: tangent w.r.t. feature tables is not supported");
        }
        const Tensor& ctan = in_tans.back();
        if (!ctan.defined()) return {};
        std::vector<Tensor> tables(inputs_.begin(), inputs_.end() - 1);
        return encode_jvp(tables, inputs_.back(), ctan, cfg_);
    }

    HashEncoderConfig cfg_;
};

// Forward tangent of the encoder for a constant coordinate tangent field:
// gathers the same corner features with weight-derivatives. Differentiable
// w.r.t. the tables (backward scatters dw * grad), which carries parameter
// gradients through expressions containing coordinate derivatives.
// inputs: [tables..., coords, ctan]
class EncodeJvpNode final : public Node {
public:
    EncodeJvpNode(std::vector<Tensor> in, HashEncoderConfig cfg) : Node(std::move(in)), cfg_(cfg) {}
    std::string_view name() const override { return "hash_encode_jvp"; }

    void backward(const Tensor&, const Tensor& g, GradSink& sink) const override {
        const Tensor& coords = inputs_[inputs_.size() - 2];
        const Tensor& ctan = inputs_.back();
        const auto geom = level_geometry(cfg_);
        const uint64_t mask = static_cast<uint64_t>(cfg_.table_size()) - 1;
        const int64_t b = coords.extent(0);
        const int F = cfg_.features_per_level;
        std::vector<Tensor> grads(static_cast<size_t>(cfg_.levels));
        for (int l = 0; l < cfg_.levels; ++l)
            grads[static_cast<size_t>(l)] = Tensor::zeros(inputs_[static_cast<size_t>(l)].shape(), g.dtype());
        kernels::dispatch(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* cp = coords.data<T>().data();
            const T* tp = ctan.data<T>().data();
            const T* gp = g.data<T>().data();
            const int64_t width = cfg_.out_width();
            ThreadPool::instance().run_chunks(cfg_.levels, [&](int64_t l) {
                T* tg = grads[static_cast<size_t>(l)].template data<T>().data();
                CellRef<T> cell;
                for (int64_t i = 0; i < b; ++i) {
                    locate(cp + i * 3, geom[static_cast<size_t>(l)], mask, cell, true);
                    const T* go = gp + i * width + l * F;
                    const T* ct = tp + i * 3;
                    for (int k = 0; k < 8; ++k) {
                        const T dw = cell.dw[k][0] * ct[0] + cell.dw[k][1] * ct[1] + cell.dw[k][2] * ct[2];
                        T* row = tg + static_cast<int64_t>(cell.idx[k]) * F;
                        for (int j = 0; j < F; ++j) row[j] += dw * go[j];
                    }
                }
            });
        });
        for (int l = 0; l < cfg_.levels; ++l) {
            if (sink.wanted(inputs_[static_cast<size_t>(l)]))
                sink.add(inputs_[static_cast<size_t>(l)], grads[static_cast<size_t>(l)]);
        }
    }

    HashEncoderConfig cfg_;
};

Tensor encode_jvp(const std::vector<Tensor>& tables, const Tensor& coords, const Tensor& ctan,
                  const HashEncoderConfig& cfg) {
    const auto geom = level_geometry(cfg);
    const uint64_t mask = static_cast<uint64_t>(cfg.table_size()) - 1;
    const int64_t b = coords.extent(0);
    const int F = cfg.features_per_level;
    Tensor out = make_tensor({b, cfg.out_width()}, coords.dtype());
    kernels::dispatch(coords.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* cp = coords.data<T>().data();
        const T* tp = ctan.data<T>().data();
        T* op = out.data<T>().data();
        const int64_t width = cfg.out_width();
        std::vector<const T*> tabs(static_cast<size_t>(cfg.levels));
        for (int l = 0; l < cfg.levels; ++l)
            tabs[static_cast<size_t>(l)] = tables[static_cast<size_t>(l)].template data<T>().data();
        parallel_for_chunks(b, 4096, [&](int64_t, int64_t i0, int64_t i1) {
            CellRef<T> cell;
            for (int64_t i = i0; i < i1; ++i) {
                const T* ct = tp + i * 3;
                for (int l = 0; l < cfg.levels; ++l) {
                    locate(cp + i * 3, geom[static_cast<size_t>(l)], mask, cell, true);
                    T acc[8];
                    for (int j = 0; j < F; ++j) acc[j] = T(0);
                    for (int k = 0; k < 8; ++k) {
                        const T dw = cell.dw[k][0] * ct[0] + cell.dw[k][1] * ct[1] + cell.dw[k][2] * ct[2];
                        const T* row = tabs[static_cast<size_t>(l)] + static_cast<int64_t>(cell.idx[k]) * F;
                        for (int j = 0; j < F; ++j) acc[j] += dw * row[j];
                    }
                    T* o = op + i * width + l * F;
                    for (int j = 0; j < F; ++j) o[j] = acc[j];
                }
            }
        });
    });
    std::vector<Tensor> node_in = tables;
    node_in.push_back(coords);
    node_in.push_back(ctan);
    attach_node<EncodeJvpNode>(out, std::move(node_in), cfg);
    return out;
}

}  // namespace

int64_t HashEncoderConfig::level_resolution(int level) const {
    return static_cast<int64_t>(std::floor(static_cast<double>(base_resolution) * std::pow(per_level_scale, level)));
}

bool HashEncoderConfig::level_is_direct(int level) const {
    const int64_t side = level_resolution(level) + 1;
    int64_t limit = 1;  // largest integer with limit^3 <= table_size, overflow-safe
    while ((limit + 1) * (limit + 1) * (limit + 1) <= table_size()) ++limit;
    return side <= limit;
}

void HashEncoderConfig::validate() const {
    if (levels < 1) throw ConfigError("encoder: levels must be >= 1");
    if (features_per_level < 1 || features_per_level > 8)
        throw ConfigError("encoder: features_per_level must be in [1,8]");
    if (log2_table_size < 4 || log2_table_size > 30) throw ConfigError("encoder: log2_table_size must be in [4,30]");
    if (base_resolution < 1) throw ConfigError("encoder: base_resolution must be >= 1");
    if (per_level_scale < 1.0) throw ConfigError("encoder: per_level_scale must be >= 1");
    for (int l = 1; l < levels; ++l)
        if (level_resolution(l) < level_resolution(l - 1))
            throw ConfigError("encoder: level resolutions must be nondecreasing");
}

Tensor hash_encode(const Tensor& coords, const std::vector<Tensor>& tables, const HashEncoderConfig& cfg) {
    cfg.validate();
    validate_coords(coords);
    if (static_cast<int>(tables.size()) != cfg.levels)
        throw ShapeError("hash_encode: " + std::to_string(tables.size()) + " tables for " + std::to_string(cfg.levels) +
                         " levels");
    for (const auto& t : tables)
        if (t.shape() != Shape{cfg.table_size(), cfg.features_per_level})
            throw ShapeError("hash_encode: table shape " + shape_str(t.shape()) + ", expected [" +
                             std::to_string(cfg.table_size()) + "," + std::to_string(cfg.features_per_level) + "]");

    const auto geom = level_geometry(cfg);
    const uint64_t mask = static_cast<uint64_t>(cfg.table_size()) - 1;
    const int64_t b = coords.extent(0);
    const int F = cfg.features_per_level;
    Tensor out = make_tensor({b, cfg.out_width()}, coords.dtype());
    kernels::dispatch(coords.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* cp = coords.data<T>().data();
        T* op = out.data<T>().data();
        const int64_t width = cfg.out_width();
        std::vector<const T*> tabs(static_cast<size_t>(cfg.levels));
        for (int l = 0; l < cfg.levels; ++l)
            tabs[static_cast<size_t>(l)] = tables[static_cast<size_t>(l)].template data<T>().data();
        parallel_for_chunks(b, 4096, [&](int64_t, int64_t i0, int64_t i1) {
            CellRef<T> cell;
            for (int64_t i = i0; i < i1; ++i) {
                for (int l = 0; l < cfg.levels; ++l) {
                    locate(cp + i * 3, geom[static_cast<size_t>(l)], mask, cell, false);
                    T acc[8];
                    for (int j = 0; j < F; ++j) acc[j] = T(0);
                    for (int k = 0; k < 8; ++k) {
                        const T* row = tabs[static_cast<size_t>(l)] + static_cast<int64_t>(cell.idx[k]) * F;
                        for (int j = 0; j < F; ++j) acc[j] += cell.w[k] * row[j];
                    }
                    T* o = op + i * width + l * F;
                    for (int j = 0; j < F; ++j) o[j] = acc[j];
                }
            }
        });
    });
    std::vector<Tensor> node_in = tables;
    node_in.push_back(coords);
    attach_node<EncodeNode>(out, std::move(node_in), cfg);
    return out;
}

}  // namespace finr
