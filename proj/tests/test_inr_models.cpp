#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "finr/models.hpp"
#include "finr/rng.hpp"
#include "test_util.hpp"

using namespace finr;

namespace {

// Independent scalar reimplementation of the encoder for one point, written
// directly from the interpolation definition. Shares no code with the
// library path.
std::vector<double> oracle_encode(double x, double y, double t, const std::vector<Tensor>& tables,
                                  const HashEncoderConfig& cfg) {
    std::vector<double> out;
    for (int l = 0; l < cfg.levels; ++l) {
        const int64_t n = static_cast<int64_t>(std::floor(cfg.base_resolution * std::pow(cfg.per_level_scale, l)));
        const double coords[3] = {x * n, y * n, t * n};
        int64_t c[3];
        double f[3];
        for (int d = 0; d < 3; ++d) {
            c[d] = std::min<int64_t>(static_cast<int64_t>(std::floor(coords[d])), n - 1);
            c[d] = std::max<int64_t>(c[d], 0);
            f[d] = coords[d] - c[d];
        }
        const bool direct = (n + 1) * (n + 1) * (n + 1) <= (int64_t{1} << cfg.log2_table_size);
        std::vector<double> acc(cfg.features_per_level, 0.0);
        for (int bx = 0; bx <= 1; ++bx)
            for (int by = 0; by <= 1; ++by)
                for (int bt = 0; bt <= 1; ++bt) {
                    const double w = (bx ? f[0] : 1 - f[0]) * (by ? f[1] : 1 - f[1]) * (bt ? f[2] : 1 - f[2]);
                    const uint64_t vx = static_cast<uint64_t>(c[0] + bx);
                    const uint64_t vy = static_cast<uint64_t>(c[1] + by);
                    const uint64_t vt = static_cast<uint64_t>(c[2] + bt);
                    uint64_t idx;
                    if (direct) {
                        const uint64_t side = static_cast<uint64_t>(n) + 1;
                        idx = vx + side * (vy + side * vt);
                    } else {
                        idx = (vx * 1ull ^ vy * 2654435761ull ^ vt * 805459861ull) %
                              (uint64_t{1} << cfg.log2_table_size);
                    }
                    for (int j = 0; j < cfg.features_per_level; ++j)
                        acc[static_cast<size_t>(j)] +=
                            w * tables[static_cast<size_t>(l)].at(static_cast<int64_t>(idx) * cfg.features_per_level + j);
                }
        out.insert(out.end(), acc.begin(), acc.end());
    }
    return out;
}

ModelParameters random_model(const HashEncoderConfig& enc, const MlpConfig& mlp, DType dt, uint64_t seed) {
    return ModelParameters::init(enc, mlp, dt, seed);
}

Tensor point_coords(std::vector<std::array<double, 3>> pts, DType dt = DType::F64) {
    std::vector<double> flat;
    for (auto& p : pts) {
        flat.push_back(p[0]);
        flat.push_back(p[1]);
        flat.push_back(p[2]);
    }
    return Tensor::from_values({static_cast<int64_t>(pts.size()), 3}, flat, dt);
}

}  // namespace

TEST_CASE("encoder: coordinate at a grid vertex returns the vertex feature") {
    HashEncoderConfig cfg{1, 2, 16, 4, 2.0};  // single level, direct indexing
    Rng rng(5);
    Tensor table = Tensor::zeros({cfg.table_size(), 2}, DType::F64);
    fill_uniform(table, rng);
    // vertex (2,1,3) of the 4^3 grid
    Tensor coords = point_coords({{2.0 / 4, 1.0 / 4, 3.0 / 4}});
    Tensor enc = hash_encode(coords, {table}, cfg);
    const uint64_t idx = 2 + 5 * (1 + 5 * 3);
    CHECK(enc.at(0) == doctest::Approx(table.at(static_cast<int64_t>(idx) * 2)).epsilon(1e-12));
    CHECK(enc.at(1) == doctest::Approx(table.at(static_cast<int64_t>(idx) * 2 + 1)).epsilon(1e-12));

    // the corner coordinate (1,1,1) exercises the clamped top cell
    Tensor corner = point_coords({{1.0, 1.0, 1.0}});
    Tensor ec = hash_encode(corner, {table}, cfg);
    const uint64_t top = 4 + 5 * (4 + 5 * 4);
    CHECK(ec.at(0) == doctest::Approx(table.at(static_cast<int64_t>(top) * 2)).epsilon(1e-12));
}

TEST_CASE("encoder: cell center averages the 8 corner features") {
    HashEncoderConfig cfg{1, 1, 16, 4, 2.0};
    Rng rng(6);
    Tensor table = Tensor::zeros({cfg.table_size(), 1}, DType::F64);
    fill_uniform(table, rng);
    Tensor coords = point_coords({{1.5 / 4, 2.5 / 4, 0.5 / 4}});
    Tensor enc = hash_encode(coords, {table}, cfg);
    double want = 0;
    for (int bx = 0; bx <= 1; ++bx)
        for (int by = 0; by <= 1; ++by)
            for (int bt = 0; bt <= 1; ++bt) want += table.at((1 + bx) + 5 * ((2 + by) + 5 * (0 + bt)));
    want /= 8;
    CHECK(enc.item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("encoder: arbitrary coordinates match the independent oracle") {
    HashEncoderConfig cfg = HashEncoderConfig::desk();
    Rng rng(7);
    std::vector<Tensor> tables;
    for (int l = 0; l < cfg.levels; ++l) {
        Tensor t = Tensor::zeros({cfg.table_size(), cfg.features_per_level}, DType::F64);
        fill_uniform(t, rng);
        tables.push_back(t);
    }
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 25; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor coords = point_coords(pts);
    Tensor enc = hash_encode(coords, tables, cfg);
    for (size_t i = 0; i < pts.size(); ++i) {
        auto want = oracle_encode(pts[i][0], pts[i][1], pts[i][2], tables, cfg);
        for (size_t j = 0; j < want.size(); ++j) {
            CHECK(enc.at(static_cast<int64_t>(i * want.size() + j)) ==
                  doctest::Approx(want[j]).epsilon(1e-10));
        }
    }
}

TEST_CASE("encoder: trilinear partition of unity") {
    // With every table entry set to 1, the output at any coordinate equals
    // the sum of interpolation weights.
    HashEncoderConfig cfg{4, 1, 10, 3, 1.7};
    std::vector<Tensor> tables;
    for (int l = 0; l < cfg.levels; ++l) tables.push_back(Tensor::full({cfg.table_size(), 1}, 1.0, DType::F64));
    Rng rng(8);
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor enc = hash_encode(point_coords(pts), tables, cfg);
    for (int64_t i = 0; i < enc.numel(); ++i) CHECK(enc.at(i) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("encoder: coordinate outside [0,1] is a domain error") {
    HashEncoderConfig cfg{1, 1, 10, 4, 2.0};
    Tensor table = Tensor::zeros({cfg.table_size(), 1}, DType::F64);
    CHECK_THROWS_AS(hash_encode(point_coords({{1.2, 0.5, 0.5}}), {table}, cfg), DomainError);
    CHECK_THROWS_AS(hash_encode(point_coords({{0.2, -0.1, 0.5}}), {table}, cfg), DomainError);
}

TEST_CASE("encoder: perturbing a table entry only changes coordinates mapped to it") {
    HashEncoderConfig cfg{1, 1, 6, 24, 2.0};  // hashed level (25^3 > 2^6)
    REQUIRE(!cfg.level_is_direct(0));
    Rng rng(9);
    Tensor table = Tensor::zeros({cfg.table_size(), 1}, DType::F64);
    fill_uniform(table, rng);
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor coords = point_coords(pts);
    Tensor before = hash_encode(coords, {table}, cfg);

    const int64_t entry = 13;
    // touched set computed with the oracle's hash
    std::set<size_t> touched;
    for (size_t i = 0; i < pts.size(); ++i) {
        const int64_t n = 24;
        int64_t c[3];
        for (int d = 0; d < 3; ++d)
            c[d] = std::max<int64_t>(0, std::min<int64_t>(static_cast<int64_t>(std::floor(pts[i][d] * n)), n - 1));
        for (int k = 0; k < 8; ++k) {
            const uint64_t vx = static_cast<uint64_t>(c[0] + (k & 1));
            const uint64_t vy = static_cast<uint64_t>(c[1] + ((k >> 1) & 1));
            const uint64_t vt = static_cast<uint64_t>(c[2] + ((k >> 2) & 1));
            if (((vx ^ vy * 2654435761ull ^ vt * 805459861ull) % 64) == static_cast<uint64_t>(entry))
                touched.insert(i);
        }
    }
    table.set(entry, table.at(entry) + 1.0);
    Tensor after = hash_encode(coords, {table}, cfg);
    for (size_t i = 0; i < pts.size(); ++i) {
        const bool changed = std::abs(after.at(static_cast<int64_t>(i)) - before.at(static_cast<int64_t>(i))) > 1e-12;
        CHECK(changed == (touched.count(i) > 0));
    }
}

TEST_CASE("mlp: zero weights with output bias c gives c everywhere") {
    HashEncoderConfig enc = HashEncoderConfig::desk();
    MlpConfig mlp;
    ModelParameters p = ModelParameters::init(enc, mlp, DType::F64, 1);
    for (auto& w : p.weights) {
        for (int64_t i = 0; i < w.numel(); ++i) w.set(i, 0.0);
    }
    p.biases.back().set(0, 0.3);
    p.biases.back().set(1, -0.5);
    Rng rng(10);
    Tensor feats = Tensor::zeros({7, enc.out_width()}, DType::F64);
    fill_uniform(feats, rng);
    Tensor out = mlp_forward(feats, p);
    for (int64_t i = 0; i < 7; ++i) {
        CHECK(out.at(i * 2) == doctest::Approx(0.3));
        CHECK(out.at(i * 2 + 1) == doctest::Approx(-0.5));
    }
}

TEST_CASE("mlp: matches an independent matrix-arithmetic evaluation") {
    HashEncoderConfig enc = HashEncoderConfig::desk();
    MlpConfig mlp;
    ModelParameters p = ModelParameters::init(enc, mlp, DType::F64, 42);
    Rng rng(11);
    const int64_t B = 9;
    Tensor feats = Tensor::zeros({B, enc.out_width()}, DType::F64);
    fill_uniform(feats, rng);
    Tensor out = mlp_forward(feats, p);

    // plain loops over the stored weights
    for (int64_t b = 0; b < B; ++b) {
        std::vector<double> h(static_cast<size_t>(enc.out_width()));
        for (size_t j = 0; j < h.size(); ++j) h[j] = feats.at(b * enc.out_width() + static_cast<int64_t>(j));
        for (size_t layer = 0; layer < p.weights.size(); ++layer) {
            const Tensor& w = p.weights[layer];
            const Tensor& bias = p.biases[layer];
            std::vector<double> nh(static_cast<size_t>(w.extent(1)), 0.0);
            for (int64_t o = 0; o < w.extent(1); ++o) {
                double acc = bias.at(o);
                for (int64_t i = 0; i < w.extent(0); ++i) acc += h[static_cast<size_t>(i)] * w.at(i * w.extent(1) + o);
                nh[static_cast<size_t>(o)] = acc;
            }
            if (layer + 1 < p.weights.size())
                for (auto& v : nh) v = v > 0 ? v : 0;
            h = nh;
        }
        CHECK(rel_err(out.at(b * 2), h[0]) < 1e-6);
        CHECK(rel_err(out.at(b * 2 + 1), h[1]) < 1e-6);
    }
}

TEST_CASE("mlp: feature width mismatch is a dimension error") {
    ModelParameters p = ModelParameters::init(HashEncoderConfig::desk(), MlpConfig{}, DType::F64, 1);
    CHECK_THROWS_AS(mlp_forward(Tensor::zeros({3, 5}, DType::F64), p), ShapeError);
}

TEST_CASE("eval: zero-parameter network gives an all-zero image") {
    HashEncoderConfig enc{2, 2, 8, 4, 2.0};
    ModelParameters p = ModelParameters::init(enc, MlpConfig{}, DType::F64, 3);
    for (auto& t : p.all_params())
        for (int64_t i = 0; i < t.numel(); ++i) t.set(i, 0.0);
    CoordinateGrid grid = CoordinateGrid::make(4, 4, 2, DType::F64);
    Tensor img = render_grid(p, grid);
    CHECK(img.shape() == Shape{4, 4, 2, 2});
    for (int64_t i = 0; i < img.numel(); ++i) CHECK(img.at(i) == 0.0);
}

TEST_CASE("eval: full-grid render equals pointwise evaluation") {
    HashEncoderConfig enc{3, 2, 10, 4, 1.5};
    ModelParameters p = ModelParameters::init(enc, MlpConfig{2, 16, 2, "relu"}, DType::F64, 17);
    CoordinateGrid grid = CoordinateGrid::make(4, 4, 2, DType::F64);
    Tensor img = render_grid(p, grid);
    for (int64_t x = 0; x < 4; ++x)
        for (int64_t y = 0; y < 4; ++y)
            for (int64_t t = 0; t < 2; ++t) {
                Tensor c = point_coords({{static_cast<double>(x) / 3, static_cast<double>(y) / 3, static_cast<double>(t)}});
                Tensor v = eval_image(p, c);
                const int64_t base = ((x * 4 + y) * 2 + t) * 2;
                CHECK(img.at(base) == doctest::Approx(v.at(0)).epsilon(1e-12));
                CHECK(img.at(base + 1) == doctest::Approx(v.at(1)).epsilon(1e-12));
            }
}

TEST_CASE("eval: deterministic given params and coords") {
    ModelParameters p = ModelParameters::init(HashEncoderConfig::desk(), MlpConfig{}, DType::F32, 23);
    CoordinateGrid grid = CoordinateGrid::make(8, 8, 3);
    Tensor a = eval_points(p, grid.coords);
    Tensor b = eval_points(p, grid.coords);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("image_derivatives: constant network has zero derivatives") {
    HashEncoderConfig enc{2, 2, 8, 4, 2.0};
    ModelParameters p = ModelParameters::init(enc, MlpConfig{}, DType::F64, 4);
    for (auto& w : p.weights)
        for (int64_t i = 0; i < w.numel(); ++i) w.set(i, 0.0);
    p.biases.back().set(0, 1.25);
    Tensor coords = point_coords({{0.3, 0.4, 0.5}, {0.7, 0.2, 0.9}});
    auto d = image_derivatives(p, coords);
    for (int64_t i = 0; i < d.dx.numel(); ++i) {
        CHECK(d.dx.at(i) == 0.0);
        CHECK(d.dy.at(i) == 0.0);
        CHECK(d.dt.at(i) == 0.0);
    }
}

TEST_CASE("image_derivatives: linear feature ramp along x has the ramp slope") {
    // Single level, direct indexing; feature0(vertex) = 0.5 + 0.4*(i/N),
    // feature1 = 0. Pass-through MLP on channel 0.
    HashEncoderConfig enc{1, 2, 16, 4, 2.0};
    MlpConfig mlp{1, 2, 2, "relu"};
    ModelParameters p = ModelParameters::init(enc, mlp, DType::F64, 5);
    for (int64_t vt = 0; vt <= 4; ++vt)
        for (int64_t vy = 0; vy <= 4; ++vy)
            for (int64_t vx = 0; vx <= 4; ++vx) {
                const int64_t idx = vx + 5 * (vy + 5 * vt);
                p.tables[0].set(idx * 2, 0.5 + 0.4 * (static_cast<double>(vx) / 4));
                p.tables[0].set(idx * 2 + 1, 0.0);
            }
    // W0 = I, b0 = 0; W1 = I, b1 = 0 (positive preactivations keep ReLU inactive)
    for (auto& w : p.weights)
        for (int64_t i = 0; i < w.numel(); ++i) w.set(i, 0.0);
    for (auto& b : p.biases)
        for (int64_t i = 0; i < b.numel(); ++i) b.set(i, 0.0);
    p.weights[0].set(0, 1.0);
    p.weights[0].set(3, 1.0);
    p.weights[1].set(0, 1.0);
    p.weights[1].set(3, 1.0);

    Tensor coords = point_coords({{0.31, 0.57, 0.13}, {0.66, 0.21, 0.77}});
    auto d = image_derivatives(p, coords);
    for (int64_t i = 0; i < 2; ++i) {
        CHECK(d.dx.at(i * 2) == doctest::Approx(0.4).epsilon(1e-9));
        CHECK(std::abs(d.dy.at(i * 2)) < 1e-12);
        CHECK(std::abs(d.dt.at(i * 2)) < 1e-12);
    }
}

TEST_CASE("image_derivatives: random network matches continuous central differences") {
    // Encoder chosen so that coordinates >= 1e-2 from every cell boundary
    // exist; candidates are finest-level cell centers filtered against all
    // coarser levels.
    HashEncoderConfig enc{5, 2, 16, 8, 1.5};  // resolutions 8,12,18,27,40
    ModelParameters p = ModelParameters::init(enc, MlpConfig{2, 32, 2, "relu"}, DType::F64, 77);
    const double margin = 1e-2;
    const int64_t nf = enc.level_resolution(enc.levels - 1);
    std::vector<double> valid;
    for (int64_t k = 0; k < nf; ++k) {
        const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(nf);
        bool ok = true;
        for (int l = 0; l < enc.levels && ok; ++l) {
            const double scaled = x * static_cast<double>(enc.level_resolution(l));
            const double frac = scaled - std::floor(scaled);
            const double dist = std::min(frac, 1.0 - frac) / static_cast<double>(enc.level_resolution(l));
            if (dist < margin) ok = false;
        }
        if (ok) valid.push_back(x);
    }
    REQUIRE(valid.size() >= 3);

    Rng rng(78);
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 30; ++i)
        pts.push_back({valid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(valid.size())))],
                       valid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(valid.size())))],
                       valid[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(valid.size())))]});
    Tensor coords = point_coords(pts);
    auto d = image_derivatives(p, coords);

    const double h = 1e-3;
    for (size_t i = 0; i < pts.size(); ++i) {
        for (int axis = 0; axis < 3; ++axis) {
            auto at = [&](double delta) {
                auto q = pts[i];
                q[static_cast<size_t>(axis)] += delta;
                Tensor v = eval_image(p, point_coords({q}));
                return std::array<double, 2>{v.at(0), v.at(1)};
            };
            const auto fp = at(h), fm = at(-h);
            const Tensor& dd = axis == 0 ? d.dx : (axis == 1 ? d.dy : d.dt);
            for (int ch = 0; ch < 2; ++ch) {
                const double fd = (fp[static_cast<size_t>(ch)] - fm[static_cast<size_t>(ch)]) / (2 * h);
                const double an = dd.at(static_cast<int64_t>(i) * 2 + ch);
                if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
                CHECK(rel_err(an, fd) < 1e-2);
            }
        }
    }
}

TEST_CASE("flow_to_pixels unit conversion") {
    Tensor flow = Tensor::zeros({2, 2}, DType::F64);
    flow.set(0, 1.0);  // u = 1
    flow.set(1, 0.0);
    flow.set(2, 0.0);
    flow.set(3, 2.0);  // v = 2
    Tensor px = flow_to_pixels(flow, 65, 33, 17);
    CHECK(px.at(0) == doctest::Approx(64.0 / 16.0));
    CHECK(px.at(3) == doctest::Approx(2.0 * 32.0 / 16.0));

    Tensor back = flow_from_pixels(px, 65, 33, 17);
    for (int64_t i = 0; i < 4; ++i) CHECK(back.at(i) == doctest::Approx(flow.at(i)).epsilon(1e-6));

    CHECK_THROWS_AS(flow_to_pixels(flow, 65, 33, 1), DomainError);
}

TEST_CASE("parameter count is a pure function of the configs") {
    HashEncoderConfig enc = HashEncoderConfig::desk();
    MlpConfig mlp;
    ModelParameters a = ModelParameters::init(enc, mlp, DType::F32, 1);
    ModelParameters b = ModelParameters::init(enc, mlp, DType::F32, 999);
    const int64_t tables = static_cast<int64_t>(enc.levels) * enc.table_size() * enc.features_per_level;
    const int64_t w = enc.out_width() * 128 + 128 + 128 * 128 + 128 + 128 * 2 + 2;
    CHECK(a.param_count() == tables + w);
    CHECK(a.param_count() == b.param_count());

    // same seed, identical parameters; different seed, different
    ModelParameters c = ModelParameters::init(enc, mlp, DType::F32, 1);
    CHECK(a.tables[0].at(123) == c.tables[0].at(123));
    CHECK(a.tables[0].at(123) != b.tables[0].at(123));
}

TEST_CASE("paper encoder profile is available as a preset") {
    HashEncoderConfig paper = HashEncoderConfig::paper();
    CHECK(paper.levels == 24);
    CHECK(paper.features_per_level == 2);
    CHECK(paper.log2_table_size == 24);
    CHECK(paper.base_resolution == 16);
    CHECK(paper.per_level_scale == 2.0);
    paper.validate();
    CHECK(paper.level_resolution(0) == 16);
    CHECK(paper.level_resolution(1) == 32);
}
