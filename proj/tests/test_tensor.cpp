#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "finr/graph.hpp"
#include "finr/ops.hpp"
#include "finr/rng.hpp"
#include "test_util.hpp"

using namespace finr;

TEST_CASE("elementwise basics") {
    Tensor a = Tensor::from_values({2}, std::vector<double>{1, 2});
    Tensor b = Tensor::from_values({2}, std::vector<double>{3, 4});
    Tensor c = add(a, b);
    CHECK(c.at(0) == doctest::Approx(4));
    CHECK(c.at(1) == doctest::Approx(6));

    Tensor r = relu(Tensor::from_values({1}, std::vector<double>{-2}));
    CHECK(r.at(0) == 0.0);
}

TEST_CASE("relu adjoint at negative input is zero") {
    Tensor x = Tensor::from_values({2}, std::vector<double>{-1, 2}, DType::F64).set_requires_grad(true);
    Tensor loss = sum(relu(x));
    GradientMap g = backward(loss);
    Tensor gx = g.at(x);
    CHECK(gx.at(0) == 0.0);
    CHECK(gx.at(1) == 1.0);
}

TEST_CASE("backward of x^2 at x=3 is 6") {
    Tensor x = Tensor::from_values({}, std::vector<double>{3}, DType::F64).set_requires_grad(true);
    Tensor loss = square(x);
    GradientMap g = backward(loss);
    CHECK(g.at(x).item() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("broadcasting rules and errors") {
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({4});
    CHECK(add(a, b).shape() == Shape{3, 4});
    Tensor c = Tensor::zeros({3, 1});
    CHECK(mul(a, c).shape() == Shape{3, 4});
    CHECK_THROWS_WITH_AS(add(Tensor::zeros({3, 4}), Tensor::zeros({5})), doctest::Contains("[3,4]"), ShapeError);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 3})), ShapeError);
}

TEST_CASE("broadcast gradient reduces correctly") {
    Tensor a = Tensor::from_values({2, 2}, std::vector<double>{1, 2, 3, 4}, DType::F64).set_requires_grad(true);
    Tensor b = Tensor::from_values({2}, std::vector<double>{10, 20}, DType::F64).set_requires_grad(true);
    Tensor loss = sum(mul(a, b));
    GradientMap g = backward(loss);
    Tensor gb = g.at(b);
    CHECK(gb.at(0) == doctest::Approx(1 + 3));
    CHECK(gb.at(1) == doctest::Approx(2 + 4));
    Tensor ga = g.at(a);
    CHECK(ga.at(0) == doctest::Approx(10));
    CHECK(ga.at(3) == doctest::Approx(20));
}

TEST_CASE("divide by zero is a domain error in f64") {
    Tensor a = Tensor::full({2}, 1.0, DType::F64);
    Tensor b = Tensor::from_values({2}, std::vector<double>{1, 0}, DType::F64);
    CHECK_THROWS_AS(div(a, b), DomainError);
    // f32 follows IEEE semantics
    Tensor bf = Tensor::from_values({2}, std::vector<double>{1, 0}, DType::F32);
    Tensor af = Tensor::full({2}, 1.0, DType::F32);
    CHECK(std::isinf(div(af, bf).at(1)));
}

TEST_CASE("backward requires a scalar") {
    Tensor x = Tensor::zeros({2}, DType::F64).set_requires_grad(true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("repeated backward gives identical results") {
    Rng rng(7);
    Tensor x = Tensor::zeros({5}, DType::F64).set_requires_grad(true);
    fill_uniform(x, rng);
    Tensor loss = sum(square(relu(x)));
    GradientMap g1 = backward(loss);
    GradientMap g2 = backward(loss);
    for (int64_t i = 0; i < 5; ++i) CHECK(g1.at(x).at(i) == g2.at(x).at(i));
}

TEST_CASE("unreachable parameters get exact zeros") {
    Tensor x = Tensor::full({3}, 1.0, DType::F64).set_requires_grad(true);
    Tensor unused = Tensor::full({4}, 2.0, DType::F64).set_requires_grad(true);
    Tensor loss = sum(x);
    GradientMap g = backward(loss);
    CHECK(!g.contains(unused));
    Tensor gz = g.grad_or_zero(unused);
    CHECK(gz.shape() == Shape{4});
    for (int64_t i = 0; i < 4; ++i) CHECK(gz.at(i) == 0.0);
}

TEST_CASE("matmul gradient matches central finite differences") {
    Rng rng(11);
    Tensor a = Tensor::zeros({3, 4}, DType::F64).set_requires_grad(true);
    Tensor b = Tensor::zeros({4, 2}, DType::F64).set_requires_grad(true);
    fill_uniform(a, rng);
    fill_uniform(b, rng);
    auto f = [&]() { return sum(square(matmul(a, b))); };
    CHECK(max_grad_fd_error(f, {a, b}, 1e-6) < 1e-6);
}

TEST_CASE("random 3-layer composition gradient matches finite differences") {
    Rng rng(13);
    Tensor x = Tensor::zeros({4, 3}, DType::F64);
    Tensor w1 = Tensor::zeros({3, 5}, DType::F64).set_requires_grad(true);
    Tensor b1 = Tensor::zeros({5}, DType::F64).set_requires_grad(true);
    Tensor w2 = Tensor::zeros({5, 5}, DType::F64).set_requires_grad(true);
    Tensor b2 = Tensor::zeros({5}, DType::F64).set_requires_grad(true);
    Tensor w3 = Tensor::zeros({5, 2}, DType::F64).set_requires_grad(true);
    for (Tensor* t : {&x, &w1, &b1, &w2, &b2, &w3}) fill_uniform(*t, rng);
    auto f = [&]() {
        Tensor h1 = relu(add(matmul(x, w1), b1));
        Tensor h2 = relu(add(matmul(h1, w2), b2));
        return mean(square(matmul(h2, w3)));
    };
    CHECK(max_grad_fd_error(f, {w1, b1, w2, b2, w3}, 1e-6) < 1e-5);
}

TEST_CASE("adjoint identity for linear primitives") {
    // For a linear op A: <A x, y> = <x, A^T y>, where A^T y is obtained from
    // backward(sum(A(x) * y)).
    Rng rng(17);
    auto check_linear = [&](const std::function<Tensor(const Tensor&)>& op, const Shape& in_shape, int trials) {
        for (int k = 0; k < trials; ++k) {
            Tensor x = Tensor::zeros(in_shape, DType::F64).set_requires_grad(true);
            fill_uniform(x, rng);
            Tensor ax = op(x);
            Tensor y = Tensor::zeros(ax.shape(), DType::F64);
            fill_uniform(y, rng);
            const double lhs = dot_flat(ax, y);
            Tensor loss = sum(mul(ax, y));
            Tensor aty = backward(loss).at(x);
            const double rhs = dot_flat(x, aty);
            CHECK(rel_err(lhs, rhs) < 1e-10);
        }
    };

    Tensor m = Tensor::zeros({6, 5}, DType::F64);
    fill_uniform(m, rng);
    check_linear([&](const Tensor& x) { return matmul(m, x); }, {5, 4}, 20);
    check_linear([&](const Tensor& x) { return matmul(x, m); }, {4, 6}, 20);
    check_linear([](const Tensor& x) { return neg(x); }, {7}, 20);
    check_linear([](const Tensor& x) { return add(x, x); }, {5, 3}, 20);
    check_linear([](const Tensor& x) { return sum(x, 1, false); }, {4, 6}, 20);
    check_linear([](const Tensor& x) { return mean(x, 0, false); }, {4, 6}, 20);
    check_linear([](const Tensor& x) { return slice(x, 0, 1, 3); }, {5, 2}, 20);
    check_linear([](const Tensor& x) { return permute(x, {1, 0}); }, {3, 4}, 20);
    check_linear([](const Tensor& x) { return reshape(x, {6, 2}); }, {3, 4}, 20);
    check_linear([](const Tensor& x) { return concat({x, x}, 0); }, {3, 2}, 20);
    check_linear([](const Tensor& x) { return gather_rows(x, {2, 0, 2, 1}); }, {4, 3}, 20);
    check_linear([](const Tensor& x) { return scatter_add_rows(x, {1, 3, 1}, 5); }, {3, 2}, 20);
    check_linear([](const Tensor& x) { return complex_conj(x); }, {4, 2}, 20);
    check_linear([](const Tensor& x) { return channel(x, 1); }, {5, 3}, 20);
    Tensor cm = Tensor::zeros({4, 2}, DType::F64);
    fill_uniform(cm, rng);
    check_linear([&](const Tensor& x) { return complex_mul(x, cm); }, {4, 2}, 20);
    check_linear([](const Tensor& x) { return cast(x, DType::F64); }, {6}, 20);
}

TEST_CASE("tangent rules: directional derivative of linear and constant maps") {
    // f(x,y,t) = 2x + 3 built from primitives on a traced coords leaf.
    Tensor coords = Tensor::zeros({5, 3}, DType::F64).set_traced(true);
    Rng rng(23);
    fill_uniform(coords, rng, 0.0, 1.0);
    Tensor x = channel(slice(coords, 1, 0, 1), 0);
    Tensor f = add(mul(x, Tensor::scalar(2.0, DType::F64)), Tensor::scalar(3.0, DType::F64));
    Tensor dfdx = directional_derivative(f, coords, Axis::X);
    Tensor dfdy = directional_derivative(f, coords, Axis::Y);
    for (int64_t i = 0; i < 5; ++i) {
        CHECK(dfdx.at(i) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(dfdy.at(i) == 0.0);
    }

    // constant function: all directional derivatives are zero
    Tensor c = mul(x, Tensor::scalar(0.0, DType::F64));
    Tensor dc = directional_derivative(c, coords, Axis::T);
    for (int64_t i = 0; i < 5; ++i) CHECK(dc.at(i) == 0.0);
}

TEST_CASE("tangent linearity: derivative of a sum is the sum of derivatives") {
    Rng rng(29);
    Tensor coords = Tensor::zeros({8, 3}, DType::F64).set_traced(true);
    fill_uniform(coords, rng, 0.1, 0.9);
    Tensor w = Tensor::zeros({3, 4}, DType::F64);
    fill_uniform(w, rng);
    Tensor f = relu(matmul(coords, w));
    Tensor g = square(matmul(coords, w));
    Tensor df = directional_derivative(f, coords, Axis::Y);
    Tensor dg = directional_derivative(g, coords, Axis::Y);
    Tensor dsum = directional_derivative(add(f, g), coords, Axis::Y);
    for (int64_t i = 0; i < dsum.numel(); ++i)
        CHECK(rel_err(dsum.at(i), df.at(i) + dg.at(i)) < 1e-6);
}

TEST_CASE("forward-over-reverse: backward through a directional derivative") {
    // loss = sum((df/dx)^2) must produce gradients w.r.t. the weights used in f.
    Rng rng(31);
    Tensor coords = Tensor::zeros({6, 3}, DType::F64).set_traced(true);
    fill_uniform(coords, rng, 0.1, 0.9);
    Tensor w = Tensor::zeros({3, 2}, DType::F64).set_requires_grad(true);
    fill_uniform(w, rng);
    auto f = [&]() {
        Tensor h = matmul(coords, w);
        Tensor d = directional_derivative(square(h), coords, Axis::X);
        return sum(square(d));
    };
    CHECK(max_grad_fd_error(f, {w}, 1e-6) < 1e-6);
}

TEST_CASE("primitive without a tangent rule names itself") {
    Tensor coords = Tensor::zeros({3, 3}, DType::F64).set_traced(true);
    Tensor z = complex_pack(channel(coords, 0), channel(coords, 1));
    Tensor m = complex_modulus(z);
    CHECK_THROWS_WITH_AS(directional_derivative(m, coords, Axis::X), doctest::Contains("complex_modulus"),
                         UnsupportedOperation);
}

TEST_CASE("determinism: identical inputs produce bit-identical results") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor a = Tensor::zeros({64, 32});
        Tensor b = Tensor::zeros({32, 16});
        fill_uniform(a, rng);
        fill_uniform(b, rng);
        Tensor c = matmul(relu(a), b);
        std::vector<float> out(c.data<float>().begin(), c.data<float>().end());
        return out;
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("complex primitives") {
    // (1+2i)(3-i) = 5+5i
    Tensor a = Tensor::from_values({2}, std::vector<double>{1, 2}, DType::F64);
    Tensor b = Tensor::from_values({2}, std::vector<double>{3, -1}, DType::F64);
    Tensor c = complex_mul(a, b);
    CHECK(c.at(0) == doctest::Approx(5));
    CHECK(c.at(1) == doctest::Approx(5));
    CHECK(complex_modulus(Tensor::from_values({2}, std::vector<double>{3, 4}, DType::F64)).item() ==
          doctest::Approx(5));
    Tensor re = Tensor::from_values({2}, std::vector<double>{0.3, 1.0}, DType::F64);
    Tensor im = Tensor::from_values({2}, std::vector<double>{-0.5, 2.0}, DType::F64);
    Tensor z = complex_pack(re, im);
    CHECK(z.shape() == Shape{2, 2});
    CHECK(z.at(0) == doctest::Approx(0.3));
    CHECK(z.at(1) == doctest::Approx(-0.5));
    CHECK(channel(z, 1).at(1) == doctest::Approx(2.0));
}

TEST_CASE("gradient check across the full primitive set") {
    Rng rng(37);
    Tensor x = Tensor::zeros({4, 2}, DType::F64).set_requires_grad(true);
    fill_uniform(x, rng, 0.2, 1.5);  // positive, away from abs/relu/sqrt kinks
    auto f = [&]() {
        Tensor s = sqrt(x);
        Tensor q = div(square(s), add(x, Tensor::scalar(1.0, DType::F64)));
        Tensor m = complex_mul(q, complex_conj(x));
        Tensor t = concat({abs(m), neg(m)}, 1);
        return mean(complex_modulus(slice(mul(t, t + 0.5), 1, 1, 3)));
    };
    CHECK(max_grad_fd_error(f, {x}, 1e-6) < 1e-6);
}
