#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "cardiosep/error.hpp"
#include "cardiosep/nngrad.hpp"
#include "cardiosep/random.hpp"

using namespace cardiosep;
using namespace cardiosep::nn;

namespace {

ParamSet make_mlp(std::vector<std::size_t> sizes, Activation hidden, Activation output, std::uint64_t seed) {
    Rng rng(seed);
    return ParamSet::mlp("net", sizes, hidden, output, rng);
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

// Half squared error against `target`, summed over the batch.
double mse(const Matrix& y, const Matrix& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += 0.5 * (y.data()[i] - target.data()[i]) * (y.data()[i] - target.data()[i]);
    return acc;
}

Gradients mse_gradients(ParamSet& net, const Matrix& x, const Matrix& target) {
    GradTape tape;
    const Matrix y = forward(net, x, &tape);
    Matrix dy(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i) dy.data()[i] = y.data()[i] - target.data()[i];
    auto grads = net.zero_gradients();
    backward(tape, net, dy, grads);
    return grads;
}

}  // namespace

TEST_CASE("mlp shapes and Glorot initialization") {
    auto net = make_mlp({5, 4, 3}, Activation::tanh, Activation::identity, 1);
    REQUIRE(net.layers.size() == 2);
    CHECK(net.layers[0].name == "net.0");
    CHECK(net.input_dim() == 5);
    CHECK(net.output_dim() == 3);
    CHECK(net.parameter_count() == 5 * 4 + 4 + 4 * 3 + 3);
    const double limit = std::sqrt(6.0 / 9.0);
    for (double w : net.layers[0].weight.data()) REQUIRE(std::abs(w) <= limit);
    for (double b : net.layers[0].bias) REQUIRE(b == 0.0);
    CHECK(net.first_moment.size() == 2);
    CHECK_THROWS_AS(make_mlp({5}, Activation::tanh, Activation::identity, 1), InvalidArgument);
}

TEST_CASE("affine with identity weights is the identity") {
    auto net = make_mlp({3, 3}, Activation::identity, Activation::identity, 2);
    net.layers[0].weight = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const Matrix eye = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(affine(nullptr, eye, net, 0) == eye);
    CHECK_THROWS_AS(affine(nullptr, Matrix(1, 4), net, 0), InvalidArgument);
}

TEST_CASE("activations and their local gradients") {
    const Matrix x = Matrix::from_rows({{-1.0, 0.0, 2.0}});
    CHECK(activation(nullptr, x, Activation::relu) == Matrix::from_rows({{0.0, 0.0, 2.0}}));
    CHECK(activation(nullptr, x, Activation::identity) == x);
    CHECK(activation(nullptr, Matrix(1, 1), Activation::tanh)(0, 0) == 0.0);

    // tanh'(0) == 1 and relu'(0) == 0, through a one-layer identity-weight net.
    for (auto [kind, expected] : {std::pair{Activation::tanh, 1.0}, std::pair{Activation::relu, 0.0}}) {
        auto net = make_mlp({1, 1}, kind, kind, 3);
        net.layers[0].weight(0, 0) = 1.0;
        GradTape tape;
        forward(net, Matrix(1, 1), &tape);
        auto grads = net.zero_gradients();
        const Matrix dx = backward(tape, net, Matrix(1, 1, 1.0), grads);
        CHECK(dx(0, 0) == expected);
    }

    CHECK(activation_from_string("tanh") == Activation::tanh);
    CHECK(std::string(to_string(Activation::relu)) == "relu");
    CHECK_THROWS_AS(activation_from_string("gelu"), InvalidArgument);
}

TEST_CASE("backward: sum(Wx) gradient is x in every column") {
    auto net = make_mlp({4, 3}, Activation::identity, Activation::identity, 4);
    const Matrix x = Matrix::from_rows({{0.5, -1.0, 2.0, 3.0}});
    GradTape tape;
    forward(net, x, &tape);
    auto grads = net.zero_gradients();
    backward(tape, net, Matrix(1, 3, 1.0), grads);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) REQUIRE(grads[0].weight(i, j) == x(0, i));
    for (double b : grads[0].bias) CHECK(b == 1.0);
}

TEST_CASE("backward: unreached parameters keep zero gradient") {
    auto net = make_mlp({3, 3, 2}, Activation::tanh, Activation::identity, 5);
    GradTape tape;
    const Matrix h = activation(&tape, affine(&tape, random_matrix(2, 3, 6), net, 0), Activation::tanh);
    auto grads = net.zero_gradients();
    backward(tape, net, Matrix(h.rows(), h.cols(), 1.0), grads);
    for (double w : grads[1].weight.data()) REQUIRE(w == 0.0);
    for (double b : grads[1].bias) REQUIRE(b == 0.0);
    bool any = false;
    for (double w : grads[0].weight.data()) any = any || w != 0.0;
    CHECK(any);
}

TEST_CASE("backward state contract") {
    auto net = make_mlp({2, 2}, Activation::tanh, Activation::identity, 7);
    GradTape tape;
    auto grads = net.zero_gradients();
    CHECK_THROWS_AS(backward(tape, net, Matrix(1, 2), grads), StateError);
    forward(net, Matrix(1, 2), &tape);
    CHECK(tape.ready());
    backward(tape, net, Matrix(1, 2, 1.0), grads);
    CHECK_FALSE(tape.ready());
    CHECK_THROWS_AS(backward(tape, net, Matrix(1, 2, 1.0), grads), StateError);
    // Re-recording after consumption starts a fresh pass.
    forward(net, Matrix(1, 2), &tape);
    CHECK(tape.size() == 2);
    CHECK_NOTHROW(backward(tape, net, Matrix(1, 2, 1.0), grads));
}

TEST_CASE("grad_check: tanh MLP with squared error") {
    auto net = make_mlp({6, 5, 3}, Activation::tanh, Activation::identity, 8);
    const Matrix x = random_matrix(5, 6, 9);
    const Matrix target = random_matrix(5, 3, 10);
    const auto grads = mse_gradients(net, x, target);
    ParamSet* sets[] = {&net};
    const Gradients analytic[] = {grads};
    const auto report = grad_check(sets, analytic, [&] { return mse(forward(net, x), target); }, 1e-4);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked == net.parameter_count());
}

TEST_CASE("grad_check: identity network matches exactly") {
    auto net = make_mlp({3, 2}, Activation::identity, Activation::identity, 11);
    const Matrix x = random_matrix(4, 3, 12);
    const Matrix target = random_matrix(4, 2, 13);
    const auto grads = mse_gradients(net, x, target);
    ParamSet* sets[] = {&net};
    const Gradients analytic[] = {grads};
    const auto report = grad_check(sets, analytic, [&] { return mse(forward(net, x), target); }, 1e-4);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: relu probed away from the kink") {
    auto net = make_mlp({4, 6, 2}, Activation::relu, Activation::identity, 14);
    Matrix x = random_matrix(5, 4, 15);
    // Shift the first-layer pre-activations well away from zero.
    for (std::size_t j = 0; j < 6; ++j) net.layers[0].bias[j] = (j % 2 == 0) ? 3.0 : -3.0;
    const Matrix target = random_matrix(5, 2, 16);
    const auto grads = mse_gradients(net, x, target);
    ParamSet* sets[] = {&net};
    const Gradients analytic[] = {grads};
    const auto report = grad_check(sets, analytic, [&] { return mse(forward(net, x), target); }, 1e-4);
    CHECK(report.passed());
}

TEST_CASE("adam: zero gradient, first step and error naming") {
    auto net = make_mlp({2, 2}, Activation::identity, Activation::identity, 17);
    const auto before = net.layers[0].weight;
    adam_step(net, net.zero_gradients(), {}, 1);
    CHECK(net.layers[0].weight == before);

    auto g = net.zero_gradients();
    g[0].weight(0, 0) = 3.5;
    g[0].weight(1, 1) = -0.02;
    const double w00 = net.layers[0].weight(0, 0), w11 = net.layers[0].weight(1, 1);
    net.reset_moments();
    AdamConfig cfg;
    cfg.lr = 1e-3;
    adam_step(net, g, cfg, 1);
    CHECK(std::abs((w00 - net.layers[0].weight(0, 0)) / cfg.lr - 1.0) < 1e-6);
    CHECK(std::abs((net.layers[0].weight(1, 1) - w11) / cfg.lr - 1.0) < 1e-6);

    g[0].bias[1] = std::numeric_limits<double>::quiet_NaN();
    try {
        adam_step(net, g, cfg, 2);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("net.0.bias") != std::string::npos);
    }
    CHECK_THROWS_AS(adam_step(net, net.zero_gradients(), cfg, 0), InvalidArgument);
}

TEST_CASE("adam descends a quadratic bowl") {
    auto net = make_mlp({1, 1}, Activation::identity, Activation::identity, 18);
    net.layers[0].weight(0, 0) = 1.0;
    AdamConfig cfg;
    cfg.lr = 0.05;
    for (std::size_t t = 1; t <= 500; ++t) {
        auto g = net.zero_gradients();
        g[0].weight(0, 0) = 2.0 * net.layers[0].weight(0, 0);
        adam_step(net, g, cfg, t);
    }
    CHECK(std::abs(net.layers[0].weight(0, 0)) < 1e-3);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [] {
        auto net = make_mlp({4, 8, 2}, Activation::tanh, Activation::identity, 19);
        const Matrix x = random_matrix(6, 4, 20), target = random_matrix(6, 2, 21);
        for (std::size_t t = 1; t <= 50; ++t) adam_step(net, mse_gradients(net, x, target), {}, t);
        return net.layers[1].weight;
    };
    CHECK(run() == run());
}
