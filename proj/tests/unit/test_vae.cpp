#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "cardiosep/error.hpp"
#include "cardiosep/vae.hpp"
#include "fixtures.hpp"

using namespace cardiosep;
using namespace cardiosep::vae;

namespace {

VaeModel small_model(std::uint64_t seed, double beta = 1.0) {
    Architecture arch;
    arch.input_dim = 7;
    arch.latent_dim = 3;
    arch.hidden = {5, 4};
    Rng rng(seed);
    return VaeModel::create(arch, beta, rng);
}

void zero_weights(nn::ParamSet& p) {
    for (auto& l : p.layers) {
        l.weight.fill(0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

std::vector<dsp::FeatureFrame> random_frames(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<dsp::FeatureFrame> frames(n);
    for (std::size_t i = 0; i < n; ++i) {
        frames[i].values.resize(dim);
        for (double& v : frames[i].values) v = rng.normal();
        frames[i].frame_index = i;
    }
    return frames;
}

}  // namespace

TEST_CASE("encode and decode shapes for the default architecture") {
    Rng rng(1);
    const auto model = VaeModel::create({}, 1.0, rng);
    CHECK(model.encoder.input_dim() == 129);
    CHECK(model.encoder.output_dim() == 16);
    CHECK(model.decoder.input_dim() == 8);
    CHECK(model.decoder.output_dim() == 129);
    const std::vector<double> x(129, 0.1);
    const auto post = encode(model, x);
    CHECK(post.mu.size() == 8);
    CHECK(post.logvar.size() == 8);
    CHECK(decode(model, post.mu).size() == 129);
    CHECK_THROWS_AS(encode(model, std::vector<double>(128)), InvalidArgument);
    CHECK_THROWS_AS(decode(model, std::vector<double>(7)), InvalidArgument);
    CHECK_NOTHROW(model.validate());
}

TEST_CASE("zero encoder gives the prior; logvar is clamped") {
    auto model = small_model(2);
    zero_weights(model.encoder);
    const std::vector<double> x(7, 0.3);
    auto post = encode(model, x);
    for (double v : post.mu) CHECK(v == 0.0);
    for (double v : post.logvar) CHECK(v == 0.0);

    auto& last = model.encoder.layers.back();
    for (std::size_t j = 3; j < 6; ++j) last.bias[j] = 50.0;
    last.bias[4] = -50.0;
    post = encode(model, x);
    CHECK(post.logvar[0] == kLogvarMax);
    CHECK(post.logvar[1] == kLogvarMin);
}

TEST_CASE("zero decoder returns its output bias") {
    auto model = small_model(3);
    zero_weights(model.decoder);
    auto& bias = model.decoder.layers.back().bias;
    for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = 0.1 * static_cast<double>(j);
    for (std::uint64_t s = 0; s < 3; ++s) {
        Rng rng(s);
        const std::vector<double> z{rng.normal(), rng.normal(), rng.normal()};
        CHECK(decode(model, z) == bias);
    }
}

TEST_CASE("reparameterize: trivial cases and affinity in eps") {
    GaussianPosterior post{{0.5, -1.0, 2.0}, {0.2, -0.3, 1.0}};
    const std::vector<double> zero(3, 0.0);
    CHECK(reparameterize(post, zero).z == post.mu);
    GaussianPosterior prior{{0.0, 0.0}, {0.0, 0.0}};
    const std::vector<double> eps{0.7, -1.2};
    CHECK(reparameterize(prior, eps).z == eps);
    CHECK_THROWS_AS(reparameterize(post, eps), InvalidArgument);

    const std::vector<double> e1{0.3, -0.4, 1.1}, e2{-2.0, 0.5, 0.25};
    const double a = 1.7, b = -0.6;
    std::vector<double> combo(3);
    for (std::size_t i = 0; i < 3; ++i) combo[i] = a * e1[i] + b * e2[i];
    const auto z = reparameterize(post, combo).z;
    const auto z1 = reparameterize(post, e1).z, z2 = reparameterize(post, e2).z;
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(z[i] - (a * z1[i] + b * z2[i] - (a + b - 1.0) * post.mu[i])) < 1e-12);
}

TEST_CASE("reparameterize: Monte-Carlo moments") {
    GaussianPosterior post{{2.0}, {std::log(4.0)}};
    Rng rng(4);
    constexpr std::size_t n = 100000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> eps{rng.normal()};
        const double z = reparameterize(post, eps).z[0];
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    const double bound = 3.0 * 2.0 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - 2.0) < bound);
    CHECK(std::abs(sd - 2.0) < bound);
}

TEST_CASE("kl_divergence closed form and Monte-Carlo agreement") {
    CHECK(kl_divergence({{0.0, 0.0}, {0.0, 0.0}}) == 0.0);
    CHECK(kl_divergence({{1.0}, {0.0}}) == doctest::Approx(0.5).epsilon(1e-15));
    const GaussianPosterior post{{0.0}, {std::log(4.0)}};
    const double closed = kl_divergence(post);
    CHECK(closed == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-14));
    CHECK(closed == doctest::Approx(0.80685).epsilon(1e-5));

    // E_q[log q(z) - log p(z)], z ~ q.
    Rng rng(5);
    constexpr std::size_t n = 1000000;
    double acc = 0.0;
    const double sd = 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double eps = rng.normal();
        const double z = sd * eps;
        acc += (-0.5 * eps * eps - std::log(sd)) - (-0.5 * z * z);
    }
    CHECK(std::abs(acc / n - closed) / closed < 0.01);
}

TEST_CASE("kl_divergence is non-negative and zero only at the prior") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        GaussianPosterior post{std::vector<double>(4), std::vector<double>(4)};
        for (std::size_t i = 0; i < 4; ++i) {
            post.mu[i] = rng.normal(0.0, 0.1);
            post.logvar[i] = rng.uniform(-2.0, 2.0);
        }
        REQUIRE(kl_divergence(post) > 0.0);
    }
}

TEST_CASE("loss decomposition") {
    auto model = small_model(7, 0.35);
    const std::vector<double> x{0.1, -0.2, 0.3, 0.0, 1.5, -0.7, 0.4};
    const std::vector<double> eps{0.2, -0.1, 0.9};
    const auto l = loss(model, x, eps);
    CHECK(std::abs(l.total - (l.recon + 0.35 * l.kl)) <= 1e-12);
    CHECK(l.kl >= 0.0);

    model.beta = 0.0;
    const auto plain = loss(model, x, eps);
    CHECK(plain.total == plain.recon);

    // Perfect reconstruction through a zero network whose decoder bias is x.
    zero_weights(model.encoder);
    zero_weights(model.decoder);
    model.decoder.layers.back().bias = x;
    model.beta = 1.0;
    const auto perfect = loss(model, x, eps);
    CHECK(perfect.total == 0.0);
}

TEST_CASE("batch gradients match finite differences") {
    auto model = small_model(8, 0.8);
    const Matrix x = random_matrix(5, 7, 9);
    const Matrix eps = random_matrix(5, 3, 10);
    const auto grads = loss_and_gradients(model, x, eps);
    CHECK(grads.loss.total == doctest::Approx(evaluate_loss(model, x, eps).total).epsilon(1e-14));
    nn::ParamSet* sets[] = {&model.encoder, &model.decoder};
    const nn::Gradients analytic[] = {grads.encoder, grads.decoder};
    const auto report =
        nn::grad_check(sets, analytic, [&] { return evaluate_loss(model, x, eps).total; }, 1e-4);
    CHECK_MESSAGE(report.passed(), report.worst_parameter << " rel " << report.max_rel_error);
}

TEST_CASE("clamped logvar passes no gradient") {
    auto model = small_model(11);
    auto& last = model.encoder.layers.back();
    for (std::size_t j = 3; j < 6; ++j) last.bias[j] = 40.0;
    const Matrix x = random_matrix(2, 7, 12), eps = random_matrix(2, 3, 13);
    const auto grads = loss_and_gradients(model, x, eps);
    for (std::size_t j = 3; j < 6; ++j) CHECK(grads.encoder.back().bias[j] == 0.0);
}

TEST_CASE("lr schedules") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    CHECK(scheduled_lr(cfg, 1, 100) == doctest::Approx(0.01));
    CHECK(scheduled_lr(cfg, 51, 100) == doctest::Approx(0.005));
    CHECK(scheduled_lr(cfg, 100, 100) < 0.01 * 1e-3);
    cfg.schedule = LrSchedule::constant;
    CHECK(scheduled_lr(cfg, 77, 100) == 0.01);
    CHECK(lr_schedule_from_string("cosine") == LrSchedule::cosine);
    CHECK(std::string(to_string(LrSchedule::constant)) == "constant");
    CHECK_THROWS_AS(lr_schedule_from_string("step"), InvalidArgument);
}

TEST_CASE("train: overfitting one frame") {
    Rng rng(14);
    auto model = VaeModel::create({}, 1.0, rng);
    const auto frames = random_frames(1, 129, 15);
    TrainConfig cfg;
    cfg.epochs = 2000;
    cfg.batch_size = 1;
    cfg.snapshot_stride = 1000;
    cfg.schedule = LrSchedule::constant;
    const auto result = train(model, frames, cfg, rng);
    CHECK(result.steps == 2000);
    const auto x_hat = decode(model, encode(model, frames[0].values).mu);
    double mse = 0.0;
    for (std::size_t i = 0; i < 129; ++i) mse += (x_hat[i] - frames[0].values[i]) * (x_hat[i] - frames[0].values[i]);
    CHECK(mse / 129.0 < 1e-2);
}

TEST_CASE("train: determinism, history and snapshots") {
    const auto frames = random_frames(100, 7, 16);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    cfg.snapshot_stride = 5;
    auto run = [&] {
        auto model = small_model(17);
        Rng rng(18);
        return std::pair{train(model, frames, cfg, rng), model};
    };
    const auto [a, model_a] = run();
    const auto [b, model_b] = run();
    REQUIRE(a.history.size() == 12);
    for (std::size_t e = 0; e < 12; ++e) {
        REQUIRE(a.history[e].total == b.history[e].total);
        REQUIRE(a.batch_history[e].total == b.batch_history[e].total);
    }
    CHECK(model_a.decoder.layers[0].weight == model_b.decoder.layers[0].weight);
    CHECK(a.steps == 12 * 7);  // ceil(100 / 16) batches per epoch

    std::vector<std::size_t> epochs;
    for (const auto& s : a.snapshots) {
        epochs.push_back(s.epoch);
        CHECK(s.means.rows() == 100);
        CHECK(s.means.cols() == 3);
    }
    CHECK(epochs == std::vector<std::size_t>{1, 5, 10, 12});
    CHECK(a.snapshots.back().means == posterior_means(model_a, frames));
    CHECK(a.history.back().total < a.history.front().total);
}

TEST_CASE("train: preconditions and divergence context") {
    auto model = small_model(19);
    Rng rng(20);
    TrainConfig cfg;
    cfg.batch_size = 64;
    const auto few = random_frames(10, 7, 21);
    CHECK_THROWS_AS(train(model, few, cfg, rng), InvalidArgument);

    auto huge = random_frames(20, 7, 22);
    huge[3].values[0] = 1e300;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    try {
        train(model, huge, cfg, rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}
