#include <benchmark/benchmark.h>

#include <vector>

#include "cardiosep/dsp.hpp"
#include "cardiosep/latent.hpp"
#include "cardiosep/random.hpp"
#include "cardiosep/vae.hpp"

using namespace cardiosep;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    return x;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

void BM_Stft(benchmark::State& state) {
    const auto x = noise(static_cast<std::size_t>(state.range(0)) * 4000, 1);
    for (auto _ : state) benchmark::DoNotOptimize(dsp::stft(x, 4000.0));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_Stft)->Arg(2)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_StftRoundTrip(benchmark::State& state) {
    const auto x = noise(8000, 2);
    for (auto _ : state) benchmark::DoNotOptimize(dsp::istft(dsp::stft(x, 4000.0)));
}
BENCHMARK(BM_StftRoundTrip)->Unit(benchmark::kMicrosecond);

// One Adam-sized unit of work: loss and gradients for a default minibatch.
void BM_VaeBatchGradients(benchmark::State& state) {
    Rng rng(3);
    const auto model = vae::VaeModel::create({}, 1.0, rng);
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Matrix x = random_matrix(batch, 129, 4), eps = random_matrix(batch, 8, 5);
    for (auto _ : state) benchmark::DoNotOptimize(vae::loss_and_gradients(model, x, eps));
}
BENCHMARK(BM_VaeBatchGradients)->Arg(1)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_Tsne(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    latent::LatentCloud cloud{random_matrix(n, 8, 6), 0, {}};
    for (std::size_t i = 0; i < n; ++i) cloud.frame_indices.push_back(i);
    latent::TsneConfig cfg;
    cfg.perplexity = 30.0;
    for (auto _ : state) benchmark::DoNotOptimize(latent::tsne(cloud, cfg));
}
BENCHMARK(BM_Tsne)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Kmeans(benchmark::State& state) {
    const auto points = random_matrix(static_cast<std::size_t>(state.range(0)), 8, 7);
    for (auto _ : state) benchmark::DoNotOptimize(latent::kmeans(points, 2, 10, 8));
}
BENCHMARK(BM_Kmeans)->Arg(3747)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
