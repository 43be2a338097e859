#include <benchmark/benchmark.h>

#include <random>

#include "lienet/dsconv.hpp"
#include "lienet/loss.hpp"
#include "lienet/network.hpp"

using namespace lienet;

namespace {

Tensor<float> noise(int h, int w, std::uint64_t seed) {
    Tensor<float> t({1, 3, h, w});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : t.data()) v = u(rng);
    return t;
}

void BM_AggregateShifts(benchmark::State& state) {
    const auto x = noise(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(aggregate_shifts(x, 2));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_AggregateShifts)->Arg(96)->Arg(180)->Arg(400);

void BM_DSConvForward(benchmark::State& state) {
    const auto x = noise(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2);
    const auto p = init_params<float>(3, 1, Variant::plain, 3);
    for (auto _ : state) benchmark::DoNotOptimize(dsconv_forward(x, p));
}
BENCHMARK(BM_DSConvForward)->Arg(96)->Arg(180)->Arg(400);

void BM_NetForward(benchmark::State& state) {
    const auto x = noise(400, 600, 4);
    const auto net = Network<float>::initialize(NetworkConfig{}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(net_forward(x, net));
}
BENCHMARK(BM_NetForward)->Unit(benchmark::kMillisecond);

void BM_TotalLossWithGradient(benchmark::State& state) {
    const auto g = noise(180, 180, 6);
    const auto net = Network<float>::initialize(NetworkConfig{}, 7);
    const auto outs = net_forward(noise(180, 180, 8), net);
    for (auto _ : state) benchmark::DoNotOptimize(total_loss<float>(outs, g, LossWeights{}));
}
BENCHMARK(BM_TotalLossWithGradient)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();
