#include <benchmark/benchmark.h>

#include "m2gan/data.hpp"
#include "m2gan/metrics.hpp"

using namespace m2gan;

namespace {

Tensor random_image(Rng& rng, int h, int w) {
    Tensor t({h, w, 3});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
}

void BM_Psnr(benchmark::State& state) {
    Rng rng(3);
    const int side = static_cast<int>(state.range(0));
    const Tensor a = random_image(rng, side, side);
    const Tensor b = random_image(rng, side, side);
    for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}
BENCHMARK(BM_Psnr)->RangeMultiplier(2)->Range(32, 256);

void BM_Ssim(benchmark::State& state) {
    Rng rng(3);
    const int side = static_cast<int>(state.range(0));
    const Tensor a = random_image(rng, side, side);
    const Tensor b = random_image(rng, side, side);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->RangeMultiplier(2)->Range(32, 128);

void BM_EmbedAndFid(benchmark::State& state) {
    Rng rng(3);
    const int n = static_cast<int>(state.range(0));
    Embedder embedder;
    std::vector<Tensor> set_a, set_b;
    for (int i = 0; i < n; ++i) {
        set_a.push_back(random_image(rng, 32, 32));
        set_b.push_back(random_image(rng, 32, 32));
    }
    for (auto _ : state) {
        const FeatureStats sa = feature_stats(set_a, embedder);
        const FeatureStats sb = feature_stats(set_b, embedder);
        benchmark::DoNotOptimize(fid(sa, sb));
    }
}
BENCHMARK(BM_EmbedAndFid)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RainSynthesis(benchmark::State& state) {
    Rng rng(3);
    const int side = static_cast<int>(state.range(0));
    const Tensor clean = random_image(rng, side, side);
    RainSynthesisConfig cfg;
    cfg.seed = 11;
    for (auto _ : state) {
        Tensor rain = synthesize_raindrops(clean, cfg);
        benchmark::DoNotOptimize(rain.data());
    }
}
BENCHMARK(BM_RainSynthesis)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
