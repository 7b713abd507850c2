#include <benchmark/benchmark.h>

#include "m2gan/blocks.hpp"
#include "m2gan/conditioning.hpp"
#include "m2gan/generator.hpp"

using namespace m2gan;

namespace {

Var random_map(Rng& rng, int h, int w, int c) {
    Tensor t({h, w, c});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return Var::leaf(std::move(t));
}

void BM_RdbForward(benchmark::State& state) {
    Rng rng(1);
    const int side = static_cast<int>(state.range(0));
    ResidualDenseBlock block(16, RdbConfig{}, rng);
    const Var x = random_map(rng, side, side, 16);
    for (auto _ : state) {
        Var y = block.forward(x);
        benchmark::DoNotOptimize(y.value().data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RdbForward)->RangeMultiplier(2)->Range(8, 32)->Complexity();

void BM_UrdbForward(benchmark::State& state) {
    Rng rng(1);
    const int side = static_cast<int>(state.range(0));
    Urdb block(16, 16, UrdbConfig{}, rng);
    const Var x = random_map(rng, side, side, 16);
    for (auto _ : state) {
        Var y = block.forward(x);
        benchmark::DoNotOptimize(y.value().data());
    }
}
BENCHMARK(BM_UrdbForward)->RangeMultiplier(2)->Range(16, 32);

void BM_ConvLstmStep(benchmark::State& state) {
    Rng rng(1);
    const int side = static_cast<int>(state.range(0));
    ConvLstmCell cell(9, 16, 3, rng);
    const Var x = random_map(rng, side, side, 9);
    const ConvLstmState s0 = cell.initial_state(side, side);
    for (auto _ : state) {
        auto [h, s1] = cell.step(x, s0);
        benchmark::DoNotOptimize(h.value().data());
    }
}
BENCHMARK(BM_ConvLstmStep)->RangeMultiplier(2)->Range(8, 32);

void BM_StageForward(benchmark::State& state) {
    Rng rng(1);
    const int side = static_cast<int>(state.range(0));
    PipelineConfig cfg;
    cfg.num_stages = 1;
    ToySegmenter segmenter(5, 7);
    MultiStagePipeline pipeline(cfg, 5, rng);
    Tensor rain({side, side, 3});
    for (std::int64_t i = 0; i < rain.size(); ++i) rain[i] = rng.uniform();
    for (auto _ : state) {
        Tensor out = pipeline.derain(rain, segmenter);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_StageForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
