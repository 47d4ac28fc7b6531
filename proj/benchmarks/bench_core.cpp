#include <benchmark/benchmark.h>

#include <cmath>

#include "bhh/covariance.hpp"
#include "bhh/geometry.hpp"
#include "bhh/hitprob.hpp"
#include "bhh/rng.hpp"
#include "bhh/simulate.hpp"

using namespace bhh;

static void BM_IncrementNormSq(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const SecondOrderEngine eng(EngineConfig{.d = d});
    const SpaceTimePoint p{0.7, {1.0, 2.0, 3.0}};
    const SpaceTimePoint q{0.7001, {1.001, 2.0, 3.0}};
    for (auto _ : state) benchmark::DoNotOptimize(eng.increment_norm_sq(p, q));
}
BENCHMARK(BM_IncrementNormSq)->DenseRange(1, 3)->Unit(benchmark::kMicrosecond);

static void BM_WienerOracle(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const SecondOrderEngine eng(EngineConfig{.d = d});
    const SpaceTimePoint p{0.7, {1.0, 2.0, 3.0}};
    const SpaceTimePoint q{0.9, {2.0, 2.5, 3.5}};
    for (auto _ : state) benchmark::DoNotOptimize(wiener_isometry_oracle(p, q, eng));
}
BENCHMARK(BM_WienerOracle)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);

static void BM_Simulate(benchmark::State& state) {
    const SecondOrderEngine eng(EngineConfig{.d = 1});
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto grid = sim::regular_grid(1, 0.5, 1.0, n, 1.0, 5.0, n);
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(sim::simulate(eng, grid, 4, ++seed).values.data());
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(4 * n * n));
}
BENCHMARK(BM_Simulate)->RangeMultiplier(4)->Range(16, 256)->Unit(benchmark::kMillisecond);

static void BM_CapacityInterval(benchmark::State& state) {
    const auto k = geom::Kernel::riesz(0.5);
    const double side = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(geom::capacity_estimate(geom::TargetSet::box({0.0}, {1.0}), k, side, 2000).capacity);
    }
}
BENCHMARK(BM_CapacityInterval)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_BoxCounting(benchmark::State& state) {
    geom::PointCloud pc{4, {}};
    const CounterRng rng(5);
    const auto n = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < 4 * n; ++i) pc.xs.push_back(rng.normal_at(i));
    for (auto _ : state) benchmark::DoNotOptimize(geom::occupied_boxes(pc, 0.05));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_BoxCounting)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

static void BM_HitReplicates(benchmark::State& state) {
    const SecondOrderEngine eng(EngineConfig{.d = 1});
    hit::HitExperiment e;
    e.D = 4;
    e.target = geom::TargetSet::ball({0.0, 0.0, 0.0, 0.0}, 0.1);
    e.replicates = 100;
    e.dilation = 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(hit::estimate_hit_prob(eng, e).estimate);
    state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_HitReplicates)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
