// Serial reference vs OpenMP batch kernels.

#include "bfgpu/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace bfgpu;

namespace {

struct Batch {
    model::Classifier c;
    FeatureMatrix rows;
    std::vector<double> coeff;
};

Batch make_batch(std::size_t n, std::size_t dim = 16, std::size_t hidden = 32)
{
    Batch b{model::Classifier(dim, hidden, 1), FeatureMatrix(0, dim), {}};
    std::mt19937_64 rng(n);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& p : b.c.parameters()) p = 0.3 * g(rng);
    std::vector<double> row(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : row) v = g(rng);
        b.rows.append_row(row);
        b.coeff.push_back(g(rng));
    }
    return b;
}

void BM_PredictSerial(benchmark::State& state)
{
    const Batch b = make_batch(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::predict(b.c, b.rows));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictParallel(benchmark::State& state)
{
    const Batch b = make_batch(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::parallel::predict(b.c, b.rows));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradientSerial(benchmark::State& state)
{
    const Batch b = make_batch(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::score_gradient(b.c, b.rows, b.coeff));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradientParallel(benchmark::State& state)
{
    const Batch b = make_batch(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::parallel::score_gradient(b.c, b.rows, b.coeff));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_PredictSerial)->RangeMultiplier(8)->Range(64, 1 << 15);
BENCHMARK(BM_PredictParallel)->RangeMultiplier(8)->Range(64, 1 << 15);
BENCHMARK(BM_GradientSerial)->RangeMultiplier(8)->Range(64, 1 << 15);
BENCHMARK(BM_GradientParallel)->RangeMultiplier(8)->Range(64, 1 << 15);

BENCHMARK_MAIN();
