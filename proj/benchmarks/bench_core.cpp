#include <benchmark/benchmark.h>

#include "mlfm/experiment.hpp"

using namespace mlfm;

namespace {

ReplicationData instance(double T) {
    static const ExperimentConfig cfg;
    return simulate_replication(cfg, T, 0.5, 0);
}

}  // namespace

static void BM_PicardOperator(benchmark::State& state) {
    const ReplicationData data = instance(static_cast<double>(state.range(0)));
    const QuadratureRule rule = build_rule(data.grid);
    const ForceRealisation g(Matrix(data.trajectory.true_g.transpose()));
    const StructureBasis basis = kubo_structure_basis();
    for (auto _ : state) benchmark::DoNotOptimize(picard_operator(basis, data.grid, rule, g));
}
BENCHMARK(BM_PicardOperator)->Arg(3)->Arg(9);

static void BM_LikelihoodWithGradient(benchmark::State& state) {
    const ReplicationData data = instance(static_cast<double>(state.range(0)));
    const MlfmModel model = kubo_model(data.grid, static_cast<int>(state.range(1)), 1e-4);
    const Vector x = data.trajectory.stacked_states();
    const ForceRealisation g(Matrix(data.trajectory.true_g.transpose()));
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_likelihood(model, x, g, true));
}
BENCHMARK(BM_LikelihoodWithGradient)->Args({3, 3})->Args({3, 10})->Args({9, 10})->Unit(benchmark::kMicrosecond);

static void BM_Wasserstein(benchmark::State& state) {
    const ReplicationData data = instance(static_cast<double>(state.range(0)));
    GaussianDist other = data.truth;
    other.mean.array() += 0.1;
    other.cov *= 1.5;
    for (auto _ : state) benchmark::DoNotOptimize(wasserstein2(data.truth, other));
}
BENCHMARK(BM_Wasserstein)->Arg(3)->Arg(9);

static void BM_FitKubo(benchmark::State& state) {
    const ExperimentConfig cfg;
    const ReplicationData data = instance(3.0);
    for (auto _ : state) benchmark::DoNotOptimize(fit_kubo(data.trajectory, data.grid, static_cast<int>(state.range(0)), cfg, 1));
}
BENCHMARK(BM_FitKubo)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
