#include <benchmark/benchmark.h>

#include <random>

#include "crplus/conditional.hpp"
#include "crplus/engine.hpp"
#include "crplus/pmf.hpp"

using namespace crplus;

namespace {

Pmf smooth_pmf(std::size_t limit, double decay) {
    std::vector<double> v(limit + 1);
    double s = 0.0;
    for (std::size_t i = 0; i <= limit; ++i) s += v[i] = std::exp(-decay * static_cast<double>(i));
    for (double& x : v) x /= s;
    return Pmf(std::move(v));
}

Portfolio synthetic(std::size_t obligors, std::size_t sectors, Loss max_severity) {
    std::mt19937_64 rng(1000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<Loss> loss(1, max_severity);
    std::uniform_int_distribution<std::size_t> pick(1, sectors);
    Portfolio p;
    for (std::size_t k = 0; k < sectors; ++k) p.sectors.push_back({"s" + std::to_string(k), 0.5 + 2.5 * u(rng)});
    for (std::size_t a = 0; a < obligors; ++a) {
        Obligor o{"O" + std::to_string(a), 0.04 * u(rng), std::vector<double>(sectors + 1, 0.0),
                  SeverityDist::deterministic(loss(rng))};
        o.weights[0] = 0.3;
        o.weights[pick(rng)] += 0.7;
        p.obligors.push_back(std::move(o));
    }
    return p;
}

void BM_Convolve(benchmark::State& state) {
    const auto limit = static_cast<std::size_t>(state.range(0));
    const Pmf a = smooth_pmf(limit, 1e-3), b = smooth_pmf(limit, 2e-3);
    for (auto _ : state) benchmark::DoNotOptimize(convolve(a, b));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Convolve)->RangeMultiplier(4)->Range(1 << 10, 1 << 14)->Complexity(benchmark::oNSquared);

void BM_CompoundNegbin(benchmark::State& state) {
    const auto limit = static_cast<std::size_t>(state.range(0));
    const Pmf severity = smooth_pmf(200, 0.02);
    for (auto _ : state) benchmark::DoNotOptimize(compound_negbin(1.3, 0.9, severity, limit));
}
BENCHMARK(BM_CompoundNegbin)->RangeMultiplier(4)->Range(1 << 10, 1 << 16);

void BM_NegbinIncrement(benchmark::State& state) {
    const auto limit = static_cast<std::size_t>(state.range(0));
    const Pmf severity = smooth_pmf(200, 0.02);
    const Pmf base = compound_negbin(1.3, 0.9, severity, limit);
    for (auto _ : state) benchmark::DoNotOptimize(negbin_exponent_increment(base, 0.9, severity));
}
BENCHMARK(BM_NegbinIncrement)->RangeMultiplier(4)->Range(1 << 10, 1 << 16);

// Full pipeline: sector pmfs, base convolution and the two-default mixture.
void BM_TwoDefaultScenario(benchmark::State& state) {
    const auto p = synthetic(1000, 10, 200);
    const auto limit = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        const LossEngine engine(assemble(p, limit));
        benchmark::DoNotOptimize(loss_given_two_defaults(engine, p, "O17", "O523"));
    }
}
BENCHMARK(BM_TwoDefaultScenario)->Arg(10'000)->Arg(50'000)->Iterations(2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
