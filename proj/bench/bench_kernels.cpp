#include "fedtraffic/learner.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

using namespace fedtraffic;

namespace {

struct Fixture {
    QNetwork net;
    QNetwork target;
    Minibatch batch;
};

Fixture make(std::size_t hidden) {
    Rng rng(11);
    const std::vector<std::size_t> sizes{6, hidden, hidden, 5};
    QNetwork net = QNetwork::glorot(sizes, rng);
    QNetwork target = QNetwork::glorot(sizes, rng);
    ReplayBuffer buf(kMinibatchSize);
    for (std::size_t i = 0; i < kMinibatchSize; ++i) {
        Transition t;
        for (double& x : t.obs) x = rng.uniform(-1, 1);
        for (double& x : t.next_obs) x = rng.uniform(-1, 1);
        t.action_index = rng.index(5);
        t.reward = rng.uniform(-1, 1);
        buf.push(t);
    }
    return {std::move(net), std::move(target), buf.sample(rng)};
}

void BM_GradientSerial(benchmark::State& state) {
    const auto f = make(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(compute_gradient_serial(f.net, f.target, f.batch, 0.99));
}

void BM_GradientParallel(benchmark::State& state) {
    const auto f = make(static_cast<std::size_t>(state.range(0)));
    omp_set_num_threads(static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(compute_gradient(f.net, f.target, f.batch, 0.99));
}

} // namespace

BENCHMARK(BM_GradientSerial)->Arg(16)->Arg(64);
BENCHMARK(BM_GradientParallel)->Args({16, 1})->Args({16, 4})->Args({64, 1})->Args({64, 4});

BENCHMARK_MAIN();
