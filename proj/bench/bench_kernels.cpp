// Serial reference kernels against their OpenMP counterparts, plus batch
// scoring of the full model. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "htd/hybridnet.hpp"
#include "htd/kernels.hpp"
#include "htd/rng.hpp"

using namespace htd;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.uniform(-1.0, 1.0);
    return v;
}

template <auto Kernel>
void bm_matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(n * n, 1);
    const auto b = random_vector(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Kernel(a, b, c, n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

kernels::ConvShape conv_shape(benchmark::State& state)
{
    return {static_cast<std::size_t>(state.range(0)), 64, 32, 5};
}

template <auto Kernel>
void bm_conv_forward(benchmark::State& state)
{
    const auto s = conv_shape(state);
    const auto input = random_vector(s.length * s.channels, 3);
    const auto kernels = random_vector(s.filters * s.width * s.channels, 4);
    const auto bias = random_vector(s.filters, 5);
    std::vector<double> out(s.out_length() * s.filters);
    for (auto _ : state) {
        Kernel(input, kernels, bias, out, s);
        benchmark::DoNotOptimize(out.data());
    }
}

template <auto Kernel>
void bm_conv_backward_params(benchmark::State& state)
{
    const auto s = conv_shape(state);
    const auto input = random_vector(s.length * s.channels, 6);
    const auto dout = random_vector(s.out_length() * s.filters, 7);
    std::vector<double> dk(s.filters * s.width * s.channels), db(s.filters);
    for (auto _ : state) {
        Kernel(input, dout, dk, db, s);
        benchmark::DoNotOptimize(dk.data());
    }
}

void bm_score_all(benchmark::State& state)
{
    net::ModelConfig c;
    c.vocab_size = 2000;
    c.seq_len = static_cast<std::size_t>(state.range(0));
    const auto params = net::init_params(c);
    SplitMix64 rng(8);
    std::vector<net::ModelInput> inputs(64);
    for (auto& in : inputs) {
        in.sequence.true_length = c.seq_len;
        in.sequence.ids.resize(c.seq_len);
        for (auto& id : in.sequence.ids)
            id = static_cast<text::TokenId>(2 + rng.below(c.vocab_size - 2));
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(net::score_all(params, c, inputs));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * inputs.size()));
}

} // namespace

BENCHMARK(bm_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::serial::matmul_bt>)->Name("matmul_bt/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<kernels::parallel::matmul_bt>)->Name("matmul_bt/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_conv_forward<kernels::serial::conv1d_forward>)->Name("conv1d_forward/serial")->Arg(256)->Arg(1024);
BENCHMARK(bm_conv_forward<kernels::parallel::conv1d_forward>)->Name("conv1d_forward/parallel")->Arg(256)->Arg(1024);
BENCHMARK(bm_conv_backward_params<kernels::serial::conv1d_backward_params>)
    ->Name("conv1d_backward_params/serial")
    ->Arg(256)
    ->Arg(1024);
BENCHMARK(bm_conv_backward_params<kernels::parallel::conv1d_backward_params>)
    ->Name("conv1d_backward_params/parallel")
    ->Arg(256)
    ->Arg(1024);
BENCHMARK(bm_score_all)->Name("score_all/64_texts")->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
