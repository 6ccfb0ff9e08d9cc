// Throughput comparison of the serial reference kernels against the
// OpenMP-parallel versions. Run with --benchmark_filter=... to narrow.

#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "fan/kernels.h"
#include "fan/rng.h"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    fan::Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

void bench_matmul_serial(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::vector<float> a = random_vec(n * n, 1);
    const std::vector<float> b = random_vec(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        fan::kernels::serial::matmul_nn(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}

void bench_matmul_parallel(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::vector<float> a = random_vec(n * n, 1);
    const std::vector<float> b = random_vec(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        fan::kernels::matmul_nn(a.data(), b.data(), c.data(), n, n, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n * n);
}

void bench_conv2d_serial(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    fan::kernels::Conv2dShape s{4, 8, hw, hw, 16, 3, 2, 1};
    const std::vector<float> in = random_vec(s.batch * s.in_channels * hw * hw, 3);
    const std::vector<float> w =
        random_vec(s.out_channels * s.in_channels * s.kernel * s.kernel, 4);
    const std::vector<float> bias = random_vec(s.out_channels, 5);
    std::vector<float> out(s.batch * s.out_channels * s.out_h() * s.out_w());
    for (auto _ : state) {
        fan::kernels::serial::conv2d_forward(s, in.data(), w.data(), bias.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

void bench_conv2d_parallel(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    fan::kernels::Conv2dShape s{4, 8, hw, hw, 16, 3, 2, 1};
    const std::vector<float> in = random_vec(s.batch * s.in_channels * hw * hw, 3);
    const std::vector<float> w =
        random_vec(s.out_channels * s.in_channels * s.kernel * s.kernel, 4);
    const std::vector<float> bias = random_vec(s.out_channels, 5);
    std::vector<float> out(s.batch * s.out_channels * s.out_h() * s.out_w());
    for (auto _ : state) {
        fan::kernels::conv2d_forward(s, in.data(), w.data(), bias.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

void bench_conv2d_backward_weights_serial(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    fan::kernels::Conv2dShape s{4, 8, hw, hw, 16, 3, 2, 1};
    const std::vector<float> in = random_vec(s.batch * s.in_channels * hw * hw, 3);
    const std::vector<float> gout =
        random_vec(s.batch * s.out_channels * s.out_h() * s.out_w(), 6);
    std::vector<float> gw(s.out_channels * s.in_channels * s.kernel * s.kernel);
    std::vector<float> gb(s.out_channels);
    for (auto _ : state) {
        fan::kernels::serial::conv2d_backward_weights(s, in.data(), gout.data(), gw.data(),
                                                      gb.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

void bench_conv2d_backward_weights_parallel(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    fan::kernels::Conv2dShape s{4, 8, hw, hw, 16, 3, 2, 1};
    const std::vector<float> in = random_vec(s.batch * s.in_channels * hw * hw, 3);
    const std::vector<float> gout =
        random_vec(s.batch * s.out_channels * s.out_h() * s.out_w(), 6);
    std::vector<float> gw(s.out_channels * s.in_channels * s.kernel * s.kernel);
    std::vector<float> gb(s.out_channels);
    for (auto _ : state) {
        fan::kernels::conv2d_backward_weights(s, in.data(), gout.data(), gw.data(), gb.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

void bench_lk_flow_serial(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    const std::vector<float> prev = random_vec(hw * hw, 7);
    const std::vector<float> cur = random_vec(hw * hw, 8);
    std::vector<float> u(hw * hw), v(hw * hw);
    for (auto _ : state) {
        fan::kernels::serial::lk_flow_field(prev.data(), cur.data(), hw, hw,
                                            std::size_t{5}, 1e-4f, u.data(), v.data());
        benchmark::DoNotOptimize(u.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * hw * hw);
}

void bench_lk_flow_parallel(benchmark::State& state) {
    const std::size_t hw = static_cast<std::size_t>(state.range(0));
    const std::vector<float> prev = random_vec(hw * hw, 7);
    const std::vector<float> cur = random_vec(hw * hw, 8);
    std::vector<float> u(hw * hw), v(hw * hw);
    for (auto _ : state) {
        fan::kernels::lk_flow_field(prev.data(), cur.data(), hw, hw, std::size_t{5}, 1e-4f,
                                    u.data(), v.data());
        benchmark::DoNotOptimize(u.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * hw * hw);
}

}  // namespace

BENCHMARK(bench_matmul_serial)->Arg(64)->Arg(256);
BENCHMARK(bench_matmul_parallel)->Arg(64)->Arg(256);
BENCHMARK(bench_conv2d_serial)->Arg(32)->Arg(96);
BENCHMARK(bench_conv2d_parallel)->Arg(32)->Arg(96);
BENCHMARK(bench_conv2d_backward_weights_serial)->Arg(32)->Arg(96);
BENCHMARK(bench_conv2d_backward_weights_parallel)->Arg(32)->Arg(96);
BENCHMARK(bench_lk_flow_serial)->Arg(64)->Arg(224);
BENCHMARK(bench_lk_flow_parallel)->Arg(64)->Arg(224);

BENCHMARK_MAIN();
