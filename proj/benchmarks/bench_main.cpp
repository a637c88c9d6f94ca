// Microbenchmarks for the hot paths: projector, FBP, and network layers.
#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "ctdl/network.hpp"
#include "ctdl/phantoms.hpp"
#include "ctdl/projector.hpp"

using namespace ctdl;

namespace {

FanBeamGeometry bench_geometry(int views, int dets, double pitch) {
    FanBeamGeometry g;
    g.n_views = views;
    g.angle_start_rad = 0.0;
    g.angle_extent_rad = 2.0 * M_PI;
    g.n_dets = dets;
    g.det_pitch_mm = pitch;
    g.sod_mm = 1000.0;
    g.sdd_mm = 1500.0;
    return g;
}

void fill_random(std::vector<double>& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : v) x = u(rng);
}

// 64 mm field of view at any resolution; the 100 mm detector covers it.
ImageGrid bench_grid(int n) { return ImageGrid{n, n, 64.0 / double(n)}; }
FanBeamGeometry matched_geometry(int n) { return bench_geometry(2 * n, 2 * n, 100.0 / (2 * n)); }

void bm_forward_project(benchmark::State& state) {
    const int n = int(state.range(0));
    const Image f = shepp_logan(bench_grid(n));
    const FanBeamGeometry g = matched_geometry(n);
    for (auto _ : state) benchmark::DoNotOptimize(forward_project(f, g));
}

void bm_back_project(benchmark::State& state) {
    const int n = int(state.range(0));
    Sinogram s(matched_geometry(n));
    fill_random(s.values, 1);
    for (auto _ : state) benchmark::DoNotOptimize(back_project(s, bench_grid(n)));
}

void bm_fbp(benchmark::State& state) {
    const int n = int(state.range(0));
    const ImageGrid grid = bench_grid(n);
    const Sinogram s = forward_project(shepp_logan(grid), matched_geometry(n));
    for (auto _ : state) benchmark::DoNotOptimize(fbp(s, grid));
}

void bm_ramp_filter(benchmark::State& state) {
    const FanBeamGeometry g = bench_geometry(int(state.range(0)), int(state.range(0)), 0.5);
    Sinogram s(g);
    fill_random(s.values, 2);
    for (auto _ : state) benchmark::DoNotOptimize(ramp_filter(s));
}

Graph bench_net() {
    Graph net = build_backbone<double>(1, 8, 2);
    attach_bridge(net, 1);
    std::mt19937_64 rng(3);
    net.init_weights(rng);
    return net;
}

void bm_unet_forward(benchmark::State& state) {
    const int n = int(state.range(0));
    Graph net = bench_net();
    Tensor x(1, 1, n, n);
    fill_random(x.v, 4);
    for (auto _ : state) {
        ForwardCache cache;
        benchmark::DoNotOptimize(forward(net, x, RunMode::Eval, cache));
    }
}

void bm_unet_backward(benchmark::State& state) {
    const int n = int(state.range(0));
    Graph net = bench_net();
    Tensor x(1, 1, n, n);
    fill_random(x.v, 6);
    for (auto _ : state) {
        ForwardCache cache;
        std::vector<Tensor> out = forward(net, x, RunMode::Train, cache);
        for (auto& t : out)
            for (auto& v : t.v) v = 1.0;
        net.zero_grads();
        benchmark::DoNotOptimize(backward(net, cache, out, RunMode::Train));
    }
}

BENCHMARK(bm_forward_project)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_back_project)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_fbp)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_ramp_filter)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_unet_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_unet_backward)->Arg(64)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
