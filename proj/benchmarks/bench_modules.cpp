#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "dmsnet/casfm.hpp"
#include "dmsnet/model.hpp"
#include "dmsnet/osim.hpp"
#include "dmsnet/synergy.hpp"

using namespace dmsnet;

namespace {

// Backbone-sized map: (B, 2048, 7, 7) for a 224 px input.
void BM_OsimForward(benchmark::State& state) {
    torch::NoGradGuard g;
    const auto c = state.range(0);
    Osim m(c);
    m->eval();
    auto x = torch::randn({2, c, 7, 7});
    for (auto _ : state) benchmark::DoNotOptimize(m->forward(x));
}
BENCHMARK(BM_OsimForward)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_SppBranch(benchmark::State& state) {
    torch::NoGradGuard g;
    auto x = torch::randn({2, 1024, 7, 7});
    for (auto _ : state) benchmark::DoNotOptimize(spp_branch(x, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_SppBranch)->Arg(2)->Arg(4);

void BM_CasfmForward(benchmark::State& state) {
    torch::NoGradGuard g;
    const auto e = state.range(0);
    Casfm m(CasfmOptions{1024, e, 4, 2, true});
    m->eval();
    auto l = torch::randn({2, 1024, 7, 7}), r = torch::randn({2, 1024, 7, 7});
    for (auto _ : state) benchmark::DoNotOptimize(m->forward(l, r).fused);
}
BENCHMARK(BM_CasfmForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_CcamCiamForward(benchmark::State& state) {
    torch::NoGradGuard g;
    SynergyOptions o{256, 4, 32, true};
    Ccam ccam(o);
    Ciam ciam(o);
    ccam->eval();
    ciam->eval();
    auto l = torch::randn({2, 256, 3, 3}), r = torch::randn({2, 256, 3, 3});
    for (auto _ : state) {
        benchmark::DoNotOptimize(ccam->forward(l, r));
        benchmark::DoNotOptimize(ciam->forward(l, r));
    }
}
BENCHMARK(BM_CcamCiamForward)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
    torch::NoGradGuard g;
    ModelConfig cfg;
    cfg.backbone_name = "resnet50";
    cfg.input_resolution = static_cast<int>(state.range(0));
    auto m = build_model(cfg);
    m->eval();
    auto l = torch::randn({1, 3, cfg.input_resolution, cfg.input_resolution});
    auto r = torch::randn({1, 3, cfg.input_resolution, cfg.input_resolution});
    for (auto _ : state) benchmark::DoNotOptimize(m->forward(l, r));
}
BENCHMARK(BM_ModelForward)->Arg(112)->Arg(224)->Unit(benchmark::kMillisecond);

}  // namespace
