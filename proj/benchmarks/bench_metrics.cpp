#include <random>

#include <benchmark/benchmark.h>

#include "dmsnet/metrics.hpp"

using namespace dmsnet;

namespace {

struct Scores {
    std::vector<double> scores;
    std::vector<std::uint8_t> truth;
    std::vector<int> pred, labels;
};

Scores random_scores(int n) {
    std::mt19937 gen(1);
    std::uniform_real_distribution<double> u(0, 1);
    Scores s;
    for (int i = 0; i < n; ++i) {
        const int y = static_cast<int>(gen() % kNumClasses);
        s.labels.push_back(y);
        s.pred.push_back(u(gen) < 0.7 ? y : static_cast<int>(gen() % kNumClasses));
        for (int k = 0; k < kNumClasses; ++k) {
            s.scores.push_back(u(gen) + (k == y ? 0.5 : 0.0));
            s.truth.push_back(k == y);
        }
    }
    return s;
}

void BM_AucMacro(benchmark::State& state) {
    const auto s = random_scores(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(auc_macro(s.scores, s.truth, kNumClasses).macro);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AucMacro)->Arg(500)->Arg(5000);

void BM_RocTrapezoid(benchmark::State& state) {
    const auto s = random_scores(static_cast<int>(state.range(0)));
    std::vector<double> col;
    std::vector<std::uint8_t> pos;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        col.push_back(s.scores[i * kNumClasses]);
        pos.push_back(s.labels[i] == 0);
    }
    for (auto _ : state) benchmark::DoNotOptimize(trapezoid_auc(roc_curve(col, pos)));
}
BENCHMARK(BM_RocTrapezoid)->Arg(5000);

void BM_Kappa(benchmark::State& state) {
    const auto s = random_scores(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(cohen_kappa(confusion_matrix(s.pred, s.labels)));
}
BENCHMARK(BM_Kappa)->Arg(5000);

}  // namespace
BENCHMARK_MAIN();
