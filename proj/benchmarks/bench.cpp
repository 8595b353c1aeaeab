#include <benchmark/benchmark.h>

#include <random>

#include "ace/matrix.hpp"
#include "ace/metrics.hpp"
#include "ace/model.hpp"
#include "ace/sparsify.hpp"
#include "ace/stats.hpp"

namespace {

ace::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    ace::Matrix m(rows, cols);
    for (double& v : m.data) v = dist(gen);
    return m;
}

ace::FinalizedStats finalized_stats(std::size_t tokens, std::size_t d, std::uint64_t seed) {
    const ace::Matrix batch = random_matrix(tokens, d, seed);
    ace::FeatureStats s = ace::new_stats(d, ace::DampingPolicy::proportional(), batch);
    ace::accumulate(s, batch);
    return ace::finalize(s);
}

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const ace::Matrix a = random_matrix(n, n, 1);
    const ace::Matrix b = random_matrix(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(ace::matmul(a, b));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_stats_accumulate(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const ace::Matrix batch = random_matrix(512, d, 3);
    for (auto _ : state) {
        ace::FeatureStats s = ace::new_stats(d, ace::DampingPolicy::proportional(), batch);
        ace::accumulate(s, batch);
        benchmark::DoNotOptimize(s.sum_ratio.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 512 *
                            static_cast<std::int64_t>(d));
}
BENCHMARK(bm_stats_accumulate)->Arg(64)->Arg(256);

void bm_score(benchmark::State& state) {
    static const char* kNames[] = {"magnitude", "wanda", "ria", "sgptdiag",
                                   "cosp",      "varp",  "cosp+varp"};
    const ace::MetricKind kind = ace::MetricKind::parse(kNames[state.range(0)]);
    const ace::Matrix w = random_matrix(256, 64, 4);
    const ace::FinalizedStats fin = finalized_stats(512, 64, 5);
    for (auto _ : state) benchmark::DoNotOptimize(ace::score(w, fin, kind));
    state.SetLabel(kNames[state.range(0)]);
}
BENCHMARK(bm_score)->DenseRange(0, 6);

void bm_build_mask(benchmark::State& state) {
    const ace::Matrix scores = random_matrix(256, 256, 6);
    const ace::SparsityPattern pattern = state.range(0) == 0
                                             ? ace::SparsityPattern::semi_structured(2, 4)
                                             : ace::SparsityPattern::unstructured(0.5);
    for (auto _ : state) benchmark::DoNotOptimize(ace::build_mask(scores, pattern));
    state.SetLabel(pattern.to_string());
}
BENCHMARK(bm_build_mask)->Arg(0)->Arg(1);

void bm_toy_forward(benchmark::State& state) {
    const ace::ToyTransformer model = ace::init_model(ace::default_toy_manifest(7));
    std::vector<int> tokens(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<int>(i % 251);
    for (auto _ : state) benchmark::DoNotOptimize(ace::forward(model, tokens));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(bm_toy_forward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
