#include <afc/clustering.hpp>
#include <afc/dataset.hpp>
#include <afc/evaluation.hpp>
#include <afc/model.hpp>
#include <afc/selection.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace afc;

namespace {

const Dataset& shapes() {
    static const Dataset ds = generate_shapes(64, 0);
    return ds;
}

EmbeddingModel shape_model(std::uint64_t seed) {
    const auto& s = shapes().manifest.shape;
    auto m = EmbeddingModel::standard(TensorShape{s.channels, s.height, s.width, false});
    m.initialize(seed);
    return m;
}

EmbeddingTable random_table(std::size_t n, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    EmbeddingTable t;
    for (std::size_t i = 0; i < n; ++i) {
        Embedding e(dim);
        for (auto& v : e) v = g(rng);
        t.emplace("p" + std::to_string(100000 + i), std::move(e));
    }
    return t;
}

void BM_Forward64(benchmark::State& state) {
    const auto model = shape_model(1);
    const auto input = to_tensor(shapes().records[0]);
    for (auto _ : state) benchmark::DoNotOptimize(forward(model, input));
}
BENCHMARK(BM_Forward64)->Unit(benchmark::kMicrosecond);

void BM_TripletGradient64(benchmark::State& state) {
    const auto model = shape_model(2);
    const auto& r = shapes().records;
    const auto a = to_tensor(r[0]), p = to_tensor(r[1]), n = to_tensor(r[60]);
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(model, a, p, n, 1.0));
}
BENCHMARK(BM_TripletGradient64)->Unit(benchmark::kMicrosecond);

void BM_EmbedShapes(benchmark::State& state) {
    const auto model = shape_model(3);
    const ImageStore store(shapes().records);
    for (auto _ : state) benchmark::DoNotOptimize(embed_all(model, store));
}
BENCHMARK(BM_EmbedShapes)->Unit(benchmark::kMillisecond);

void BM_CompleteLinkage(benchmark::State& state) {
    const auto table = random_table(static_cast<std::size_t>(state.range(0)), 8, 4);
    for (auto _ : state) benchmark::DoNotOptimize(complete_linkage(table));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CompleteLinkage)->RangeMultiplier(2)->Range(64, 1024)->Complexity()->Unit(benchmark::kMillisecond);

void BM_Nmi(benchmark::State& state) {
    const auto n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(5);
    std::map<ImageId, int> u, v;
    for (int i = 0; i < n; ++i) {
        const auto id = "p" + std::to_string(100000 + i);
        u[id] = static_cast<int>(rng() % 10);
        v[id] = static_cast<int>(rng() % 7);
    }
    const auto pu = make_partition(u), pv = make_partition(v);
    for (auto _ : state) benchmark::DoNotOptimize(nmi(pu, pv));
}
BENCHMARK(BM_Nmi)->Arg(135)->Arg(1000)->Arg(10000);

void BM_BayesFactor(benchmark::State& state) {
    const auto n = static_cast<std::uint64_t>(state.range(0));
    for (auto _ : state)
        for (std::uint64_t k = 0; k <= n; ++k) benchmark::DoNotOptimize(bayes_factor({n, k}));
}
BENCHMARK(BM_BayesFactor)->Arg(20)->Arg(200);

void BM_BuildPool(benchmark::State& state) {
    const auto table = random_table(1000, 8, 6);
    const auto seed = table.begin()->first;
    for (auto _ : state) benchmark::DoNotOptimize(build_pool(table, seed, 12));
}
BENCHMARK(BM_BuildPool)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
