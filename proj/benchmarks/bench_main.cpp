#include <recbm/decomposer.hpp>
#include <recbm/head.hpp>
#include <recbm/selector.hpp>
#include <recbm/synthetic.hpp>

#include <benchmark/benchmark.h>

using namespace recbm;

namespace {

Eigen::MatrixXd unit_rows(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return synthetic::random_unit_rows(rows, dim, rng);
}

void BM_SelectConcepts(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const Eigen::MatrixXd images = unit_rows(512, 64, 1);
    const Eigen::MatrixXd pool = unit_rows(4 * m, 64, 2);
    SelectionOptions opts;
    opts.target = m;
    for (auto _ : state) benchmark::DoNotOptimize(select_concepts(images, pool, opts));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SelectConcepts)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Omp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const ConceptDictionary bank(unit_rows(300, 128, 3));
    const Eigen::MatrixXd images = unit_rows(64, 128, 4);
    OmpOptions opts;
    opts.sparsity = n;
    opts.stop_tol = 0.0;
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(omp_decompose(images.row(i % 64).transpose(), bank, opts));
        ++i;
    }
}
BENCHMARK(BM_Omp)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_HeadEpoch(benchmark::State& state) {
    const auto x = EmbeddingMatrix::from_eigen(unit_rows(2000, 128, 5));
    std::vector<int> y(2000);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
    std::vector<std::string> classes;
    for (int c = 0; c < 10; ++c) classes.push_back(std::to_string(c));
    TrainOptions opts;
    opts.epochs = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train(init_zeros(128, classes), x, y, opts));
}
BENCHMARK(BM_HeadEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
