#include <benchmark/benchmark.h>

#include "mlmkit/ops.hpp"
#include "mlmkit/random.hpp"

namespace {

using mlmkit::num::Tensor;

Tensor<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    mlmkit::Rng rng(seed);
    std::vector<float> v(rows * cols);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return Tensor<float>::from({rows, cols}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mlmkit::num::matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_SoftmaxRows(benchmark::State& state) {
    const auto x = random_matrix(512, 2000, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mlmkit::num::softmax_rows(x));
    }
}
BENCHMARK(BM_SoftmaxRows);

}  // namespace
