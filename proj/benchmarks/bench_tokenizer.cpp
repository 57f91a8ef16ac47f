#include <fstream>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "mlmkit/tokenizer.hpp"

namespace {

std::vector<std::string> corpus_lines() {
    std::vector<std::string> lines;
    std::ifstream in(std::string(MLMKIT_BENCH_DATA_DIR) + "/desk_lakota.txt");
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void BM_BpeTrain(benchmark::State& state) {
    const auto lines = corpus_lines();
    for (auto _ : state) {
        benchmark::DoNotOptimize(mlmkit::train_bpe(lines, 2000));
    }
}
BENCHMARK(BM_BpeTrain)->Unit(benchmark::kMillisecond);

void BM_BpeEncode(benchmark::State& state) {
    const auto lines = corpus_lines();
    const auto tok = mlmkit::train_bpe(lines, 2000);
    std::int64_t bytes = 0;
    for (auto _ : state) {
        for (const auto& l : lines) {
            benchmark::DoNotOptimize(tok.encode(l));
            bytes += static_cast<std::int64_t>(l.size());
        }
    }
    state.SetBytesProcessed(bytes);
}
BENCHMARK(BM_BpeEncode)->Unit(benchmark::kMillisecond);

}  // namespace
