#include <benchmark/benchmark.h>

#include "mlmkit/model.hpp"
#include "mlmkit/training.hpp"

namespace {

using namespace mlmkit;

std::vector<Block> random_blocks(std::size_t count, std::size_t length, std::size_t vocab) {
    Rng rng(5);
    std::vector<Block> blocks(count);
    for (auto& b : blocks) {
        for (std::size_t i = 0; i < length; ++i) {
            b.ids.push_back(static_cast<TokenId>(special::count + rng.below(vocab - special::count)));
            b.pad.push_back(0);
        }
    }
    return blocks;
}

void BM_DeskForwardEval(benchmark::State& state) {
    const ModelConfig c = ModelConfig::desk();
    const auto model = Model<float>::create(c, 1);
    const auto batch = make_batch(random_blocks(8, c.context_size, c.vocab_size));
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(batch, num::Mode::eval));
    }
}
BENCHMARK(BM_DeskForwardEval)->Unit(benchmark::kMillisecond);

void BM_DeskTrainStep(benchmark::State& state) {
    const ModelConfig c = ModelConfig::desk();
    auto model = Model<float>::create(c, 1);
    const auto blocks = random_blocks(8, c.context_size, c.vocab_size);
    const auto batch = mask_batch(blocks, {0.15, MaskStrategy::pure, c.vocab_size}, 2);
    TrainConfig cfg;
    AdamState adam{cfg.adam()};
    Rng rng(3);
    auto params = model.parameters();
    for (auto _ : state) {
        model.zero_grad();
        const auto loss = mlm_loss(model.forward(batch, num::Mode::train, &rng), batch);
        num::backward(loss);
        clip_grad_norm(std::span<NamedTensor<float>>(params), cfg.grad_clip_norm);
        adam_step(std::span<NamedTensor<float>>(params), adam, cfg.learning_rate);
    }
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
