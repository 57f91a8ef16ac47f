#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlmkit/model.hpp"
#include "mlmkit/ops.hpp"
#include "mlmkit/tokenizer.hpp"

namespace mlmkit {

class Corpus;
class KeyValues;

struct Block {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> pad;  // 1 where ids holds PAD filler
};

/// Encode each line and join them with EOS separators.
std::vector<TokenId> build_stream(const Tokenizer& tokenizer, std::span<const std::string> lines);

/// Contiguous blocks of exactly `context_size`; the last one is PAD-filled.
std::vector<Block> pack_blocks(std::span<const TokenId> stream, std::size_t context_size);

/// True when the block has a non-special, non-padding position.
bool maskable(const Block& block);
std::vector<Block> maskable_blocks(std::vector<Block> blocks);

enum class MaskStrategy : std::uint8_t {
    pure,       // every selected position becomes MASK
    bert_80_10_10,  // 80% MASK, 10% random token, 10% unchanged
};

std::string_view to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view name);

struct MaskingOptions {
    double probability = 0.15;
    MaskStrategy strategy = MaskStrategy::pure;
    std::size_t vocab_size = 0;  // needed for bert_80_10_10 random replacements
};

struct MaskLabel {
    std::size_t position;
    TokenId original;
};

struct MaskedBatch : TokenBatch {
    std::vector<std::vector<MaskLabel>> labels;  // per sequence, ascending position

    std::size_t label_count() const;
    /// Flattened (sequence * length + position, original id) pairs.
    std::vector<num::Target> targets() const;
};

/// Selects each non-special position with the given probability; a sequence
/// with no selection gets one uniformly chosen eligible position. Throws
/// Error when a sequence has no maskable position.
MaskedBatch mask_batch(std::span<const Block> blocks, const MaskingOptions& options, std::uint64_t seed);

/// Masked-token cross entropy averaged over every label in the batch.
template <typename T>
num::Tensor<T> mlm_loss(const num::Tensor<T>& logits, const MaskedBatch& batch);

struct AdamOptions {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// Decoupled weight decay is applied to matrices and embeddings only.
bool decays(std::string_view parameter_name);

/// One bias-corrected Adam update from the parameters' gradients. Throws
/// Error (and leaves every parameter untouched) if any gradient is non-finite.
/// `learning_rate` overrides options.learning_rate when positive.
template <typename T>
void adam_step(std::span<NamedTensor<T>> params, AdamState& state, double learning_rate = 0.0);

/// Scales gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<NamedTensor<T>> params, double max_norm);

struct TrainConfig {
    ModelConfig model;
    std::size_t batch_size = 8;
    double masking_probability = 0.15;
    std::string torch_dtype = "float32";
    std::optional<std::uint64_t> number_of_parameters;  // informational only

    double learning_rate = 1e-4;
    double warmup_fraction = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double weight_decay = 0.01;
    double grad_clip_norm = 1.0;
    std::size_t max_steps = 500;
    std::size_t checkpoint_every = 0;
    MaskStrategy mask_strategy = MaskStrategy::pure;
    std::uint64_t seed = 0;

    static inline constexpr std::array<std::string_view, 15> kTrainingKeys{
        "batch_size",   "masking_probability", "torch_dtype",    "number_of_parameters", "learning_rate",
        "warmup_fraction", "adam_beta1",       "adam_beta2",     "adam_epsilon",         "weight_decay",
        "grad_clip_norm",  "max_steps",        "checkpoint_every", "mask_strategy",      "seed"};

    /// Every accepted key: model keys followed by training keys.
    static std::vector<std::string_view> keys();

    /// Strict: unknown keys are errors.
    static TrainConfig from(const KeyValues& kv);
    void apply(const KeyValues& kv);
    KeyValues to_key_values() const;
    void validate() const;

    AdamOptions adam() const;
    double learning_rate_at(std::size_t step) const;
};

struct TrainLog {
    std::vector<std::size_t> steps;
    std::vector<double> train_loss;
    std::vector<double> step_seconds;
    std::vector<std::size_t> epochs;
    std::vector<double> eval_loss;

    /// `step,loss` rows.
    std::string train_csv() const;
    /// `epoch,eval_loss` rows.
    std::string eval_csv() const;
};

struct TrainCallbacks {
    std::function<void(std::size_t step, double loss)> on_step;
    std::function<void(std::size_t step, const Model<float>& model)> on_checkpoint;
};

/// Pack, mask, forward, loss, backward, clip, Adam; per-step training loss and
/// per-epoch validation loss (fixed masking seed). Masks are redrawn each epoch.
TrainLog train(Model<float>& model, const Tokenizer& tokenizer, std::span<const std::string> train_lines,
               std::span<const std::string> valid_lines, const TrainConfig& config,
               const TrainCallbacks& callbacks = {});

/// Uses the corpus's train and valid splits; both must be non-empty.
TrainLog train(Model<float>& model, const Tokenizer& tokenizer, const Corpus& corpus, const TrainConfig& config,
               const TrainCallbacks& callbacks = {});

/// Label-weighted masked loss over `blocks` in eval mode.
double evaluate_loss(const Model<float>& model, std::span<const Block> blocks, const MaskingOptions& masking,
                     std::uint64_t seed, std::size_t batch_size);

/// Stack blocks [begin, begin + count) into a batch.
TokenBatch make_batch(std::span<const Block> blocks);

}  // namespace mlmkit
