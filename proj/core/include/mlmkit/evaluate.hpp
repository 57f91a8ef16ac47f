#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlmkit/metrics.hpp"
#include "mlmkit/model.hpp"
#include "mlmkit/tokenizer.hpp"

namespace mlmkit {

struct EvalOptions {
    std::size_t k = 10;
    std::uint64_t seed = 0;
    double masking_probability = 0.15;
    std::size_t batch_size = 8;
};

struct EvalResult {
    EvalReport report;
    std::vector<PredictionRecord> records;
    std::vector<std::vector<TokenId>> filled;     // top-1 substitutions, padding removed
    std::vector<std::vector<TokenId>> originals;  // unmasked sequences, padding removed
};

/// Masks `lines` with a fixed seed, ranks the full vocabulary at every masked
/// position and computes every metric. Throws Error on an empty split.
EvalResult evaluate_model(const Model<float>& model, const Tokenizer& tokenizer, std::span<const std::string> lines,
                          const EvalOptions& options);

/// `id<TAB>true_id<TAB>rank<TAB>id:prob...` per record.
std::string render_prediction_dump(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> parse_prediction_dump(std::string_view text, const std::string& source = "<dump>");

}  // namespace mlmkit
