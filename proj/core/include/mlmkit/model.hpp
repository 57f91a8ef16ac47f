#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlmkit/key_value.hpp"
#include "mlmkit/ops.hpp"
#include "mlmkit/random.hpp"
#include "mlmkit/tensor.hpp"
#include "mlmkit/tokenizer.hpp"

namespace mlmkit {

struct ModelConfig {
    std::size_t number_of_layers = 2;
    std::size_t hidden_size = 64;
    std::size_t ffn_inner_hidden_size = 256;
    std::size_t number_of_attention_heads = 2;
    std::size_t attention_head_size = 32;
    std::size_t context_size = 64;
    std::size_t vocab_size = 2000;
    double dropout = 0.1;
    double attention_dropout = 0.1;
    double layer_norm_eps = 1e-5;
    double initializer_range = 0.02;

    static inline constexpr std::array<std::string_view, 11> kKeys{
        "number_of_layers", "hidden_size",       "ffn_inner_hidden_size", "number_of_attention_heads",
        "attention_head_size", "context_size",   "vocab_size",            "dropout",
        "attention_dropout",   "layer_norm_eps", "initializer_range"};

    /// Small CPU preset: 2 layers, hidden 64, FFN 256, 2 heads, context 64, vocab 2,000.
    static ModelConfig desk();
    /// 12 layers, hidden 768, FFN 3072, 12 heads of 64, context 512, vocab 52,000.
    static ModelConfig full_scale();

    /// Throws Error on an inconsistent configuration.
    void validate() const;

    /// Closed form for the tied-output architecture:
    ///   V*d + C*d + N*(4*(d*d + d) + 4*d + 2*d*F + F + d) + (d*d + 3*d + V)
    std::size_t parameter_count() const;

    /// Applies whichever model keys are present in `kv`; other keys are ignored.
    void apply(const KeyValues& kv);
    KeyValues to_key_values() const;
    /// Strict: every key must be a model key.
    static ModelConfig parse(std::string_view text, const std::string& source = "<config>");

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct NamedTensor {
    std::string name;
    num::Tensor<T> tensor;
};

template <typename T>
struct LayerWeights {
    num::Tensor<T> query_weight, query_bias;
    num::Tensor<T> key_weight, key_bias;
    num::Tensor<T> value_weight, value_bias;
    num::Tensor<T> output_weight, output_bias;
    num::Tensor<T> attention_norm_gamma, attention_norm_beta;
    num::Tensor<T> ffn_in_weight, ffn_in_bias;
    num::Tensor<T> ffn_out_weight, ffn_out_bias;
    num::Tensor<T> ffn_norm_gamma, ffn_norm_beta;
};

/// Row-major [batch x length] token ids; pad[i] != 0 marks padding.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> pad;
};

template <typename T>
struct AttentionResult {
    num::Tensor<T> output;   // [T x d_v]
    num::Tensor<T> weights;  // [T x T], before attention dropout
};

/// softmax(Q K^T / sqrt(d_k)) V with -inf added to padded key columns.
template <typename T>
AttentionResult<T> scaled_dot_attention(const num::Tensor<T>& q, const num::Tensor<T>& k, const num::Tensor<T>& v,
                                        std::span<const std::uint8_t> key_pad, double attention_dropout,
                                        num::Mode mode, Rng* rng);

/// Per-sequence attention weights collected during a forward pass: [layer][sequence * heads + head].
template <typename T>
struct AttentionTrace {
    std::vector<std::vector<num::Tensor<T>>> weights;
};

/// Concat(head_1..head_h) W^O + b^O with head_i = Attention(x W^Q_i, x W^K_i, x W^V_i).
/// `x` holds `batch` sequences of `length` rows each; attention never crosses sequences.
template <typename T>
num::Tensor<T> multi_head_attention(const num::Tensor<T>& x, const LayerWeights<T>& w, std::size_t heads,
                                    std::size_t batch, std::size_t length, std::span<const std::uint8_t> pad,
                                    double attention_dropout, num::Mode mode, Rng* rng,
                                    std::vector<num::Tensor<T>>* weights_out = nullptr);

/// GELU(x W1 + b1) W2 + b2, applied to every row.
template <typename T>
num::Tensor<T> feed_forward(const num::Tensor<T>& x, const num::Tensor<T>& w1, const num::Tensor<T>& b1,
                            const num::Tensor<T>& w2, const num::Tensor<T>& b2);

/// Transformer encoder with a masked-token prediction head whose output
/// projection is tied to the token embedding.
template <typename T>
class Model {
public:
    /// N(0, initializer_range^2) truncated at 2 sigma for matrices, zero biases, unit gains.
    static Model create(const ModelConfig& config, std::uint64_t seed);

    /// Takes ownership of the given tensors; names and shapes must match `config`.
    static Model from_parameters(const ModelConfig& config, std::vector<NamedTensor<T>> parameters);

    const ModelConfig& config() const { return config_; }
    const std::vector<NamedTensor<T>>& parameters() const { return params_; }
    std::size_t parameter_count() const;

    /// Expected parameter names and shapes, in storage order.
    static std::vector<std::pair<std::string, num::Shape>> layout(const ModelConfig& config);

    template <typename U>
    Model<U> cast() const {
        std::vector<NamedTensor<U>> out;
        out.reserve(params_.size());
        for (const auto& p : params_) {
            out.push_back({p.name, p.tensor.template cast<U>(true)});
        }
        return Model<U>::from_parameters(config_, std::move(out));
    }

    void zero_grad();

    /// Logits [batch*length x vocab]. `rng` drives dropout in train mode and may be null in eval mode.
    num::Tensor<T> forward(const TokenBatch& input, num::Mode mode, Rng* rng = nullptr,
                           AttentionTrace<T>* trace = nullptr) const;

    const num::Tensor<T>& token_embedding() const { return token_embedding_; }
    const LayerWeights<T>& layer(std::size_t i) const { return layers_.at(i); }

private:
    void bind();

    ModelConfig config_;
    std::vector<NamedTensor<T>> params_;
    num::Tensor<T> token_embedding_, position_embedding_;
    std::vector<LayerWeights<T>> layers_;
    num::Tensor<T> head_weight_, head_bias_, head_norm_gamma_, head_norm_beta_, output_bias_;
};

extern template class Model<float>;
extern template class Model<double>;

/// Softmax of one logits row in double precision.
std::vector<double> softmax_distribution(std::span<const float> logits);
std::vector<double> softmax_distribution(std::span<const double> logits);

/// The k most probable ids, ties broken by ascending id.
std::vector<TokenId> top_k(std::span<const double> probabilities, std::size_t k);

/// 1-based rank of `id` under the same ordering as top_k.
std::size_t rank_of(std::span<const double> probabilities, TokenId id);

struct Candidate {
    TokenId id;
    std::string token;
    double probability;
    std::size_t rank;
};

struct MaskPrediction {
    std::size_t position;              // index in the encoded sequence
    std::vector<Candidate> candidates; // k best, rank 1 first
    std::vector<double> distribution;  // full softmax over the vocabulary
    double perplexity;                 // exp(-ln p_top1)
};

struct FillMaskResult {
    std::vector<TokenId> input_ids;
    std::vector<MaskPrediction> masks;
    std::vector<TokenId> filled_ids;  // masks replaced by their top-1 candidate
    std::string filled_text;
    double perplexity;  // exp(mean over masks of -ln p_top1)
};

/// Fill every literal "<MASK>" in `text` with the model's k best tokens.
FillMaskResult predict_topk(const Model<float>& model, const Tokenizer& tokenizer, std::string_view text,
                            std::size_t k);

}  // namespace mlmkit
