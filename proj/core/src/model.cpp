#include "mlmkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mlmkit/corpus.hpp"
#include "mlmkit/error.hpp"

namespace mlmkit {

using num::Mode;
using num::Shape;
using num::Tensor;

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.number_of_layers = 12;
    c.hidden_size = 768;
    c.ffn_inner_hidden_size = 3072;
    c.number_of_attention_heads = 12;
    c.attention_head_size = 64;
    c.context_size = 512;
    c.vocab_size = 52000;
    return c;
}

void ModelConfig::validate() const {
    const auto fail = [](const std::string& m) { throw Error("invalid model config: " + m); };
    if (number_of_layers == 0) fail("number_of_layers must be positive");
    if (number_of_attention_heads == 0 || attention_head_size == 0) fail("attention heads and head size must be positive");
    if (hidden_size != number_of_attention_heads * attention_head_size) {
        fail("hidden_size " + std::to_string(hidden_size) + " != number_of_attention_heads " +
             std::to_string(number_of_attention_heads) + " x attention_head_size " +
             std::to_string(attention_head_size));
    }
    if (ffn_inner_hidden_size == 0) fail("ffn_inner_hidden_size must be positive");
    if (context_size < 2) fail("context_size must be at least 2");
    if (vocab_size <= static_cast<std::size_t>(special::count)) fail("vocab_size must exceed the 5 special tokens");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (!(attention_dropout >= 0.0 && attention_dropout < 1.0)) fail("attention_dropout must lie in [0, 1)");
    if (!(layer_norm_eps >= 0.0)) fail("layer_norm_eps must be non-negative");
    if (!(initializer_range > 0.0)) fail("initializer_range must be positive");
}

std::size_t ModelConfig::parameter_count() const {
    const std::size_t v = vocab_size, d = hidden_size, c = context_size, n = number_of_layers,
                      f = ffn_inner_hidden_size;
    return v * d + c * d + n * (4 * (d * d + d) + 4 * d + 2 * d * f + f + d) + (d * d + 3 * d + v);
}

void ModelConfig::apply(const KeyValues& kv) {
    const auto size_key = [&kv](const char* key, std::size_t& field) {
        if (kv.contains(key)) field = kv.get_uint(key);
    };
    const auto real_key = [&kv](const char* key, double& field) {
        if (kv.contains(key)) field = kv.get_double(key);
    };
    size_key("number_of_layers", number_of_layers);
    size_key("hidden_size", hidden_size);
    size_key("ffn_inner_hidden_size", ffn_inner_hidden_size);
    size_key("number_of_attention_heads", number_of_attention_heads);
    size_key("attention_head_size", attention_head_size);
    size_key("context_size", context_size);
    size_key("vocab_size", vocab_size);
    real_key("dropout", dropout);
    real_key("attention_dropout", attention_dropout);
    real_key("layer_norm_eps", layer_norm_eps);
    real_key("initializer_range", initializer_range);
}

KeyValues ModelConfig::to_key_values() const {
    KeyValues kv;
    kv.set("number_of_layers", std::to_string(number_of_layers));
    kv.set("hidden_size", std::to_string(hidden_size));
    kv.set("ffn_inner_hidden_size", std::to_string(ffn_inner_hidden_size));
    kv.set("number_of_attention_heads", std::to_string(number_of_attention_heads));
    kv.set("attention_head_size", std::to_string(attention_head_size));
    kv.set("context_size", std::to_string(context_size));
    kv.set("vocab_size", std::to_string(vocab_size));
    kv.set("dropout", format_double(dropout));
    kv.set("attention_dropout", format_double(attention_dropout));
    kv.set("layer_norm_eps", format_double(layer_norm_eps));
    kv.set("initializer_range", format_double(initializer_range));
    return kv;
}

ModelConfig ModelConfig::parse(std::string_view text, const std::string& source) {
    const KeyValues kv = KeyValues::parse(text, source);
    kv.require_known(kKeys);
    ModelConfig c;
    c.apply(kv);
    return c;
}

// ---------------------------------------------------------------------------

template <typename T>
AttentionResult<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        std::span<const std::uint8_t> key_pad, double attention_dropout,
                                        Mode mode, Rng* rng) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
        throw ShapeError("scaled_dot_attention: Q " + num::to_string(q.shape()) + ", K " + num::to_string(k.shape()) +
                         ", V " + num::to_string(v.shape()));
    }
    const std::size_t tq = q.dim(0), tk = k.dim(0);
    if (!key_pad.empty() && key_pad.size() != tk) {
        throw ShapeError("scaled_dot_attention: pad mask length differs from key count");
    }
    Tensor<T> scores = num::scale(num::matmul_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.dim(1)))));
    const bool any_pad = std::any_of(key_pad.begin(), key_pad.end(), [](std::uint8_t p) { return p != 0; });
    if (any_pad) {
        if (std::all_of(key_pad.begin(), key_pad.end(), [](std::uint8_t p) { return p != 0; })) {
            throw Error("scaled_dot_attention: every key position is padding");
        }
        std::vector<T> mask(tq * tk, T(0));
        for (std::size_t i = 0; i < tq; ++i) {
            for (std::size_t j = 0; j < tk; ++j) {
                if (key_pad[j] != 0) {
                    mask[i * tk + j] = -std::numeric_limits<T>::infinity();
                }
            }
        }
        scores = num::add_constant(scores, std::span<const T>(mask));
    }
    Tensor<T> weights = num::softmax_rows(scores);
    Tensor<T> used = weights;
    if (mode == Mode::train && attention_dropout > 0.0) {
        if (rng == nullptr) {
            throw std::logic_error("scaled_dot_attention: train-mode dropout needs an Rng");
        }
        used = num::dropout(weights, attention_dropout, mode, *rng);
    }
    return {num::matmul(used, v), weights};
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const LayerWeights<T>& w, std::size_t heads, std::size_t batch,
                               std::size_t length, std::span<const std::uint8_t> pad, double attention_dropout,
                               Mode mode, Rng* rng, std::vector<Tensor<T>>* weights_out) {
    if (x.rank() != 2 || x.dim(0) != batch * length || heads == 0 || x.dim(1) % heads != 0) {
        throw ShapeError("multi_head_attention: input " + num::to_string(x.shape()) + " for batch " +
                         std::to_string(batch) + " x length " + std::to_string(length) + ", " +
                         std::to_string(heads) + " heads");
    }
    const std::size_t d = x.dim(1), dk = d / heads;
    const Tensor<T> q = num::add_bias(num::matmul(x, w.query_weight), w.query_bias);
    const Tensor<T> k = num::add_bias(num::matmul(x, w.key_weight), w.key_bias);
    const Tensor<T> v = num::add_bias(num::matmul(x, w.value_weight), w.value_bias);

    std::vector<Tensor<T>> sequences;
    sequences.reserve(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        const std::span<const std::uint8_t> seq_pad = pad.empty() ? pad : pad.subspan(s * length, length);
        std::vector<Tensor<T>> head_outputs;
        head_outputs.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            auto r = scaled_dot_attention(num::slice(q, s * length, length, h * dk, dk),
                                          num::slice(k, s * length, length, h * dk, dk),
                                          num::slice(v, s * length, length, h * dk, dk), seq_pad, attention_dropout,
                                          mode, rng);
            if (weights_out != nullptr) {
                weights_out->push_back(r.weights);
            }
            head_outputs.push_back(std::move(r.output));
        }
        sequences.push_back(heads == 1 ? head_outputs[0] : num::concat_cols<T>(head_outputs));
    }
    const Tensor<T> joined = batch == 1 ? sequences[0] : num::concat_rows<T>(sequences);
    return num::add_bias(num::matmul(joined, w.output_weight), w.output_bias);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
                       const Tensor<T>& b2) {
    return num::add_bias(num::matmul(num::gelu(num::add_bias(num::matmul(x, w1), b1)), w2), b2);
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::pair<std::string, Shape>> Model<T>::layout(const ModelConfig& c) {
    const std::size_t d = c.hidden_size, f = c.ffn_inner_hidden_size;
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("embeddings.token", Shape{c.vocab_size, d});
    out.emplace_back("embeddings.position", Shape{c.context_size, d});
    for (std::size_t i = 0; i < c.number_of_layers; ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        for (const char* proj : {"query", "key", "value", "output"}) {
            out.emplace_back(p + "attention." + proj + ".weight", Shape{d, d});
            out.emplace_back(p + "attention." + proj + ".bias", Shape{d});
        }
        out.emplace_back(p + "attention.norm.gamma", Shape{d});
        out.emplace_back(p + "attention.norm.beta", Shape{d});
        out.emplace_back(p + "ffn.input.weight", Shape{d, f});
        out.emplace_back(p + "ffn.input.bias", Shape{f});
        out.emplace_back(p + "ffn.output.weight", Shape{f, d});
        out.emplace_back(p + "ffn.output.bias", Shape{d});
        out.emplace_back(p + "ffn.norm.gamma", Shape{d});
        out.emplace_back(p + "ffn.norm.beta", Shape{d});
    }
    out.emplace_back("mlm_head.dense.weight", Shape{d, d});
    out.emplace_back("mlm_head.dense.bias", Shape{d});
    out.emplace_back("mlm_head.norm.gamma", Shape{d});
    out.emplace_back("mlm_head.norm.beta", Shape{d});
    out.emplace_back("mlm_head.output_bias", Shape{c.vocab_size});
    return out;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

template <typename T>
Model<T> Model<T>::create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, "init"));
    std::vector<NamedTensor<T>> params;
    for (auto& [name, shape] : layout(config)) {
        Tensor<T> t = Tensor<T>::zeros(shape, true);
        if (ends_with(name, ".gamma")) {
            std::fill(t.data().begin(), t.data().end(), T(1));
        } else if (ends_with(name, ".weight") || name.rfind("embeddings.", 0) == 0) {
            for (T& v : t.data()) {
                v = static_cast<T>(rng.truncated_normal(config.initializer_range, 2.0));
            }
        }
        params.push_back({name, std::move(t)});
    }
    return from_parameters(config, std::move(params));
}

template <typename T>
Model<T> Model<T>::from_parameters(const ModelConfig& config, std::vector<NamedTensor<T>> parameters) {
    config.validate();
    const auto expected = layout(config);
    if (parameters.size() != expected.size()) {
        throw Error("model expects " + std::to_string(expected.size()) + " tensors, got " +
                    std::to_string(parameters.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (parameters[i].name != expected[i].first) {
            throw Error("tensor " + std::to_string(i) + " is '" + parameters[i].name + "', expected '" +
                        expected[i].first + "'");
        }
        if (parameters[i].tensor.shape() != expected[i].second) {
            throw Error("tensor '" + parameters[i].name + "' has shape " +
                        num::to_string(parameters[i].tensor.shape()) + " but the config implies " +
                        num::to_string(expected[i].second));
        }
    }
    Model m;
    m.config_ = config;
    m.params_ = std::move(parameters);
    m.bind();
    return m;
}

template <typename T>
void Model<T>::bind() {
    std::size_t i = 0;
    const auto next = [this, &i]() -> Tensor<T>& { return params_[i++].tensor; };
    token_embedding_ = next();
    position_embedding_ = next();
    layers_.assign(config_.number_of_layers, {});
    for (auto& l : layers_) {
        l.query_weight = next();
        l.query_bias = next();
        l.key_weight = next();
        l.key_bias = next();
        l.value_weight = next();
        l.value_bias = next();
        l.output_weight = next();
        l.output_bias = next();
        l.attention_norm_gamma = next();
        l.attention_norm_beta = next();
        l.ffn_in_weight = next();
        l.ffn_in_bias = next();
        l.ffn_out_weight = next();
        l.ffn_out_bias = next();
        l.ffn_norm_gamma = next();
        l.ffn_norm_beta = next();
    }
    head_weight_ = next();
    head_bias_ = next();
    head_norm_gamma_ = next();
    head_norm_beta_ = next();
    output_bias_ = next();
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.tensor.numel();
    }
    return n;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto& p : params_) {
        p.tensor.zero_grad();
    }
}

template <typename T>
Tensor<T> Model<T>::forward(const TokenBatch& input, Mode mode, Rng* rng, AttentionTrace<T>* trace) const {
    const std::size_t b = input.batch, t = input.length;
    if (b == 0 || t == 0 || input.ids.size() != b * t) {
        throw ShapeError("forward: ids do not form a " + std::to_string(b) + " x " + std::to_string(t) + " batch");
    }
    if (!input.pad.empty() && input.pad.size() != input.ids.size()) {
        throw ShapeError("forward: pad mask size differs from ids");
    }
    if (t > config_.context_size) {
        throw Error("sequence length " + std::to_string(t) + " exceeds context size " +
                    std::to_string(config_.context_size));
    }
    const bool stochastic = mode == Mode::train && (config_.dropout > 0.0 || config_.attention_dropout > 0.0);
    if (stochastic && rng == nullptr) {
        throw std::logic_error("forward: train mode with dropout needs an Rng");
    }

    std::vector<std::int32_t> positions(b * t);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        positions[i] = static_cast<std::int32_t>(i % t);
    }
    Tensor<T> x = num::add(num::embedding_gather(token_embedding_, std::span<const std::int32_t>(input.ids)),
                           num::embedding_gather(position_embedding_, std::span<const std::int32_t>(positions)));

    const std::span<const std::uint8_t> pad(input.pad);
    if (trace != nullptr) {
        trace->weights.assign(layers_.size(), {});
    }
    const double eps = config_.layer_norm_eps;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const LayerWeights<T>& l = layers_[li];
        Tensor<T> a = multi_head_attention(x, l, config_.number_of_attention_heads, b, t, pad,
                                           config_.attention_dropout, mode, rng,
                                           trace != nullptr ? &trace->weights[li] : nullptr);
        if (mode == Mode::train && config_.dropout > 0.0) {
            a = num::dropout(a, config_.dropout, mode, *rng);
        }
        x = num::layer_norm(num::add(x, a), l.attention_norm_gamma, l.attention_norm_beta, eps);
        Tensor<T> f = feed_forward(x, l.ffn_in_weight, l.ffn_in_bias, l.ffn_out_weight, l.ffn_out_bias);
        if (mode == Mode::train && config_.dropout > 0.0) {
            f = num::dropout(f, config_.dropout, mode, *rng);
        }
        x = num::layer_norm(num::add(x, f), l.ffn_norm_gamma, l.ffn_norm_beta, eps);
    }
    const Tensor<T> h = num::layer_norm(num::gelu(num::add_bias(num::matmul(x, head_weight_), head_bias_)),
                                        head_norm_gamma_, head_norm_beta_, eps);
    return num::add_bias(num::matmul_nt(h, token_embedding_), output_bias_);
}

template class Model<float>;
template class Model<double>;

#define MLMKIT_INSTANTIATE_LAYERS(T)                                                                          \
    template AttentionResult<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                                     std::span<const std::uint8_t>, double, Mode, Rng*);      \
    template Tensor<T> multi_head_attention(const Tensor<T>&, const LayerWeights<T>&, std::size_t,            \
                                            std::size_t, std::size_t, std::span<const std::uint8_t>, double,  \
                                            Mode, Rng*, std::vector<Tensor<T>>*);                             \
    template Tensor<T> feed_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                    const Tensor<T>&);

MLMKIT_INSTANTIATE_LAYERS(float)
MLMKIT_INSTANTIATE_LAYERS(double)

#undef MLMKIT_INSTANTIATE_LAYERS

// ---------------------------------------------------------------------------

namespace {

template <typename F>
std::vector<double> softmax_impl(std::span<const F> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) {
        return p;
    }
    const double mx = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
    double z = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - mx);
        z += p[i];
    }
    for (double& v : p) {
        v /= z;
    }
    return p;
}

}  // namespace

std::vector<double> softmax_distribution(std::span<const float> logits) { return softmax_impl(logits); }
std::vector<double> softmax_distribution(std::span<const double> logits) { return softmax_impl(logits); }

std::vector<TokenId> top_k(std::span<const double> probabilities, std::size_t k) {
    k = std::min(k, probabilities.size());
    std::vector<TokenId> ids(probabilities.size());
    std::iota(ids.begin(), ids.end(), TokenId{0});
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                      [&probabilities](TokenId a, TokenId b) {
                          const double pa = probabilities[static_cast<std::size_t>(a)];
                          const double pb = probabilities[static_cast<std::size_t>(b)];
                          return pa != pb ? pa > pb : a < b;
                      });
    ids.resize(k);
    return ids;
}

std::size_t rank_of(std::span<const double> probabilities, TokenId id) {
    const double p = probabilities[static_cast<std::size_t>(id)];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < probabilities.size(); ++j) {
        const double q = probabilities[j];
        if (q > p || (q == p && static_cast<TokenId>(j) < id)) {
            ++rank;
        }
    }
    return rank;
}

FillMaskResult predict_topk(const Model<float>& model, const Tokenizer& tokenizer, std::string_view text,
                            std::size_t k) {
    const std::size_t vocab = model.config().vocab_size;
    if (k == 0 || k > vocab) {
        throw Error("k must lie in [1, " + std::to_string(vocab) + "], got " + std::to_string(k));
    }
    FillMaskResult result;
    result.input_ids = tokenizer.encode(normalize_line(text), {.add_bos_eos = false, .parse_masks = true});
    if (std::find(result.input_ids.begin(), result.input_ids.end(), special::mask) == result.input_ids.end()) {
        throw Error("input contains no " + std::string(kMaskText) + " token");
    }
    if (result.input_ids.size() > model.config().context_size) {
        throw Error("input encodes to " + std::to_string(result.input_ids.size()) + " tokens, more than the context size " +
                    std::to_string(model.config().context_size));
    }
    TokenBatch batch{1, result.input_ids.size(), result.input_ids,
                     std::vector<std::uint8_t>(result.input_ids.size(), 0)};
    const Tensor<float> logits = model.forward(batch, Mode::eval);

    result.filled_ids = result.input_ids;
    double nll = 0;
    for (std::size_t pos = 0; pos < result.input_ids.size(); ++pos) {
        if (result.input_ids[pos] != special::mask) {
            continue;
        }
        MaskPrediction mp;
        mp.position = pos;
        mp.distribution = softmax_distribution(logits.data().subspan(pos * vocab, vocab));
        const std::vector<TokenId> best = top_k(mp.distribution, k);
        for (std::size_t r = 0; r < best.size(); ++r) {
            mp.candidates.push_back(
                {best[r], tokenizer.surface(best[r]), mp.distribution[static_cast<std::size_t>(best[r])], r + 1});
        }
        const double p1 = mp.candidates.front().probability;
        mp.perplexity = std::exp(-std::log(p1));
        nll += -std::log(p1);
        result.filled_ids[pos] = best.front();
        result.masks.push_back(std::move(mp));
    }
    result.perplexity = std::exp(nll / static_cast<double>(result.masks.size()));
    result.filled_text = tokenizer.decode(result.filled_ids);
    return result;
}

}  // namespace mlmkit
