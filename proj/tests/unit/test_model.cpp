#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mlmkit/error.hpp"
#include "mlmkit/grad_check.hpp"
#include "mlmkit/metrics.hpp"
#include "mlmkit/model.hpp"
#include "mlmkit/training.hpp"

namespace mlmkit {
namespace {

using num::Mode;
using TD = num::Tensor<double>;

TD random_tensor(num::Shape shape, std::uint64_t seed, double stddev = 1.0, bool grad = false) {
    Rng rng(seed);
    std::vector<double> v(num::numel(shape));
    for (double& x : v) x = stddev * rng.normal();
    return TD::from(std::move(shape), std::move(v), grad);
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.number_of_layers = 2;
    c.hidden_size = 8;
    c.ffn_inner_hidden_size = 16;
    c.number_of_attention_heads = 2;
    c.attention_head_size = 4;
    c.context_size = 6;
    c.vocab_size = 12;
    return c;
}

TokenBatch random_batch(const ModelConfig& c, std::size_t batch, std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    TokenBatch b{batch, length, {}, std::vector<std::uint8_t>(batch * length, 0)};
    for (std::size_t i = 0; i < batch * length; ++i) {
        b.ids.push_back(static_cast<TokenId>(special::count + rng.below(c.vocab_size - special::count)));
    }
    return b;
}

TEST(ModelConfig, Presets) {
    const auto d = ModelConfig::desk();
    EXPECT_EQ(d.number_of_layers, 2u);
    EXPECT_EQ(d.hidden_size, 64u);
    EXPECT_EQ(d.ffn_inner_hidden_size, 256u);
    EXPECT_EQ(d.number_of_attention_heads, 2u);
    EXPECT_EQ(d.context_size, 64u);
    EXPECT_EQ(d.vocab_size, 2000u);
    const auto f = ModelConfig::full_scale();
    EXPECT_EQ(f.number_of_layers, 12u);
    EXPECT_EQ(f.hidden_size, 768u);
    EXPECT_EQ(f.ffn_inner_hidden_size, 3072u);
    EXPECT_EQ(f.number_of_attention_heads, 12u);
    EXPECT_EQ(f.attention_head_size, 64u);
    EXPECT_EQ(f.context_size, 512u);
    EXPECT_EQ(f.vocab_size, 52000u);
    EXPECT_DOUBLE_EQ(f.dropout, 0.1);
    EXPECT_DOUBLE_EQ(f.attention_dropout, 0.1);
}

TEST(ModelConfig, ParameterCountMatchesTensorSizes) {
    for (const auto& c : {ModelConfig::desk(), ModelConfig::full_scale(), tiny_config()}) {
        std::size_t total = 0;
        for (const auto& [name, shape] : Model<float>::layout(c)) {
            total += num::numel(shape);
        }
        EXPECT_EQ(total, c.parameter_count());
    }
    EXPECT_EQ(ModelConfig::desk().parameter_count(), 238352u);
    EXPECT_EQ(ModelConfig::full_scale().parameter_count(), 126027808u);
}

TEST(ModelConfig, Validation) {
    ModelConfig c = ModelConfig::full_scale();
    c.hidden_size = 70;
    EXPECT_THROW(c.validate(), Error);
    c = ModelConfig::desk();
    c.context_size = 1;
    EXPECT_THROW(c.validate(), Error);
    c = ModelConfig::desk();
    c.vocab_size = special::count;
    EXPECT_THROW(c.validate(), Error);
    c = ModelConfig::desk();
    c.dropout = 1.0;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_NO_THROW(ModelConfig::desk().validate());
}

TEST(ModelConfig, KeyValueRoundTrip) {
    ModelConfig c = tiny_config();
    c.dropout = 0.25;
    const ModelConfig back = ModelConfig::parse(c.to_key_values().render());
    EXPECT_EQ(back, c);
    EXPECT_THROW(ModelConfig::parse("hidden=3\n"), Error);
}

TEST(Model, InitializationDeterministicAndTruncated) {
    const auto a = Model<float>::create(tiny_config(), 5);
    const auto b = Model<float>::create(tiny_config(), 5);
    const auto c = Model<float>::create(tiny_config(), 6);
    ASSERT_EQ(a.parameters().size(), b.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& pa = a.parameters()[i];
        const auto& pb = b.parameters()[i];
        EXPECT_EQ(pa.name, pb.name);
        EXPECT_TRUE(std::equal(pa.tensor.data().begin(), pa.tensor.data().end(), pb.tensor.data().begin()));
        const auto& pc = c.parameters()[i];
        differs |= !std::equal(pa.tensor.data().begin(), pa.tensor.data().end(), pc.tensor.data().begin());
        const bool gamma = pa.name.ends_with(".gamma");
        const bool zero = pa.name.ends_with(".bias") || pa.name.ends_with(".beta");
        for (float v : pa.tensor.data()) {
            if (gamma) {
                EXPECT_EQ(v, 1.0f) << pa.name;
            } else if (zero) {
                EXPECT_EQ(v, 0.0f) << pa.name;
            } else {
                EXPECT_LE(std::abs(v), 0.04f + 1e-7f) << pa.name;
            }
        }
    }
    EXPECT_TRUE(differs);
    EXPECT_EQ(a.parameter_count(), tiny_config().parameter_count());
}

TEST(Model, FromParametersChecksLayout) {
    auto params = Model<float>::create(tiny_config(), 1).parameters();
    params.pop_back();
    EXPECT_THROW(Model<float>::from_parameters(tiny_config(), params), Error);
}

TEST(Attention, HandComputedTwoByTwo) {
    const auto eye = TD::from({2, 2}, {1, 0, 0, 1});
    const std::vector<std::uint8_t> pad(2, 0);
    const auto r = scaled_dot_attention(eye, eye, eye, pad, 0.0, Mode::eval, nullptr);
    const std::vector<double> want{0.6698, 0.3302, 0.3302, 0.6698};
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.weights[i], want[i], 1e-4);
        EXPECT_NEAR(r.output[i], want[i], 1e-4);
    }
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
    const auto q = random_tensor({4, 3}, 1);
    std::vector<double> krow{0.3, -1.0, 2.0}, k;
    for (int i = 0; i < 4; ++i) k.insert(k.end(), krow.begin(), krow.end());
    const auto v = random_tensor({4, 3}, 2);
    const std::vector<std::uint8_t> pad(4, 0);
    const auto r = scaled_dot_attention(q, TD::from({4, 3}, k), v, pad, 0.0, Mode::eval, nullptr);
    for (double w : r.weights.data()) EXPECT_NEAR(w, 0.25, 1e-12);
}

TEST(Attention, RowsStochasticAndPaddingIgnored) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto q = random_tensor({5, 4}, 10 + s, 2.0);
        const auto k = random_tensor({5, 4}, 40 + s, 2.0);
        const auto v = random_tensor({5, 4}, 70 + s);
        const std::vector<std::uint8_t> pad{0, 0, 0, 1, 1};
        const auto r = scaled_dot_attention(q, k, v, pad, 0.0, Mode::eval, nullptr);
        for (std::size_t i = 0; i < 5; ++i) {
            double total = 0;
            for (std::size_t j = 0; j < 5; ++j) {
                const double w = r.weights.at(i, j);
                EXPECT_GE(w, 0.0);
                if (j >= 3) {
                    EXPECT_EQ(w, 0.0);
                }
                total += w;
            }
            EXPECT_NEAR(total, 1.0, 1e-6);
        }
    }
}

TEST(Attention, ShapeMismatch) {
    const std::vector<std::uint8_t> pad(3, 0);
    EXPECT_THROW(scaled_dot_attention(TD::zeros({3, 2}), TD::zeros({3, 4}), TD::zeros({3, 2}), pad, 0.0,
                                      Mode::eval, nullptr),
                 ShapeError);
}

LayerWeights<double> random_layer(std::size_t d, std::size_t f, std::uint64_t seed, bool identity_output) {
    LayerWeights<double> w;
    w.query_weight = random_tensor({d, d}, seed + 1, 0.5, true);
    w.key_weight = random_tensor({d, d}, seed + 2, 0.5, true);
    w.value_weight = random_tensor({d, d}, seed + 3, 0.5, true);
    w.query_bias = random_tensor({d}, seed + 4, 0.1, true);
    w.key_bias = random_tensor({d}, seed + 5, 0.1, true);
    w.value_bias = random_tensor({d}, seed + 6, 0.1, true);
    if (identity_output) {
        std::vector<double> eye(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
        w.output_weight = TD::from({d, d}, eye, true);
        w.output_bias = TD::zeros({d}, true);
    } else {
        w.output_weight = random_tensor({d, d}, seed + 7, 0.5, true);
        w.output_bias = random_tensor({d}, seed + 8, 0.1, true);
    }
    w.attention_norm_gamma = TD::full({d}, 1.0, true);
    w.attention_norm_beta = TD::zeros({d}, true);
    w.ffn_in_weight = random_tensor({d, f}, seed + 9, 0.5, true);
    w.ffn_in_bias = TD::zeros({f}, true);
    w.ffn_out_weight = random_tensor({f, d}, seed + 10, 0.5, true);
    w.ffn_out_bias = TD::zeros({d}, true);
    w.ffn_norm_gamma = TD::full({d}, 1.0, true);
    w.ffn_norm_beta = TD::zeros({d}, true);
    return w;
}

TEST(MultiHead, SingleHeadReduction) {
    const std::size_t t = 4, d = 3;
    const auto w = random_layer(d, 5, 100, true);
    const auto x = random_tensor({t, d}, 7);
    const std::vector<std::uint8_t> pad(t, 0);
    const auto mha = multi_head_attention(x, w, 1, 1, t, pad, 0.0, Mode::eval, nullptr);
    const auto q = num::add_bias(num::matmul(x, w.query_weight), w.query_bias);
    const auto k = num::add_bias(num::matmul(x, w.key_weight), w.key_bias);
    const auto v = num::add_bias(num::matmul(x, w.value_weight), w.value_bias);
    const auto ref = scaled_dot_attention(q, k, v, pad, 0.0, Mode::eval, nullptr).output;
    ASSERT_EQ(mha.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(mha[i], ref[i], 1e-12);
}

TEST(MultiHead, OutputShapeAndSequenceIsolation) {
    const std::size_t t = 3, d = 4;
    const auto w = random_layer(d, 6, 200, false);
    const auto x = random_tensor({2 * t, d}, 8);
    const std::vector<std::uint8_t> pad(2 * t, 0);
    const auto both = multi_head_attention(x, w, 2, 2, t, pad, 0.0, Mode::eval, nullptr);
    EXPECT_EQ(both.shape(), (num::Shape{2 * t, d}));
    const auto first = multi_head_attention(num::slice(x, 0, t, 0, d), w, 2, 1, t,
                                            std::span<const std::uint8_t>(pad).subspan(0, t), 0.0, Mode::eval,
                                            nullptr);
    for (std::size_t i = 0; i < t * d; ++i) EXPECT_NEAR(both[i], first[i], 1e-12);
}

TEST(MultiHead, GradientsThroughAllHeads) {
    const std::size_t t = 3, d = 4;
    auto w = random_layer(d, 6, 300, false);
    auto x = random_tensor({t, d}, 9, 1.0, true);
    const std::vector<std::uint8_t> pad{0, 0, 1};
    const auto probe = random_tensor({t, d}, 10);
    auto f = [&] {
        return num::sum(num::mul(multi_head_attention(x, w, 2, 1, t, pad, 0.0, Mode::eval, nullptr), probe));
    };
    num::backward(f());
    for (TD* p : {&x, &w.query_weight, &w.key_weight, &w.value_weight, &w.output_weight, &w.key_bias}) {
        const double floor = num::roundoff_floor(f().item(), 1e-4, 1e-6);
        const auto r = num::finite_diff_check([&] { return f().item(); }, *p, {1e-4, 1e-6, 20, 0, floor});
        EXPECT_TRUE(r.passed) << r.max_relative_error;
    }
}

TEST(FeedForward, ScalarCase) {
    const auto y = feed_forward(TD::from({1, 1}, {1.0}), TD::from({1, 1}, {2.0}), TD::zeros({1}),
                                TD::from({1, 1}, {1.0}), TD::zeros({1}));
    EXPECT_NEAR(y[0], 1.9545, 1e-4);
}

TEST(FeedForward, ZeroWeightsGiveBias) {
    const auto b2 = TD::from({3}, {0.5, -1, 2});
    const auto y = feed_forward(random_tensor({4, 3}, 1), TD::zeros({3, 5}), random_tensor({5}, 2),
                                TD::zeros({5, 3}), b2);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(r, c), b2[c]);
}

TEST(FeedForward, PositionWise) {
    const auto w1 = random_tensor({3, 5}, 3), b1 = random_tensor({5}, 4);
    const auto w2 = random_tensor({5, 3}, 5), b2 = random_tensor({3}, 6);
    const auto x = random_tensor({4, 3}, 7);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<double> px;
    for (std::size_t r : perm)
        for (std::size_t c = 0; c < 3; ++c) px.push_back(x.at(r, c));
    const auto y = feed_forward(x, w1, b1, w2, b2);
    const auto py = feed_forward(TD::from({4, 3}, px), w1, b1, w2, b2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(py.at(i, c), y.at(perm[i], c));
}

TEST(Forward, ShapeAndEvalDeterminism) {
    const auto m = Model<float>::create(tiny_config(), 3);
    const auto batch = random_batch(tiny_config(), 2, 5, 4);
    const auto a = m.forward(batch, Mode::eval);
    const auto b = m.forward(batch, Mode::eval);
    EXPECT_EQ(a.shape(), (num::Shape{10, 12}));
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Forward, TrainModeDropoutSeeded) {
    const auto m = Model<float>::create(tiny_config(), 3);
    const auto batch = random_batch(tiny_config(), 2, 5, 4);
    Rng r1(9), r2(9);
    const auto a = m.forward(batch, Mode::train, &r1);
    const auto b = m.forward(batch, Mode::train, &r2);
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    const auto e = m.forward(batch, Mode::eval);
    EXPECT_FALSE(std::equal(a.data().begin(), a.data().end(), e.data().begin()));
}

TEST(Forward, PositionEmbeddingsBreakSymmetry) {
    const auto m = Model<double>::create(tiny_config(), 11);
    const TokenBatch ab{1, 2, {6, 7}, {0, 0}};
    const TokenBatch ba{1, 2, {7, 6}, {0, 0}};
    const auto la = m.forward(ab, Mode::eval);
    const auto lb = m.forward(ba, Mode::eval);
    double diff = 0;
    for (std::size_t c = 0; c < 12; ++c) {
        diff += std::abs(la.at(0, c) - lb.at(1, c));
    }
    EXPECT_GT(diff, 1e-9);
}

TEST(Forward, Errors) {
    const auto m = Model<float>::create(tiny_config(), 3);
    EXPECT_THROW(m.forward(random_batch(tiny_config(), 1, 7, 1), Mode::eval), Error);
    const TokenBatch bad{1, 2, {1, 12}, {0, 0}};
    EXPECT_THROW(m.forward(bad, Mode::eval), Error);
}

TEST(Forward, AttentionTraceRowStochastic) {
    const auto m = Model<float>::create(tiny_config(), 3);
    TokenBatch batch = random_batch(tiny_config(), 2, 6, 4);
    batch.pad[5] = 1;
    AttentionTrace<float> trace;
    m.forward(batch, Mode::eval, nullptr, &trace);
    ASSERT_EQ(trace.weights.size(), 2u);
    ASSERT_EQ(trace.weights[0].size(), 4u);
    for (const auto& layer : trace.weights) {
        for (const auto& w : layer) {
            for (std::size_t r = 0; r < w.rows(); ++r) {
                double total = 0;
                for (std::size_t c = 0; c < w.cols(); ++c) total += w.at(r, c);
                EXPECT_NEAR(total, 1.0, 1e-6);
            }
        }
    }
}

TEST(Forward, FullModelGradientCheckDouble) {
    ModelConfig c = tiny_config();
    c.dropout = 0.0;
    c.attention_dropout = 0.0;
    auto m = Model<double>::create(c, 21);
    std::vector<Block> blocks{{{6, 7, 8, 9, 10, 3}, {0, 0, 0, 0, 0, 0}}, {{11, 6, 3, 0, 0, 0}, {0, 0, 0, 1, 1, 1}}};
    const MaskedBatch batch = mask_batch(blocks, {0.5, MaskStrategy::pure, c.vocab_size}, 3);
    auto loss = [&] { return mlm_loss(m.forward(batch, Mode::eval), batch); };
    m.zero_grad();
    num::backward(loss());
    for (auto p : m.parameters()) {
        const double floor = num::roundoff_floor(loss().item(), 1e-5, 1e-6);
        const auto r = num::finite_diff_check([&] { return loss().item(); }, p.tensor, {1e-5, 1e-6, 20, 5, floor});
        EXPECT_TRUE(r.passed) << p.name << " " << r.max_relative_error;
    }
}

TEST(Ranking, TopKTiesByAscendingId) {
    const std::vector<double> p{0.1, 0.3, 0.3, 0.2, 0.1};
    EXPECT_EQ(top_k(p, 3), (std::vector<TokenId>{1, 2, 3}));
    EXPECT_EQ(rank_of(p, 2), 2u);
    EXPECT_EQ(rank_of(p, 4), 5u);
    EXPECT_EQ(rank_of(p, 0), 4u);
}

TEST(Ranking, SoftmaxDistributionSumsToOne) {
    const std::vector<float> logits{1.0f, 2.0f, -3.0f, 0.5f};
    const auto p = softmax_distribution(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
}

TEST(TokenPerplexity, HalfGivesTwo) {
    EXPECT_DOUBLE_EQ(token_perplexity(0.5), 2.0);
    EXPECT_DOUBLE_EQ(std::exp(-std::log(0.5)), 2.0);
}

}  // namespace
}  // namespace mlmkit
