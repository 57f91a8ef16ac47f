#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "mlmkit/error.hpp"
#include "mlmkit/grad_check.hpp"
#include "mlmkit/ops.hpp"
#include "mlmkit/random.hpp"
#include "mlmkit/tensor.hpp"

namespace mlmkit::num {
namespace {

using TD = Tensor<double>;
using TF = Tensor<float>;

TD random_tensor(Shape shape, std::uint64_t seed, bool grad = true) {
    Rng rng(seed);
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng.normal();
    return TD::from(std::move(shape), std::move(v), grad);
}

std::vector<double> values(const TD& t) { return {t.data().begin(), t.data().end()}; }

TEST(Tensor, ShapeRules) {
    EXPECT_THROW(TD::from({2, 2}, {1, 2, 3}), ShapeError);
    const auto t = TD::zeros({3, 4});
    EXPECT_EQ(t.numel(), 12u);
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.cols(), 4u);
}

TEST(MatMul, Small) {
    const auto a = TD::from({2, 2}, {1, 2, 3, 4});
    const auto b = TD::from({2, 2}, {5, 6, 7, 8});
    EXPECT_EQ(values(matmul(a, b)), (std::vector<double>{19, 22, 43, 50}));
}

TEST(MatMul, Identity) {
    const auto a = random_tensor({3, 3}, 1, false);
    const auto eye = TD::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_EQ(values(matmul(a, eye)), values(a));
}

TEST(MatMul, ShapeMismatch) {
    EXPECT_THROW(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), ShapeError);
}

TEST(MatMul, NtMatchesExplicitTranspose) {
    const auto a = random_tensor({3, 4}, 2, false);
    const auto b = random_tensor({5, 4}, 3, false);
    std::vector<double> bt(20);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) bt[j * 5 + i] = b[i * 4 + j];
    const auto ref = matmul(a, TD::from({4, 5}, bt));
    const auto got = matmul_nt(a, b);
    for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

TEST(MatMul, GradientOfSumIsColumnSumsOfB) {
    auto a = random_tensor({2, 3}, 4);
    const auto b = random_tensor({3, 2}, 5, false);
    backward(sum(matmul(a, b)));
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(a.grad()[i * 3 + k], b[k * 2] + b[k * 2 + 1], 1e-12);
        }
    }
    const auto report = finite_diff_check([&] { return sum(matmul(a, b)).item(); }, a);
    EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(Softmax, Examples) {
    EXPECT_EQ(values(softmax_rows(TD::from({1, 2}, {0, 0}))), (std::vector<double>{0.5, 0.5}));
    const auto big = softmax_rows(TD::from({1, 2}, {1000, 0}));
    EXPECT_NEAR(big[0], 1.0, 1e-12);
    EXPECT_NEAR(big[1], 0.0, 1e-12);
    EXPECT_TRUE(std::isfinite(big[1]));
    const auto s = softmax_rows(TD::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
    EXPECT_NEAR(s[0], 1.0 / 6, 1e-12);
    EXPECT_NEAR(s[1], 2.0 / 6, 1e-12);
    EXPECT_NEAR(s[2], 3.0 / 6, 1e-12);
}

TEST(Softmax, RowsSumToOneAndPositive) {
    const auto x = random_tensor({50, 17}, 6, false);
    const auto s = softmax_rows(scale(x, 5.0));
    for (std::size_t r = 0; r < 50; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 17; ++c) {
            EXPECT_GT(s.at(r, c), 0.0);
            total += s.at(r, c);
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(Softmax, Gradient) {
    auto x = random_tensor({3, 4}, 7);
    const auto w = random_tensor({3, 4}, 8, false);
    backward(sum(mul(softmax_rows(x), w)));
    EXPECT_TRUE(finite_diff_check([&] { return sum(mul(softmax_rows(x), w)).item(); }, x).passed);
}

TEST(Gelu, Values) {
    EXPECT_EQ(gelu(TD::from({1}, {0.0}))[0], 0.0);
    EXPECT_NEAR(gelu(TD::from({1}, {2.0}))[0], 1.9545, 1e-4);
    EXPECT_NEAR(2.0 * normal_cdf(2.0), 1.9545, 1e-4);
    EXPECT_LT(std::abs(gelu(TD::from({1}, {-10.0}))[0]), 1e-8);
}

TEST(Gelu, Gradient) {
    auto x = random_tensor({10}, 9);
    backward(sum(gelu(x)));
    EXPECT_TRUE(finite_diff_check([&] { return sum(gelu(x)).item(); }, x).passed);
}

TEST(LayerNorm, Values) {
    const auto one = TD::full({3}, 1.0);
    const auto zero = TD::zeros({3});
    const auto y = layer_norm(TD::from({1, 3}, {1, 2, 3}), one, zero, 0.0);
    EXPECT_NEAR(y[0], -1.2247, 1e-4);
    EXPECT_NEAR(y[1], 0.0, 1e-12);
    EXPECT_NEAR(y[2], 1.2247, 1e-4);
    const auto c = layer_norm(TD::from({1, 3}, {5, 5, 5}), one, zero, 1e-5);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(c[i], 0.0, 1e-9);
    const auto beta = TD::from({3}, {0.5, -1.0, 2.0});
    const auto b = layer_norm(random_tensor({2, 3}, 1, false), TD::zeros({3}), beta, 1e-5);
    for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 3; ++k) EXPECT_EQ(b.at(r, k), beta[k]);
}

TEST(LayerNorm, ShapeMismatch) {
    EXPECT_THROW(layer_norm(TD::zeros({2, 3}), TD::zeros({4}), TD::zeros({4}), 1e-5), ShapeError);
}

TEST(LayerNorm, Gradient) {
    auto x = random_tensor({3, 5}, 10);
    auto g = random_tensor({5}, 11);
    auto b = random_tensor({5}, 12);
    const auto w = random_tensor({3, 5}, 13, false);
    auto f = [&] { return sum(mul(layer_norm(x, g, b, 1e-5), w)); };
    backward(f());
    for (TD* t : {&x, &g, &b}) {
        EXPECT_TRUE(finite_diff_check([&] { return f().item(); }, *t).passed);
    }
}

TEST(Embedding, DuplicateLookupAndAccumulation) {
    auto table = random_tensor({4, 3}, 14);
    const std::vector<std::int32_t> ids{0, 0};
    const auto out = embedding_gather(table, std::span<const std::int32_t>(ids));
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(out.at(0, k), table.at(0, k));
        EXPECT_EQ(out.at(1, k), table.at(0, k));
    }
    backward(sum(out));
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(table.grad()[k], 2.0);
        EXPECT_EQ(table.grad()[3 + k], 0.0);
    }
}

TEST(Embedding, OutOfRange) {
    const std::vector<std::int32_t> ids{4};
    EXPECT_THROW(embedding_gather(TD::zeros({4, 3}), std::span<const std::int32_t>(ids)), Error);
}

TEST(CrossEntropy, UniformLogitsGiveLnV) {
    const std::vector<Target> t{{0, 1}, {1, 3}};
    EXPECT_NEAR(cross_entropy_masked(TD::zeros({2, 4}), std::span<const Target>(t)).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, DominantLogitApproachesZero) {
    const std::vector<Target> t{{0, 2}};
    EXPECT_LT(cross_entropy_masked(TD::from({1, 3}, {0, 0, 60}), std::span<const Target>(t)).item(), 1e-20);
}

TEST(CrossEntropy, AveragesOverLabels) {
    const auto logits = random_tensor({3, 5}, 15, false);
    const std::vector<Target> ta{{0, 1}}, tb{{2, 4}}, both{{0, 1}, {2, 4}};
    const double a = cross_entropy_masked(logits, std::span<const Target>(ta)).item();
    const double b = cross_entropy_masked(logits, std::span<const Target>(tb)).item();
    EXPECT_NEAR(cross_entropy_masked(logits, std::span<const Target>(both)).item(), (a + b) / 2, 1e-12);
}

TEST(CrossEntropy, EmptyLabelsIsError) {
    EXPECT_THROW(cross_entropy_masked(TD::zeros({2, 4}), std::span<const Target>()), Error);
}

TEST(CrossEntropy, GradientOnlyAtLabeledRows) {
    auto logits = random_tensor({3, 4}, 16);
    const std::vector<Target> t{{1, 2}};
    backward(cross_entropy_masked(logits, std::span<const Target>(t)));
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(logits.grad()[c], 0.0);
        EXPECT_EQ(logits.grad()[8 + c], 0.0);
    }
    EXPECT_TRUE(finite_diff_check([&] { return cross_entropy_masked(logits, std::span<const Target>(t)).item(); },
                                  logits)
                    .passed);
}

TEST(Dropout, EvalIsIdentity) {
    const auto x = random_tensor({10, 10}, 17, false);
    EXPECT_EQ(values(dropout(x, 0.5, Mode::eval, std::uint64_t{1})), values(x));
    EXPECT_EQ(values(dropout(x, 0.0, Mode::train, std::uint64_t{1})), values(x));
}

TEST(Dropout, ZeroFractionAndScaling) {
    const auto x = TD::full({1000, 1000}, 1.0);
    const auto y = dropout(x, 0.1, Mode::train, std::uint64_t{18});
    std::size_t zeros = 0;
    for (double v : y.data()) {
        if (v == 0.0) {
            ++zeros;
        } else {
            ASSERT_NEAR(v, 1.0 / 0.9, 1e-12);
        }
    }
    const double frac = static_cast<double>(zeros) / 1e6;
    EXPECT_GE(frac, 0.097);
    EXPECT_LE(frac, 0.103);
}

TEST(Dropout, SeededAndRangeChecked) {
    const auto x = random_tensor({20, 20}, 19, false);
    EXPECT_EQ(values(dropout(x, 0.3, Mode::train, std::uint64_t{5})),
              values(dropout(x, 0.3, Mode::train, std::uint64_t{5})));
    EXPECT_THROW(dropout(x, 1.0, Mode::train, std::uint64_t{5}), Error);
    EXPECT_THROW(dropout(x, -0.1, Mode::train, std::uint64_t{5}), Error);
}

TEST(Backward, SumOfSquares) {
    auto x = TD::from({3}, {1, 2, 3}, true);
    backward(sum(mul(x, x)));
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, UnusedParameterHasZeroGrad) {
    auto x = TD::from({2}, {1, 2}, true);
    auto unused = TD::from({2}, {3, 4}, true);
    backward(sum(x));
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
    auto x = TD::from({2}, {1, 2}, true);
    backward(sum(x));
    backward(sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 2.0);
    x.zero_grad();
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SharedInputAccumulates) {
    auto x = TD::from({2}, {1, 2}, true);
    backward(sum(add(x, x)));
    for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, NonScalarRootIsError) {
    auto x = TD::from({2}, {1, 2}, true);
    EXPECT_THROW(backward(scale(x, 2.0)), ShapeError);
}

TEST(ComputeGraph, TopologicalOrder) {
    auto x = TD::from({2}, {1, 2}, true);
    const auto y = scale(x, 3.0);
    const auto z = sum(mul(y, x));
    const auto g = ComputeGraph<double>::trace(z);
    ASSERT_EQ(g.nodes().back(), z.node());
    std::size_t pos_x = 0, pos_y = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.nodes()[i] == x.node()) pos_x = i;
        if (g.nodes()[i] == y.node()) pos_y = i;
    }
    EXPECT_LT(pos_x, pos_y);
}

TEST(OpsFloat, RepeatedForwardBitIdentical) {
    Rng rng(20);
    std::vector<float> v(64);
    for (float& f : v) f = static_cast<float>(rng.normal());
    const auto a = TF::from({8, 8}, v);
    const auto r1 = softmax_rows(gelu(matmul(a, a)));
    const auto r2 = softmax_rows(gelu(matmul(a, a)));
    EXPECT_TRUE(std::equal(r1.data().begin(), r1.data().end(), r2.data().begin()));
}

TEST(SliceConcat, RoundTripAndGradient) {
    auto x = random_tensor({4, 6}, 21);
    const auto left = slice(x, 0, 4, 0, 2);
    const auto right = slice(x, 0, 4, 2, 4);
    const std::vector<TD> parts{left, right};
    EXPECT_EQ(values(concat_cols(std::span<const TD>(parts))), values(x));
    const auto top = slice(x, 0, 1, 0, 6);
    const auto rest = slice(x, 1, 3, 0, 6);
    const std::vector<TD> rows{top, rest};
    EXPECT_EQ(values(concat_rows(std::span<const TD>(rows))), values(x));
    const auto w = random_tensor({4, 6}, 22, false);
    auto f = [&] {
        const std::vector<TD> p{slice(x, 0, 4, 3, 3), slice(x, 0, 4, 0, 3)};
        return sum(mul(concat_cols(std::span<const TD>(p)), w));
    };
    backward(f());
    EXPECT_TRUE(finite_diff_check([&] { return f().item(); }, x).passed);
}

TEST(AddConstant, MinusInfinityAllowed) {
    const auto x = TD::zeros({1, 2});
    const std::vector<double> c{0.0, -std::numeric_limits<double>::infinity()};
    const auto s = softmax_rows(add_constant(x, std::span<const double>(c)));
    EXPECT_EQ(s[0], 1.0);
    EXPECT_EQ(s[1], 0.0);
}

TEST(FiniteDiff, SumOfSquaresSelfTest) {
    auto x = TD::from({3}, {1, 2, 3}, true);
    const std::vector<double> analytic{2, 4, 6};
    const auto r = finite_diff_check([&] { return sum(mul(x, x)).item(); }, x, analytic);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_relative_error, 1e-6);
    EXPECT_EQ(r.coordinates.size(), 3u);
}

TEST(FiniteDiff, ConstantFunctionPasses) {
    auto x = TD::from({3}, {1, 2, 3}, true);
    const std::vector<double> analytic{0, 0, 0};
    const auto r = finite_diff_check([] { return 4.0; }, x, analytic);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(FiniteDiff, WrongGradientFlagged) {
    auto x = TD::from({3}, {1, 2, 3}, true);
    const std::vector<double> wrong{2, 4, 7};
    const auto r = finite_diff_check([&] { return sum(mul(x, x)).item(); }, x, wrong);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.failed_indices(), (std::vector<std::size_t>{2}));
}

TEST(FiniteDiff, FloorBoundsRelativeErrorOfTinyGradients) {
    EXPECT_DOUBLE_EQ(relative_error(1e-12, 2e-12), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(1e-12, 2e-12, 1e-3), 1e-9);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-3), 0.5);
    EXPECT_NEAR(roundoff_floor(1.0, 1e-4, 1e-6), 10 * 2.220446049250313e-16 / 1e-10, 1e-20);
}

TEST(FiniteDiff, FivePointStencilRemovesCubicBias) {
    auto x = TD::from({3}, {1, 2, 3}, true);
    const std::vector<double> analytic{3, 12, 27};
    auto f = [&] { return sum(mul(mul(x, x), x)).item(); };
    GradCheckOptions two{1e-2, 1e-9};
    const auto r2 = finite_diff_check(f, x, analytic, two);
    for (const auto& c : r2.coordinates) EXPECT_NEAR(c.numeric - c.analytic, 1e-4, 1e-9);
    GradCheckOptions five = two;
    five.stencil = Stencil::five_point;
    const auto r5 = finite_diff_check(f, x, analytic, five);
    EXPECT_TRUE(r5.passed) << r5.max_relative_error;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(r5.coordinates[i].two_point, r2.coordinates[i].numeric);
}

TEST(FiniteDiff, NonDeterministicFunctionRejected) {
    auto x = TD::from({2}, {1, 2}, true);
    int calls = 0;
    const std::vector<double> analytic{0, 0};
    EXPECT_THROW(finite_diff_check([&] { return static_cast<double>(++calls); }, x, analytic), Error);
}

TEST(FiniteDiff, SamplesWithoutReplacement) {
    const auto idx = sample_coordinates(100, 20, 3);
    EXPECT_EQ(idx.size(), 20u);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
    EXPECT_EQ(sample_coordinates(5, 20, 3).size(), 5u);
}

TEST(RelativeError, Definition) {
    EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
}

}  // namespace
}  // namespace mlmkit::num
