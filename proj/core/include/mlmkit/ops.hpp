#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mlmkit/random.hpp"
#include "mlmkit/tensor.hpp"

namespace mlmkit::num {

enum class Mode : std::uint8_t { train, eval };

/// One supervised row of a logits matrix.
struct Target {
    std::size_t position;
    std::int32_t id;
};

// All ops build graph nodes when any input requires a gradient.
// Matrices are rank 2; bias/gain vectors are rank 1.

/// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// [m x k] * [n x k]^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Adds bias [n] to every row of x [m x n].
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// Adds a constant (non-differentiable) tensor of the same shape, e.g. an additive mask.
template <typename T>
Tensor<T> add_constant(const Tensor<T>& x, std::span<const T> constant);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Row-wise softmax over the last dimension, max-subtracted.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Per-row (x - mean) / sqrt(var + eps) * gamma + beta with population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

/// Rows of `table` [V x d] selected by `ids`; duplicate ids accumulate in backward.
template <typename T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::int32_t> ids);

/// -(1/M) * sum_k log softmax(logits[pos_k])[id_k].
template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits, std::span<const Target> targets);

/// Inverted dropout. Eval mode and p == 0 return x unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, std::uint64_t seed) {
    Rng rng(seed);
    return dropout(x, p, mode, rng);
}

/// Rows [row0, row0 + nrows) x cols [col0, col0 + ncols) of a matrix.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols);

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

/// Standard normal CDF and the exact GELU scalar.
double normal_cdf(double x);
double gelu_scalar(double x);

}  // namespace mlmkit::num
