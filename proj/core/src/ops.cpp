#include "mlmkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mlmkit/error.hpp"

namespace mlmkit::num {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_node(Shape shape, const char* op, std::initializer_list<NodePtr<T>> inputs) {
    auto node = std::make_shared<Node<T>>();
    node->value.assign(numel(shape), T(0));
    node->shape = std::move(shape);
    node->op = op;
    for (const auto& in : inputs) {
        if (in->requires_grad) {
            node->requires_grad = true;
        }
    }
    if (node->requires_grad) {
        node->inputs.assign(inputs.begin(), inputs.end());
    }
    return node;
}

template <typename T>
Tensor<T> finish(NodePtr<T> node, bool allow_infinite = false) {
    if (nan_checks_enabled()) {
        for (T v : node->value) {
            if (std::isnan(v) || (!allow_infinite && std::isinf(v))) {
                throw std::runtime_error(std::string("non-finite value produced by ") + node->op);
            }
        }
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
    if (x.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(x.shape()));
    }
}

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a + p * m;
        const T* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = ap[i];
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

template <typename T>
std::vector<T> transposed(const T* b, std::size_t rows, std::size_t cols) {
    std::vector<T> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            t[c * rows + r] = b[r * cols + c];
        }
    }
    return t;
}

// C[m x n] += A[m x k] * B[n x k]^T, via an explicit transpose so the inner loop streams.
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    const std::vector<T> bt = transposed(b, n, k);
    gemm_nn(m, k, n, a, bt.data(), c);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu_scalar(double x) { return x * normal_cdf(x); }

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    auto out = make_node<T>({m, n}, "matmul", {a.node_ptr(), b.node_ptr()});
    gemm_nn(m, k, n, a.data().data(), b.data().data(), out->value.data());
    if (out->requires_grad) {
        out->backward = [m, k, n](Node<T>& self) {
            Node<T>& A = *self.inputs[0];
            Node<T>& B = *self.inputs[1];
            if (A.requires_grad) {
                gemm_nt(m, n, k, self.grad.data(), B.value.data(), A.grad.data());
            }
            if (B.requires_grad) {
                gemm_tn(k, m, n, A.value.data(), self.grad.data(), B.grad.data());
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw ShapeError("matmul_nt: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + "^T");
    }
    auto out = make_node<T>({m, n}, "matmul_nt", {a.node_ptr(), b.node_ptr()});
    gemm_nt(m, k, n, a.data().data(), b.data().data(), out->value.data());
    if (out->requires_grad) {
        out->backward = [m, k, n](Node<T>& self) {
            Node<T>& A = *self.inputs[0];
            Node<T>& B = *self.inputs[1];
            if (A.requires_grad) {
                gemm_nn(m, n, k, self.grad.data(), B.value.data(), A.grad.data());
            }
            if (B.requires_grad) {
                gemm_tn(n, m, k, self.grad.data(), A.value.data(), B.grad.data());
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    auto out = make_node<T>(a.shape(), "add", {a.node_ptr(), b.node_ptr()});
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) {
        out->value[i] = av[i] + bv[i];
    }
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            for (int s = 0; s < 2; ++s) {
                Node<T>& in = *self.inputs[s];
                if (in.requires_grad) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i) {
                        in.grad[i] += self.grad[i];
                    }
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require_matrix(x, "add_bias");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (bias.numel() != n) {
        throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " for " + to_string(x.shape()));
    }
    auto out = make_node<T>(x.shape(), "add_bias", {x.node_ptr(), bias.node_ptr()});
    const auto xv = x.data(), bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out->value[i * n + j] = xv[i * n + j] + bv[j];
        }
    }
    if (out->requires_grad) {
        out->backward = [m, n](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            Node<T>& B = *self.inputs[1];
            if (X.requires_grad) {
                for (std::size_t i = 0; i < m * n; ++i) {
                    X.grad[i] += self.grad[i];
                }
            }
            if (B.requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        B.grad[j] += self.grad[i * n + j];
                    }
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> add_constant(const Tensor<T>& x, std::span<const T> constant) {
    if (constant.size() != x.numel()) {
        throw ShapeError("add_constant: size mismatch for " + to_string(x.shape()));
    }
    auto out = make_node<T>(x.shape(), "add_constant", {x.node_ptr()});
    const auto xv = x.data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out->value[i] = xv[i] + constant[i];
    }
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                X.grad[i] += self.grad[i];
            }
        };
    }
    // Additive masks carry -inf by design.
    return finish(out, true);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    auto out = make_node<T>(a.shape(), "mul", {a.node_ptr(), b.node_ptr()});
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) {
        out->value[i] = av[i] * bv[i];
    }
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            Node<T>& A = *self.inputs[0];
            Node<T>& B = *self.inputs[1];
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                if (A.requires_grad) {
                    A.grad[i] += self.grad[i] * B.value[i];
                }
                if (B.requires_grad) {
                    B.grad[i] += self.grad[i] * A.value[i];
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    auto out = make_node<T>(x.shape(), "scale", {x.node_ptr()});
    const auto xv = x.data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out->value[i] = xv[i] * factor;
    }
    if (out->requires_grad) {
        out->backward = [factor](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                X.grad[i] += self.grad[i] * factor;
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    auto out = make_node<T>({1}, "sum", {x.node_ptr()});
    T acc = 0;
    for (T v : x.data()) {
        acc += v;
    }
    out->value[0] = acc;
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (T& g : X.grad) {
                g += self.grad[0];
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    const std::size_t n = x.cols();
    const std::size_t rows = x.numel() / n;
    auto out = make_node<T>(x.shape(), "softmax_rows", {x.node_ptr()});
    const auto xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * n;
        T* yr = out->value.data() + r * n;
        const T mx = *std::max_element(xr, xr + n);
        T total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] *= inv;
        }
    }
    if (out->requires_grad) {
        out->backward = [rows, n](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.value.data() + r * n;
                const T* dy = self.grad.data() + r * n;
                T dot = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    dot += dy[j] * y[j];
                }
                T* dx = X.grad.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) {
                    dx[j] += y[j] * (dy[j] - dot);
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    auto out = make_node<T>(x.shape(), "gelu", {x.node_ptr()});
    const auto xv = x.data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out->value[i] = static_cast<T>(gelu_scalar(static_cast<double>(xv[i])));
    }
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684758586311649;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double v = static_cast<double>(X.value[i]);
                const double d = normal_cdf(v) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
                X.grad[i] += self.grad[i] * static_cast<T>(d);
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    const std::size_t d = x.cols();
    const std::size_t rows = x.numel() / d;
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("layer_norm: gamma/beta " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                         " for " + to_string(x.shape()));
    }
    auto out = make_node<T>(x.shape(), "layer_norm", {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()});
    std::vector<T> xhat(x.numel());
    std::vector<T> rstd(rows);
    const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * d;
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) {
            mean += xr[j];
        }
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
        rstd[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            out->value[r * d + j] = h * gv[j] + bv[j];
        }
    }
    if (out->requires_grad) {
        out->backward = [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            Node<T>& G = *self.inputs[1];
            Node<T>& B = *self.inputs[2];
            std::vector<T> dh(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* dy = self.grad.data() + r * d;
                const T* h = xhat.data() + r * d;
                if (G.requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) {
                        G.grad[j] += dy[j] * h[j];
                    }
                }
                if (B.requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) {
                        B.grad[j] += dy[j];
                    }
                }
                if (X.requires_grad) {
                    T mean_dh = 0, mean_dh_h = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        dh[j] = dy[j] * G.value[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * h[j];
                    }
                    mean_dh /= static_cast<T>(d);
                    mean_dh_h /= static_cast<T>(d);
                    T* dx = X.grad.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        dx[j] += rstd[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                    }
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> embedding_gather(const Tensor<T>& table, std::span<const std::int32_t> ids) {
    require_matrix(table, "embedding_gather");
    const std::size_t v = table.dim(0), d = table.dim(1);
    if (ids.empty()) {
        throw ShapeError("embedding_gather: no ids");
    }
    for (std::int32_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw Error("embedding id " + std::to_string(id) + " out of range for table of " + std::to_string(v) +
                        " rows");
        }
    }
    auto out = make_node<T>({ids.size(), d}, "embedding_gather", {table.node_ptr()});
    const auto tv = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out->value.data() + i * d);
    }
    if (out->requires_grad) {
        out->backward = [d, ids = std::vector<std::int32_t>(ids.begin(), ids.end())](Node<T>& self) {
            Node<T>& W = *self.inputs[0];
            for (std::size_t i = 0; i < ids.size(); ++i) {
                T* row = W.grad.data() + static_cast<std::size_t>(ids[i]) * d;
                const T* g = self.grad.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) {
                    row[j] += g[j];
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits, std::span<const Target> targets) {
    require_matrix(logits, "cross_entropy_masked");
    const std::size_t t = logits.dim(0), v = logits.dim(1);
    if (targets.empty()) {
        throw Error("cross_entropy_masked: no labeled positions");
    }
    for (const Target& tg : targets) {
        if (tg.position >= t || tg.id < 0 || static_cast<std::size_t>(tg.id) >= v) {
            throw ShapeError("cross_entropy_masked: label (" + std::to_string(tg.position) + ", " +
                             std::to_string(tg.id) + ") outside logits " + to_string(logits.shape()));
        }
    }
    const std::size_t m = targets.size();
    auto out = make_node<T>({1}, "cross_entropy_masked", {logits.node_ptr()});
    std::vector<T> probs(m * v);
    const auto lv = logits.data();
    double total = 0;
    for (std::size_t k = 0; k < m; ++k) {
        const T* row = lv.data() + targets[k].position * v;
        const T mx = *std::max_element(row, row + v);
        double z = 0;
        for (std::size_t j = 0; j < v; ++j) {
            z += std::exp(static_cast<double>(row[j] - mx));
        }
        const double log_z = std::log(z) + static_cast<double>(mx);
        total += log_z - static_cast<double>(row[static_cast<std::size_t>(targets[k].id)]);
        for (std::size_t j = 0; j < v; ++j) {
            probs[k * v + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - log_z));
        }
    }
    out->value[0] = static_cast<T>(total / static_cast<double>(m));
    if (out->requires_grad) {
        out->backward = [v, m, probs = std::move(probs),
                         targets = std::vector<Target>(targets.begin(), targets.end())](Node<T>& self) {
            Node<T>& L = *self.inputs[0];
            const T g = self.grad[0] / static_cast<T>(m);
            for (std::size_t k = 0; k < m; ++k) {
                T* dl = L.grad.data() + targets[k].position * v;
                const T* p = probs.data() + k * v;
                for (std::size_t j = 0; j < v; ++j) {
                    dl[j] += g * p[j];
                }
                dl[static_cast<std::size_t>(targets[k].id)] -= g;
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw Error("dropout probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (mode == Mode::eval || p == 0.0) {
        return x;
    }
    auto out = make_node<T>(x.shape(), "dropout", {x.node_ptr()});
    std::vector<T> keep(x.numel());
    const T survivor = static_cast<T>(1.0 / (1.0 - p));
    const auto xv = x.data();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        keep[i] = rng.uniform() < p ? T(0) : survivor;
        out->value[i] = xv[i] * keep[i];
    }
    if (out->requires_grad) {
        out->backward = [keep = std::move(keep)](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (std::size_t i = 0; i < keep.size(); ++i) {
                X.grad[i] += self.grad[i] * keep[i];
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
    require_matrix(x, "slice");
    const std::size_t cols = x.dim(1);
    if (row0 + nrows > x.dim(0) || col0 + ncols > cols || nrows == 0 || ncols == 0) {
        throw ShapeError("slice out of bounds for " + to_string(x.shape()));
    }
    auto out = make_node<T>({nrows, ncols}, "slice", {x.node_ptr()});
    const auto xv = x.data();
    for (std::size_t r = 0; r < nrows; ++r) {
        std::copy_n(xv.data() + (row0 + r) * cols + col0, ncols, out->value.data() + r * ncols);
    }
    if (out->requires_grad) {
        out->backward = [row0, nrows, col0, ncols, cols](Node<T>& self) {
            Node<T>& X = *self.inputs[0];
            for (std::size_t r = 0; r < nrows; ++r) {
                T* dst = X.grad.data() + (row0 + r) * cols + col0;
                const T* src = self.grad.data() + r * ncols;
                for (std::size_t c = 0; c < ncols; ++c) {
                    dst[c] += src[c];
                }
            }
        };
    }
    return finish(out);
}

namespace {

template <typename T>
NodePtr<T> make_concat_node(Shape shape, const char* op, std::span<const Tensor<T>> parts) {
    auto node = std::make_shared<Node<T>>();
    node->value.assign(numel(shape), T(0));
    node->shape = std::move(shape);
    node->op = op;
    for (const auto& p : parts) {
        node->requires_grad = node->requires_grad || p.requires_grad();
    }
    if (node->requires_grad) {
        for (const auto& p : parts) {
            node->inputs.push_back(p.node_ptr());
        }
    }
    return node;
}

}  // namespace

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no parts");
    }
    const std::size_t rows = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw ShapeError("concat_cols: row counts differ");
        }
        total += p.dim(1);
    }
    auto out = make_concat_node<T>({rows, total}, "concat_cols", parts);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(p.data().data() + r * c, c, out->value.data() + r * total + off);
        }
        offsets.push_back(off);
        off += c;
    }
    if (out->requires_grad) {
        out->backward = [rows, total, offsets = std::move(offsets)](Node<T>& self) {
            for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                Node<T>& P = *self.inputs[i];
                if (!P.requires_grad) {
                    continue;
                }
                const std::size_t c = P.shape[1];
                for (std::size_t r = 0; r < rows; ++r) {
                    const T* src = self.grad.data() + r * total + offsets[i];
                    T* dst = P.grad.data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        dst[j] += src[j];
                    }
                }
            }
        };
    }
    return finish(out);
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows: no parts");
    }
    const std::size_t cols = parts[0].dim(1);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_rows");
        if (p.dim(1) != cols) {
            throw ShapeError("concat_rows: column counts differ");
        }
        total += p.dim(0);
    }
    auto out = make_concat_node<T>({total, cols}, "concat_rows", parts);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out->value.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
    }
    if (out->requires_grad) {
        out->backward = [](Node<T>& self) {
            std::size_t offset = 0;
            for (auto& in : self.inputs) {
                Node<T>& P = *in;
                if (P.requires_grad) {
                    for (std::size_t j = 0; j < P.value.size(); ++j) {
                        P.grad[j] += self.grad[offset + j];
                    }
                }
                offset += P.value.size();
            }
        };
    }
    return finish(out);
}

#define MLMKIT_INSTANTIATE_OPS(T)                                                                            \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> add_constant(const Tensor<T>&, std::span<const T>);                                   \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
    template Tensor<T> scale(const Tensor<T>&, T);                                                           \
    template Tensor<T> sum(const Tensor<T>&);                                                                \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                                       \
    template Tensor<T> gelu(const Tensor<T>&);                                                               \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);             \
    template Tensor<T> embedding_gather(const Tensor<T>&, std::span<const std::int32_t>);                    \
    template Tensor<T> cross_entropy_masked(const Tensor<T>&, std::span<const Target>);                      \
    template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&);                                        \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);          \
    template Tensor<T> concat_cols(std::span<const Tensor<T>>);                                              \
    template Tensor<T> concat_rows(std::span<const Tensor<T>>);

MLMKIT_INSTANTIATE_OPS(float)
MLMKIT_INSTANTIATE_OPS(double)

#undef MLMKIT_INSTANTIATE_OPS

}  // namespace mlmkit::num
