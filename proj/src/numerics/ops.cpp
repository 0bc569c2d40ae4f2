// SPDX-License-Identifier: Apache-2.0
#include "layerlens/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace layerlens::numerics {

namespace {

template <typename T>
void require_matrix(const BasicTensor<T>& b, const char* op) {
    if (b.rank() != 2) {
        throw ShapeError(std::string(op) + ": right operand must be a matrix, got " + shape_to_string(b.dims()));
    }
}

template <typename T>
void require_rows(const BasicTensor<T>& a, const char* op) {
    if (a.rank() == 0 || a.empty()) {
        throw ShapeError(std::string(op) + ": left operand must have rank >= 1");
    }
}

std::string mismatch(const char* op, const Shape& a, const Shape& b) {
    return std::string(op) + ": dimension mismatch between " + shape_to_string(a) + " and " + shape_to_string(b);
}

Shape with_last(Shape dims, std::size_t last) {
    dims.back() = last;
    return dims;
}

struct AxisLayout {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisLayout axis_layout(const Shape& dims, std::size_t axis) {
    if (axis >= dims.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(dims));
    }
    AxisLayout layout;
    for (std::size_t i = 0; i < axis; ++i) layout.outer *= dims[i];
    layout.length = dims[axis];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) layout.inner *= dims[i];
    return layout;
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rows(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t k = a.cols();
    if (k != b.dim(0)) throw ShapeError(mismatch("matmul", a.dims(), b.dims()));
    const std::size_t m = a.rows();
    const std::size_t n = b.dim(1);
    BasicTensor<T> c(with_last(a.dims(), n));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
BasicTensor<T> matmul_transposed_b(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rows(a, "matmul_transposed_b");
    require_matrix(b, "matmul_transposed_b");
    const std::size_t n = a.cols();
    if (n != b.dim(1)) throw ShapeError(mismatch("matmul_transposed_b", a.dims(), b.dims()));
    const std::size_t m = a.rows();
    const std::size_t k = b.dim(0);
    BasicTensor<T> c(with_last(a.dims(), k));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * n;
        for (std::size_t j = 0; j < k; ++j) {
            const T* brow = pb + j * n;
            T acc = 0;
            for (std::size_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
            pc[i * k + j] = acc;
        }
    }
    return c;
}

template <typename T>
BasicTensor<T> matmul_transposed_a(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rows(a, "matmul_transposed_a");
    require_rows(b, "matmul_transposed_a");
    if (a.rows() != b.rows()) throw ShapeError(mismatch("matmul_transposed_a", a.dims(), b.dims()));
    const std::size_t rows = a.rows();
    const std::size_t m = a.cols();
    const std::size_t n = b.cols();
    BasicTensor<T> c(Shape{m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* pc = c.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* arow = pa + r * m;
        const T* brow = pb + r * n;
        for (std::size_t p = 0; p < m; ++p) {
            const T av = arow[p];
            T* crow = pc + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

template <typename T>
void add_row_bias(BasicTensor<T>& x, const BasicTensor<T>& bias) {
    if (bias.size() != x.cols()) throw ShapeError(mismatch("add_row_bias", x.dims(), bias.dims()));
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
    }
}

template <typename T>
BasicTensor<T> sum_rows(const BasicTensor<T>& dy) {
    BasicTensor<T> out(Shape{dy.cols()});
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto row = dy.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
    }
    return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& x, const BasicTensor<T>& y) {
    if (!x.same_shape(y)) throw ShapeError(mismatch("add", x.dims(), y.dims()));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    BasicTensor<T> y = x;
    for (auto& v : y.data()) {
        v = T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
    }
    return y;
}

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    if (!x.same_shape(dy)) throw ShapeError(mismatch("gelu_backward", x.dims(), dy.dims()));
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    BasicTensor<T> dx(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        dx[i] = dy[i] * (cdf + v * pdf);
    }
    return dx;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
    const AxisLayout lay = axis_layout(x.dims(), axis);
    BasicTensor<T> y(x.dims());
    for (std::size_t o = 0; o < lay.outer; ++o) {
        for (std::size_t in = 0; in < lay.inner; ++in) {
            const std::size_t base = o * lay.length * lay.inner + in;
            T max_v = -std::numeric_limits<T>::infinity();
            for (std::size_t i = 0; i < lay.length; ++i) max_v = std::max(max_v, x[base + i * lay.inner]);
            double sum = 0.0;
            for (std::size_t i = 0; i < lay.length; ++i) {
                const T e = std::exp(x[base + i * lay.inner] - max_v);
                y[base + i * lay.inner] = e;
                sum += static_cast<double>(e);
            }
            const T inv = static_cast<T>(1.0 / sum);
            for (std::size_t i = 0; i < lay.length; ++i) y[base + i * lay.inner] *= inv;
        }
    }
    return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy, std::size_t axis) {
    if (!y.same_shape(dy)) throw ShapeError(mismatch("softmax_backward", y.dims(), dy.dims()));
    const AxisLayout lay = axis_layout(y.dims(), axis);
    BasicTensor<T> dx(y.dims());
    for (std::size_t o = 0; o < lay.outer; ++o) {
        for (std::size_t in = 0; in < lay.inner; ++in) {
            const std::size_t base = o * lay.length * lay.inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < lay.length; ++i) {
                const std::size_t idx = base + i * lay.inner;
                dot += static_cast<double>(y[idx]) * static_cast<double>(dy[idx]);
            }
            const T d = static_cast<T>(dot);
            for (std::size_t i = 0; i < lay.length; ++i) {
                const std::size_t idx = base + i * lay.inner;
                dx[idx] = y[idx] * (dy[idx] - d);
            }
        }
    }
    return dx;
}

template <typename T>
LayerNormResult<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                              T eps) {
    const std::size_t d = x.cols();
    if (gain.size() != d || bias.size() != d) {
        throw ShapeError(mismatch("layer_norm", x.dims(), gain.dims()));
    }
    if (!(eps >= T(0))) throw ShapeError("layer_norm: eps must be non-negative");
    LayerNormResult<T> res{BasicTensor<T>(x.dims()), BasicTensor<T>(x.dims()), std::vector<T>(x.rows())};
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        double mean = 0.0;
        for (T v : in) mean += static_cast<double>(v);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (T v : in) {
            const double c = static_cast<double>(v) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        res.inverse_std[r] = inv_std;
        auto xhat = res.normalized.row(r);
        auto out = res.output.row(r);
        const T mean_t = static_cast<T>(mean);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (in[j] - mean_t) * inv_std;
            out[j] = gain[j] * xhat[j] + bias[j];
        }
    }
    return res;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& dy, const LayerNormResult<T>& forward,
                                      const BasicTensor<T>& gain) {
    if (!dy.same_shape(forward.normalized)) {
        throw ShapeError(mismatch("layer_norm_backward", dy.dims(), forward.normalized.dims()));
    }
    const std::size_t d = dy.cols();
    LayerNormGrads<T> g{BasicTensor<T>(dy.dims()), BasicTensor<T>(Shape{d}), BasicTensor<T>(Shape{d})};
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto dyr = dy.row(r);
        auto xhat = forward.normalized.row(r);
        double mean_dxhat = 0.0;
        double mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(dyr[j]) * static_cast<double>(gain[j]);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * static_cast<double>(xhat[j]);
            g.gain[j] += dyr[j] * xhat[j];
            g.bias[j] += dyr[j];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        const T a = static_cast<T>(mean_dxhat);
        const T b = static_cast<T>(mean_dxhat_xhat);
        auto dx = g.input.row(r);
        const T inv_std = forward.inverse_std[r];
        for (std::size_t j = 0; j < d; ++j) {
            dx[j] = inv_std * (dyr[j] * gain[j] - a - xhat[j] * b);
        }
    }
    return g;
}

template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                                            std::span<const std::uint8_t> row_mask) {
    const std::size_t rows = logits.rows();
    const std::size_t n_classes = logits.cols();
    if (targets.size() != rows || row_mask.size() != rows) {
        throw ShapeError("softmax_cross_entropy: expected " + std::to_string(rows) + " targets and mask entries");
    }
    CrossEntropyResult<T> res;
    res.dlogits = BasicTensor<T>(logits.dims());
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_mask[r] == 0) continue;
        if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= n_classes) {
            throw RangeError("softmax_cross_entropy: target " + std::to_string(targets[r]) + " out of range");
        }
        ++res.counted;
    }
    if (res.counted == 0) return res;

    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(res.counted);
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_mask[r] == 0) continue;
        auto row = logits.row(r);
        double max_v = -std::numeric_limits<double>::infinity();
        for (T v : row) max_v = std::max(max_v, static_cast<double>(v));
        double sum = 0.0;
        for (T v : row) sum += std::exp(static_cast<double>(v) - max_v);
        const double lse = max_v + std::log(sum);
        const auto target = static_cast<std::size_t>(targets[r]);
        total += lse - static_cast<double>(row[target]);
        auto drow = res.dlogits.row(r);
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double p = std::exp(static_cast<double>(row[c]) - lse);
            drow[c] = static_cast<T>((p - (c == target ? 1.0 : 0.0)) * scale);
        }
    }
    res.loss = static_cast<T>(total * scale);
    return res;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

#define LAYERLENS_INSTANTIATE_OPS(T)                                                                          \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> matmul_transposed_b(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> matmul_transposed_a(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template void add_row_bias(BasicTensor<T>&, const BasicTensor<T>&);                                      \
    template BasicTensor<T> sum_rows(const BasicTensor<T>&);                                                 \
    template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                                       \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> gelu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                                     \
    template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t);     \
    template LayerNormResult<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                           const BasicTensor<T>&, T);                                        \
    template LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>&, const LayerNormResult<T>&,         \
                                                   const BasicTensor<T>&);                                   \
    template CrossEntropyResult<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const std::int32_t>, \
                                                         std::span<const std::uint8_t>);                     \
    template std::size_t argmax(std::span<const T>);

LAYERLENS_INSTANTIATE_OPS(float)
LAYERLENS_INSTANTIATE_OPS(double)

#undef LAYERLENS_INSTANTIATE_OPS

}  // namespace layerlens::numerics
