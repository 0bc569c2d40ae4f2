// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layerlens/numerics/tensor.hpp"

// Dense primitives with explicit backward passes. Every reduction runs in a
// fixed left-to-right order so results are bit-reproducible.
//
// Matrix routines accept a left operand of any rank >= 1 and treat all
// leading axes as rows; the right operand is always a matrix.

namespace layerlens::numerics {

/// a[...xk] * b[kxn] -> [...xn]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a[...xn] * b[kxn]^T -> [...xk]
template <typename T>
BasicTensor<T> matmul_transposed_b(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// a[...xm]^T * b[...xn] -> [mxn]; both operands must have the same row count.
template <typename T>
BasicTensor<T> matmul_transposed_a(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x[r][c] += bias[c]
template <typename T>
void add_row_bias(BasicTensor<T>& x, const BasicTensor<T>& bias);

/// Column sums of dy, shaped [cols]. The gradient of add_row_bias w.r.t. bias.
template <typename T>
BasicTensor<T> sum_rows(const BasicTensor<T>& dy);

template <typename T>
void add_inplace(BasicTensor<T>& x, const BasicTensor<T>& y);

/// x * Phi(x) with Phi evaluated through erf.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

/// Given y = softmax(x, axis) and dL/dy, returns dL/dx.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy, std::size_t axis);

template <typename T>
struct LayerNormResult {
    BasicTensor<T> output;
    BasicTensor<T> normalized;       // pre-affine x-hat
    std::vector<T> inverse_std;      // one per row
};

template <typename T>
struct LayerNormGrads {
    BasicTensor<T> input;
    BasicTensor<T> gain;
    BasicTensor<T> bias;
};

/// Normalizes over the last axis with population variance, then applies gain/bias.
template <typename T>
LayerNormResult<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                              T eps);

template <typename T>
LayerNormGrads<T> layer_norm_backward(const BasicTensor<T>& dy, const LayerNormResult<T>& forward,
                                      const BasicTensor<T>& gain);

template <typename T>
struct CrossEntropyResult {
    T loss = 0;                 // mean over counted rows; 0 when none counted
    std::size_t counted = 0;
    BasicTensor<T> dlogits;     // zero on rows that were not counted
};

/// Mean softmax cross-entropy of logits[N x C] against targets, over rows with
/// row_mask set. Accumulates in double.
template <typename T>
CrossEntropyResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> targets,
                                            std::span<const std::uint8_t> row_mask);

/// Index of the largest element; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

}  // namespace layerlens::numerics
