// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "layerlens/model/model.hpp"
#include "layerlens/numerics/ops.hpp"
#include "layerlens/numerics/rng.hpp"
#include "layerlens/tokens.hpp"

namespace layerlens::model {

/// Token ids padded with [PAD] to the longest sequence, row-major [batch x seq_len].
struct Batch {
    std::size_t batch_size = 0;
    std::size_t seq_len = 0;
    std::vector<TokenId> ids;

    static Batch from_sequences(std::span<const TokenSequence> sequences);

    TokenId at(std::size_t b, std::size_t s) const { return ids[b * seq_len + s]; }
    std::size_t rows() const { return batch_size * seq_len; }
};

/// Per-layer hidden states; entry 0 is the normalized embedding output,
/// entry i the output of encoder step i. Every entry is [batch x seq x d_model].
template <typename T>
struct HiddenStateStack {
    std::vector<BasicTensor<T>> layers;

    std::size_t size() const { return layers.size(); }
    const BasicTensor<T>& final_layer() const { return layers.back(); }
};

/// Activations one encoder step keeps for its backward pass. Dropout masks
/// are empty in eval mode; otherwise they hold 0 or 1/(1-p).
template <typename T>
struct LayerTrace {
    BasicTensor<T> input;                  // [N x d]
    BasicTensor<T> query, key, value;      // [N x d]
    BasicTensor<T> attention_probs;        // [b x heads x s x s], pre-dropout
    BasicTensor<T> attention_dropout;      // same dims as attention_probs
    BasicTensor<T> context;                // [N x d]
    BasicTensor<T> attention_out_dropout;  // [N x d]
    numerics::LayerNormResult<T> attention_norm;
    BasicTensor<T> ffn_pre;                // [N x d_ff], pre-GELU
    BasicTensor<T> ffn_act;                // [N x d_ff]
    BasicTensor<T> ffn_out_dropout;        // [N x d]
    numerics::LayerNormResult<T> ffn_norm;
};

template <typename T>
struct EncoderTrace {
    Batch batch;
    numerics::LayerNormResult<T> embedding_norm;
    BasicTensor<T> embedding_dropout;
    std::vector<LayerTrace<T>> steps;
    HiddenStateStack<T> stack;
};

template <typename T>
struct MlmTrace {
    BasicTensor<T> input;    // [N x d]
    BasicTensor<T> pre_act;  // [N x d]
    BasicTensor<T> act;
    numerics::LayerNormResult<T> norm;
    BasicTensor<T> logits;   // [... x vocab]
};

/// Throws RangeError for ids outside the vocabulary or over-long batches.
template <typename T>
void validate_batch(const BasicModel<T>& model, const Batch& batch);

/// Runs the encoder and keeps everything needed by encoder_backward. Dropout
/// applies only when `train_mode` is set; it then requires `rng`.
template <typename T>
EncoderTrace<T> encode(const BasicModel<T>& model, const Batch& batch, bool train_mode,
                       numerics::Rng* rng = nullptr);

template <typename T>
HiddenStateStack<T> forward_all_layers(const BasicModel<T>& model, const Batch& batch, bool train_mode,
                                       numerics::Rng* rng = nullptr);

/// One eval-mode encoder step on a [batch x seq x d_model] hidden tensor.
template <typename T>
BasicTensor<T> apply_layer(const ModelConfig& config, const EncoderLayerWeights<T>& layer, const Batch& batch,
                           const BasicTensor<T>& hidden);

/// Accumulates parameter gradients into `grads` given dL/d(final hidden).
/// `grads` must be shaped like `model` (BasicModel::zeros(model.config())).
template <typename T>
void encoder_backward(const BasicModel<T>& model, const EncoderTrace<T>& trace, const BasicTensor<T>& d_final,
                      BasicModel<T>& grads);

template <typename T>
MlmTrace<T> mlm_forward(const BasicModel<T>& model, const BasicTensor<T>& hidden);

/// The probe decoder: MLM head logits for any hidden tensor [... x d_model].
template <typename T>
BasicTensor<T> mlm_decode(const BasicModel<T>& model, const BasicTensor<T>& hidden);

/// Returns dL/d(hidden) and accumulates head gradients into `grads`.
template <typename T>
BasicTensor<T> mlm_backward(const BasicModel<T>& model, const MlmTrace<T>& trace, const BasicTensor<T>& dlogits,
                            BasicModel<T>& grads);

/// Per-position argmax over the last axis, lowest id on ties.
template <typename T>
std::vector<TokenId> argmax_tokens(const BasicTensor<T>& logits);

}  // namespace layerlens::model
