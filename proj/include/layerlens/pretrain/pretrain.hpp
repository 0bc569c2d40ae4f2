// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "layerlens/model/forward.hpp"
#include "layerlens/pretrain/masking.hpp"

namespace layerlens::pretrain {

struct PretrainConfig {
    std::size_t steps = 3000;
    std::size_t batch_size = 32;
    double lr = 2e-3;
    double warmup_fraction = 0.1;
    std::uint64_t seed = 1;
    std::size_t eval_every = 500;

    void validate() const;
};

/// One record of the metrics stream.
struct EvalPoint {
    std::size_t step = 0;
    double loss = 0.0;        // masked-LM loss on the held-out set
    double masked_acc = 0.0;  // accuracy over selected positions
    double recon_acc = 0.0;   // unmasked final-layer reconstruction
};

/// A masked batch, flattened row-major alongside the padded inputs.
struct MaskedBatch {
    model::Batch inputs;
    TokenSequence targets;
    std::vector<std::uint8_t> label_mask;
};

MaskedBatch make_masked_batch(std::span<const TokenSequence> sequences, const MaskingPolicy& policy,
                              std::size_t vocab_size, numerics::Rng& rng);

/// MLM loss of `model` on `batch`. When `grads` is given the gradients of the
/// loss are accumulated into it.
template <typename T>
T mlm_batch_loss(const model::BasicModel<T>& model, const MaskedBatch& batch, bool train_mode, numerics::Rng* rng,
                 model::BasicModel<T>* grads = nullptr);

struct MaskedEval {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t n_labeled = 0;
};

/// Pooled accuracy and mean loss over all labeled positions of the batches.
MaskedEval evaluate_masked(const model::Model& model, std::span<const MaskedBatch> batches);

/// Feed unmasked sequences, decode the final layer, score against the input.
/// Per-sentence accuracy averaged over sentences; [PAD] never scored,
/// [CLS]/[SEP] only with `include_special`.
double reconstruction_accuracy(const model::Model& model, std::span<const TokenSequence> sequences,
                               bool include_special = false, std::size_t batch_size = 64);

struct PretrainResult {
    model::Model model;
    std::vector<EvalPoint> history;
};

/// Masked-LM training with Adam and linear warmup/decay. Evaluates at step 0,
/// every `eval_every` steps, and after the last step. Deterministic in the seed.
/// Throws NumericError with the step number if the loss stops being finite.
PretrainResult pretrain(model::Model model, std::span<const TokenSequence> corpus,
                        std::span<const TokenSequence> eval_set, const PretrainConfig& config,
                        const MaskingPolicy& policy, const std::function<void(const EvalPoint&)>& on_eval = {});

}  // namespace layerlens::pretrain
